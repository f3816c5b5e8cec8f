//! Verification scoring: cosine scores, equal error rate, cross-genre trial
//! construction and genre-by-genre EER matrices.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{dot, mean_of, norm};
use crate::rng::SeededRng;

/// Anything that maps an input vector to an embedding.
pub trait Embedder {
    fn embed(&self, x: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> Embedder for F {
    fn embed(&self, x: &[f64]) -> Vec<f64> {
        self(x)
    }
}

/// Scores the raw vectors themselves.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawVectors;

impl Embedder for RawVectors {
    fn embed(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg("cosine of vectors with different dimensions"));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::arg("cosine score of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// One operating point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    /// Accept when `score >= threshold`; `+inf` rejects everything.
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

fn check_labels(scores: &[f64], targets: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != targets.len() {
        return Err(Error::arg(format!(
            "{} scores but {} labels",
            scores.len(),
            targets.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::arg(format!("score {i} is not finite")));
    }
    let n_t = targets.iter().filter(|&&t| t).count();
    let n_n = targets.len() - n_t;
    if n_t == 0 || n_n == 0 {
        return Err(Error::arg(format!(
            "EER needs both classes (got {n_t} targets and {n_n} non-targets)"
        )));
    }
    Ok((n_t, n_n))
}

/// False-accept and false-reject rates at every distinct score, ascending,
/// followed by the reject-all point at `+inf`.
pub fn error_rates(scores: &[f64], targets: &[bool]) -> Result<Vec<ErrorRates>> {
    let (n_t, n_n) = check_labels(scores, targets)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // everything at or above the current threshold is accepted
    let (mut rejected_t, mut rejected_n) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        points.push(ErrorRates {
            threshold: t,
            far: (n_n - rejected_n) as f64 / n_n as f64,
            frr: rejected_t as f64 / n_t as f64,
        });
        while i < order.len() && scores[order[i]] == t {
            if targets[order[i]] {
                rejected_t += 1;
            } else {
                rejected_n += 1;
            }
            i += 1;
        }
    }
    points.push(ErrorRates {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

/// Equal error rate in percent.
///
/// Uses the sweep of [`error_rates`] (ties at the threshold are accepted)
/// and interpolates linearly between the two adjacent points where
/// `FAR - FRR` changes sign.
pub fn compute_eer(scores: &[f64], targets: &[bool]) -> Result<f64> {
    Ok(100.0 * eer_from_points(&error_rates(scores, targets)?))
}

/// Crossing of a monotone (FAR falling, FRR rising) sweep, as a fraction.
pub fn eer_from_points(points: &[ErrorRates]) -> f64 {
    let mut prev = points[0];
    for &p in points {
        let d = p.far - p.frr;
        if d <= 0.0 {
            if d == 0.0 {
                return p.far;
            }
            let d_prev = prev.far - prev.frr;
            let w = d_prev / (d_prev - d);
            return prev.far + w * (p.far - prev.far);
        }
        prev = p;
    }
    // unreachable for a complete sweep: the last point has FAR 0, FRR 1
    prev.far
}

/// An enrollment set scored against one test utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll_utts: Vec<String>,
    pub test_utt: String,
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialList {
    pub trials: Vec<Trial>,
    /// Enrolled speakers that had no test utterance left after enrollment.
    pub speakers_without_targets: Vec<String>,
}

impl TrialList {
    pub fn num_targets(&self) -> usize {
        self.trials.iter().filter(|t| t.target).count()
    }

    pub fn num_nontargets(&self) -> usize {
        self.trials.len() - self.num_targets()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOptions {
    pub enroll_k: usize,
    pub max_nontargets_per_test: usize,
    pub seed: u64,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            enroll_k: 3,
            max_nontargets_per_test: 50,
            seed: 0,
        }
    }
}

/// Enrollment in `enroll_genre`, tests in `test_genre`.
///
/// Speakers are visited in sorted order. Each speaker with at least
/// `enroll_k` utterances in the enrollment genre and at least one in the
/// test genre is enrolled with `enroll_k` random utterances; its test-genre
/// utterances other than the enrollment ones are target trials, and a
/// random sample of up to `max_nontargets_per_test` test-genre utterances
/// of other speakers gives the non-target trials.
pub fn build_cross_genre_trials(
    ds: &Dataset,
    enroll_genre: &str,
    test_genre: &str,
    opts: &TrialOptions,
) -> Result<TrialList> {
    if opts.enroll_k == 0 {
        return Err(Error::arg("enroll_k must be positive"));
    }
    if opts.max_nontargets_per_test == 0 {
        return Err(Error::arg("max_nontargets_per_test must be positive"));
    }
    for g in [enroll_genre, test_genre] {
        if !ds.has_genre(g) {
            return Err(Error::TrialConstruction(format!("genre `{g}` is not in the dataset")));
        }
    }
    let enroll_pop = ds.speakers_in_genre(enroll_genre);
    let test_pop = ds.speakers_in_genre(test_genre);
    let eligible: Vec<(&str, &Vec<usize>)> = enroll_pop
        .iter()
        .filter(|(s, pos)| pos.len() >= opts.enroll_k && test_pop.contains_key(*s))
        .map(|(s, pos)| (*s, pos))
        .collect();
    if eligible.is_empty() || test_pop.len() < 2 {
        return Err(Error::TrialConstruction(format!(
            "enroll `{enroll_genre}` / test `{test_genre}`: {} speakers with >= {} enrollment utterances, \
             {} speakers with test utterances, {} eligible",
            enroll_pop.values().filter(|p| p.len() >= opts.enroll_k).count(),
            opts.enroll_k,
            test_pop.len(),
            eligible.len()
        )));
    }

    let records = ds.records();
    let utt = |i: usize| records[i].utt_id.clone();
    let mut rng = SeededRng::new(opts.seed);
    let mut out = TrialList::default();
    for (speaker, enroll_pos) in eligible {
        let mut enroll: Vec<usize> = rng
            .choose(enroll_pos.len(), opts.enroll_k)
            .into_iter()
            .map(|k| enroll_pos[k])
            .collect();
        enroll.sort_unstable();
        let enroll_utts: Vec<String> = enroll.iter().map(|&i| utt(i)).collect();

        let targets: Vec<usize> = test_pop[speaker]
            .iter()
            .copied()
            .filter(|i| !enroll.contains(i))
            .collect();
        if targets.is_empty() {
            out.speakers_without_targets.push(speaker.into());
        }
        let pool: Vec<usize> = test_pop
            .iter()
            .filter(|(s, _)| **s != speaker)
            .flat_map(|(_, pos)| pos.iter().copied())
            .collect();
        let take = pool.len().min(opts.max_nontargets_per_test);
        let mut nontargets: Vec<usize> = rng.choose(pool.len(), take).into_iter().map(|k| pool[k]).collect();
        nontargets.sort_unstable();

        for (positions, target) in [(targets, true), (nontargets, false)] {
            for i in positions {
                out.trials.push(Trial {
                    enroll_utts: enroll_utts.clone(),
                    test_utt: utt(i),
                    target,
                });
            }
        }
    }
    Ok(out)
}

/// Embeddings for every record of a dataset, looked up by utterance id.
pub struct EmbeddingTable {
    index: BTreeMap<String, usize>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(ds: &Dataset, embedder: &impl Embedder) -> Self {
        let index = ds
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.utt_id.clone(), i))
            .collect();
        let vectors = ds.records().iter().map(|r| embedder.embed(&r.vector)).collect();
        Self { index, vectors }
    }

    pub fn get(&self, utt_id: &str) -> Result<&[f64]> {
        self.index
            .get(utt_id)
            .map(|&i| self.vectors[i].as_slice())
            .ok_or_else(|| Error::arg(format!("unknown utterance `{utt_id}`")))
    }

    /// Cosine score between the mean enrollment embedding and the test embedding.
    pub fn score(&self, trial: &Trial) -> Result<f64> {
        let enroll: Vec<&[f64]> = trial
            .enroll_utts
            .iter()
            .map(|u| self.get(u))
            .collect::<Result<_>>()?;
        cosine_score(&mean_of(&enroll), self.get(&trial.test_utt)?)
    }

    pub fn score_all(&self, trials: &[Trial]) -> Result<(Vec<f64>, Vec<bool>)> {
        let scores = trials.iter().map(|t| self.score(t)).collect::<Result<_>>()?;
        Ok((scores, trials.iter().map(|t| t.target).collect()))
    }
}

/// EER (percent) of a trial list under the given embeddings.
pub fn trial_eer(table: &EmbeddingTable, trials: &TrialList) -> Result<f64> {
    let (scores, targets) = table.score_all(&trials.trials)?;
    compute_eer(&scores, &targets)
}

/// Genre-by-genre EERs: rows are enrollment genres, columns test genres,
/// plus a final "all" column pooling each row's trials over every test genre.
#[derive(Debug, Clone, PartialEq)]
pub struct EerMatrix {
    pub genres: Vec<String>,
    /// `genres.len()` rows of `genres.len() + 1` EER percentages.
    pub cells: Vec<Vec<f64>>,
}

impl EerMatrix {
    pub fn cell(&self, enroll: usize, test: usize) -> f64 {
        self.cells[enroll][test]
    }

    /// Mean over cells whose enrollment and test genres differ.
    pub fn mean_off_diagonal(&self) -> f64 {
        let g = self.genres.len();
        if g < 2 {
            return f64::NAN;
        }
        let sum: f64 = (0..g)
            .flat_map(|r| (0..g).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| self.cells[r][c])
            .sum();
        sum / (g * (g - 1)) as f64
    }

    pub fn mean_diagonal(&self) -> f64 {
        let g = self.genres.len();
        (0..g).map(|i| self.cells[i][i]).sum::<f64>() / g as f64
    }
}

/// Trial lists for every `(enroll, test)` cell of a matrix over `genres`.
pub fn matrix_trials(ds: &Dataset, genres: &[String], opts: &TrialOptions) -> Result<Vec<Vec<TrialList>>> {
    genres
        .iter()
        .map(|r| {
            genres
                .iter()
                .map(|c| build_cross_genre_trials(ds, r, c, opts))
                .collect()
        })
        .collect()
}

/// EER matrix from prebuilt per-cell trial lists (see [`matrix_trials`]).
pub fn eer_matrix_from_trials(
    table: &EmbeddingTable,
    genres: &[String],
    trials: &[Vec<TrialList>],
) -> Result<EerMatrix> {
    let mut cells = Vec::with_capacity(genres.len());
    for (r, row) in trials.iter().enumerate() {
        let mut out_row = Vec::with_capacity(genres.len() + 1);
        let (mut pooled_s, mut pooled_t) = (Vec::new(), Vec::new());
        for (c, tl) in row.iter().enumerate() {
            let (s, t) = table.score_all(&tl.trials)?;
            let eer = compute_eer(&s, &t).map_err(|e| {
                Error::TrialConstruction(format!("cell ({}, {}): {e}", genres[r], genres[c]))
            })?;
            out_row.push(eer);
            pooled_s.extend(s);
            pooled_t.extend(t);
        }
        out_row.push(compute_eer(&pooled_s, &pooled_t)?);
        cells.push(out_row);
    }
    Ok(EerMatrix {
        genres: genres.to_vec(),
        cells,
    })
}

/// Cross-genre EER matrix of `embedder` on `ds`.
pub fn cross_genre_matrix(
    embedder: &impl Embedder,
    ds: &Dataset,
    genres: &[String],
    opts: &TrialOptions,
) -> Result<EerMatrix> {
    if genres.is_empty() {
        return Err(Error::arg("no genres requested"));
    }
    for g in genres {
        if !ds.has_genre(g) {
            return Err(Error::TrialConstruction(format!("genre `{g}` is not in the dataset")));
        }
    }
    let trials = matrix_trials(ds, genres, opts)?;
    let table = EmbeddingTable::new(ds, embedder);
    eer_matrix_from_trials(&table, genres, &trials)
}
