//! Distribution-alignment regularizers with analytic gradients, and the
//! combined objective `classification + lambda * alignment`.
//!
//! The vector-level functions ([`coral_loss`], [`mmd_loss`]) take the two
//! genre populations directly and return a [`PairLoss`]; the batch-level
//! functions key gradients by utterance id.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::{BatchKind, LossOutput, MiniBatch};
use crate::error::{Error, Result};
use crate::matrix::{mean_of, sq_dist, Mat};
use crate::stats::{correlation_backward, covariance, to_correlation, within_between, CovMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DaMethod {
    None,
    Coral,
    Mmd,
    Center,
    Wda,
    Bda,
    Wbda,
}

impl DaMethod {
    pub const ALL: [DaMethod; 7] = [
        DaMethod::None,
        DaMethod::Coral,
        DaMethod::Mmd,
        DaMethod::Center,
        DaMethod::Wda,
        DaMethod::Bda,
        DaMethod::Wbda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DaMethod::None => "none",
            DaMethod::Coral => "coral",
            DaMethod::Mmd => "mmd",
            DaMethod::Center => "center",
            DaMethod::Wda => "wda",
            DaMethod::Bda => "bda",
            DaMethod::Wbda => "wbda",
        }
    }

    /// Tuned regularization weight for each method (0 for `none`).
    pub fn default_lambda(self) -> f64 {
        match self {
            DaMethod::None => 0.0,
            DaMethod::Coral => 0.1,
            DaMethod::Mmd => 0.8,
            DaMethod::Center => 0.1,
            DaMethod::Wda => 0.9,
            DaMethod::Bda => 0.03,
            DaMethod::Wbda => 0.9,
        }
    }

    /// Whether the method aligns two sampled genres per batch.
    pub fn uses_genre_pairs(self) -> bool {
        matches!(
            self,
            DaMethod::Coral | DaMethod::Mmd | DaMethod::Wda | DaMethod::Bda | DaMethod::Wbda
        )
    }

    /// Whether the method needs `S >= 2` and `M >= 2`.
    pub fn needs_class_statistics(self) -> bool {
        matches!(self, DaMethod::Wda | DaMethod::Bda | DaMethod::Wbda)
    }
}

impl fmt::Display for DaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DaMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "method",
                    format!("unknown method `{s}` (expected none, coral, mmd, center, wda, bda or wbda)"),
                )
            })
    }
}

/// RBF kernel width: a fixed value or the per-batch median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Fixed(f64),
    Median,
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Fixed(v) => write!(f, "{v}"),
            Sigma::Median => f.write_str("median"),
        }
    }
}

impl FromStr for Sigma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "median" {
            return Ok(Sigma::Median);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Sigma::Fixed(v)),
            _ => Err(Error::config("sigma", format!("`{s}` is neither `median` nor a positive number"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaConfig {
    pub method: DaMethod,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: Sigma,
}

impl DaConfig {
    /// Defaults for `method`: its tuned lambda, `alpha = beta = 0.5`, median sigma.
    pub fn for_method(method: DaMethod) -> Self {
        Self {
            method,
            lambda: method.default_lambda(),
            alpha: 0.5,
            beta: 0.5,
            sigma: Sigma::Median,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be a finite non-negative number"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be a finite non-negative number"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be a finite non-negative number"));
        }
        if let Sigma::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("sigma", "must be positive"));
            }
        }
        Ok(())
    }

    /// Lambda actually applied (`none` ignores the configured value).
    pub fn effective_lambda(&self) -> f64 {
        if self.method == DaMethod::None {
            0.0
        } else {
            self.lambda
        }
    }

    /// Within-class weight after the WDA/BDA ablations are applied.
    pub fn effective_alpha(&self) -> f64 {
        match self.method {
            DaMethod::Bda => 0.0,
            _ => self.alpha,
        }
    }

    /// Between-class weight after the WDA/BDA ablations are applied.
    pub fn effective_beta(&self) -> f64 {
        match self.method {
            DaMethod::Wda => 0.0,
            _ => self.beta,
        }
    }
}

/// Loss value with gradients for the two populations being aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub grad_i: Vec<Vec<f64>>,
    pub grad_j: Vec<Vec<f64>>,
}

impl PairLoss {
    /// Keys the gradients by the utterance ids of a genre-pair batch whose
    /// first group produced `grad_i` and second group `grad_j`.
    pub fn into_loss_output(self, batch: &MiniBatch) -> LossOutput {
        let grads = self.grad_i.into_iter().chain(self.grad_j).collect();
        LossOutput {
            value: self.value,
            grads: batch.keyed_grads(grads),
        }
    }
}

fn check_same_dim(xi: &[Vec<f64>], xj: &[Vec<f64>]) -> Result<usize> {
    let d = xi[0].len();
    for (side, xs) in [("first", xi), ("second", xj)] {
        if let Some(k) = xs.iter().position(|x| x.len() != d) {
            return Err(Error::arg(format!(
                "vector {k} of the {side} set has dimension {}, expected {d}",
                xs[k].len()
            )));
        }
    }
    Ok(d)
}

/// `(1/N) (G + Gᵀ) (x_n - center_n)` for every `n`: the gradient of a
/// function of a covariance-like matrix with partials `g`.
fn scatter_grads(g: &Mat, xs: &[Vec<f64>], centers: &[&[f64]], n_total: usize) -> Vec<Vec<f64>> {
    let sym = g.add(&g.transpose());
    let inv_n = 1.0 / n_total as f64;
    xs.iter()
        .zip(centers)
        .map(|(x, c)| {
            let diff: Vec<f64> = x.iter().zip(c.iter()).map(|(a, b)| a - b).collect();
            sym.mul_vec(&diff).into_iter().map(|v| v * inv_n).collect()
        })
        .collect()
}

/// Correlation-alignment loss `(1/(4 d^2)) ||C_i - C_j||_F^2` between the
/// covariances of two populations.
pub fn coral_loss(xi: &[Vec<f64>], xj: &[Vec<f64>]) -> Result<PairLoss> {
    if xi.len() < 2 || xj.len() < 2 {
        return Err(Error::arg(format!(
            "correlation alignment needs at least 2 vectors per side (got {} and {})",
            xi.len(),
            xj.len()
        )));
    }
    let d = check_same_dim(xi, xj)?;
    let ci = covariance(xi)?;
    let cj = covariance(xj)?;
    let scale = 1.0 / (4.0 * (d * d) as f64);
    let diff = ci.sub(&cj);
    let value = scale * diff.frob_sq();
    // dL/dC_i = 2 * scale * (C_i - C_j)
    let g = diff.scaled(2.0 * scale);
    let mu_i = mean_of(xi);
    let mu_j = mean_of(xj);
    let grad_i = scatter_grads(&g, xi, &vec![mu_i.as_slice(); xi.len()], xi.len());
    let grad_j = scatter_grads(&g.scaled(-1.0), xj, &vec![mu_j.as_slice(); xj.len()], xj.len());
    Ok(PairLoss { value, grad_i, grad_j })
}

/// `exp(-||x - y||^2 / (2 sigma^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("kernel width must be positive, got {sigma}")));
    }
    if x.len() != y.len() {
        return Err(Error::arg("kernel arguments differ in dimension"));
    }
    Ok(libm::exp(-sq_dist(x, y) / (2.0 * sigma * sigma)))
}

/// Median Euclidean distance over all unordered pairs of the union of the
/// two sets (mean of the two middle values for an even pair count).
///
/// Falls back to 1.0 when the median is zero, i.e. when most points coincide.
pub fn median_pairwise_distance(xi: &[Vec<f64>], xj: &[Vec<f64>]) -> f64 {
    let all: Vec<&Vec<f64>> = xi.iter().chain(xj).collect();
    let mut dists = Vec::with_capacity(all.len() * all.len().saturating_sub(1) / 2);
    for a in 0..all.len() {
        for b in a + 1..all.len() {
            dists.push(libm::sqrt(sq_dist(all[a], all[b])));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let med = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if med > 0.0 && med.is_finite() {
        med
    } else {
        1.0
    }
}

/// Biased squared maximum mean discrepancy with an RBF kernel.
///
/// With `N = |xi|` and `N' = |xj|`:
/// `sum k(x,x')/N^2 - 2 sum k(x,y)/(N N') + sum k(y,y')/N'^2`, self-pairs
/// included. A median width is computed from the batch and then held
/// constant for differentiation.
pub fn mmd_loss(xi: &[Vec<f64>], xj: &[Vec<f64>], sigma: Sigma) -> Result<PairLoss> {
    if xi.is_empty() || xj.is_empty() {
        return Err(Error::arg("MMD needs non-empty sets on both sides"));
    }
    check_same_dim(xi, xj)?;
    let sigma = match sigma {
        Sigma::Fixed(s) => s,
        Sigma::Median => median_pairwise_distance(xi, xj),
    };
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("kernel width must be positive, got {sigma}")));
    }
    let inv_s2 = 1.0 / (sigma * sigma);
    let (n, m) = (xi.len() as f64, xj.len() as f64);
    let (w_xx, w_xy, w_yy) = (1.0 / (n * n), 2.0 / (n * m), 1.0 / (m * m));

    let mut value = 0.0;
    let mut grad_i = vec![vec![0.0; xi[0].len()]; xi.len()];
    let mut grad_j = vec![vec![0.0; xi[0].len()]; xj.len()];

    // within-set terms: each unordered pair counted twice, diagonal once
    let mut within = |xs: &[Vec<f64>], grads: &mut [Vec<f64>], w: f64| -> Result<()> {
        for a in 0..xs.len() {
            value += w;
            for b in a + 1..xs.len() {
                let k = rbf_kernel(&xs[a], &xs[b], sigma)?;
                value += 2.0 * w * k;
                // d/dx_a of 2 w k(x_a, x_b) = -2 w k (x_a - x_b) / sigma^2
                let c = 2.0 * w * k * inv_s2;
                for t in 0..xs[a].len() {
                    let diff = xs[a][t] - xs[b][t];
                    grads[a][t] -= c * diff;
                    grads[b][t] += c * diff;
                }
            }
        }
        Ok(())
    };
    within(xi, &mut grad_i, w_xx)?;
    within(xj, &mut grad_j, w_yy)?;

    for (a, x) in xi.iter().enumerate() {
        for (b, y) in xj.iter().enumerate() {
            let k = rbf_kernel(x, y, sigma)?;
            value -= w_xy * k;
            // d/dx of -w k(x, y) = +w k (x - y) / sigma^2
            let c = w_xy * k * inv_s2;
            for t in 0..x.len() {
                let diff = x[t] - y[t];
                grad_i[a][t] += c * diff;
                grad_j[b][t] -= c * diff;
            }
        }
    }
    Ok(PairLoss { value, grad_i, grad_j })
}

fn pair_groups(batch: &MiniBatch) -> Result<(&crate::data::GenreGroup, &crate::data::GenreGroup)> {
    if batch.kind != BatchKind::GenrePair {
        return Err(Error::arg("alignment across genres needs a genre-pair batch"));
    }
    batch.check_shape()?;
    Ok((&batch.groups[0], &batch.groups[1]))
}

/// [`coral_loss`] between the two genres of a genre-pair batch.
pub fn coral_batch_loss(batch: &MiniBatch) -> Result<LossOutput> {
    let (gi, gj) = pair_groups(batch)?;
    Ok(coral_loss(&gi.vectors(), &gj.vectors())?.into_loss_output(batch))
}

/// [`mmd_loss`] between the two genres of a genre-pair batch.
pub fn mmd_batch_loss(batch: &MiniBatch, sigma: Sigma) -> Result<LossOutput> {
    let (gi, gj) = pair_groups(batch)?;
    Ok(mmd_loss(&gi.vectors(), &gj.vectors(), sigma)?.into_loss_output(batch))
}

/// Correlation-normalized within/between statistics of one genre, kept
/// around for the backward pass.
struct ClassStats {
    groups: Vec<Vec<Vec<f64>>>,
    within: Option<(CovMatrix, CovMatrix)>,
    between: Option<(CovMatrix, CovMatrix)>,
}

impl ClassStats {
    fn new(groups: Vec<Vec<Vec<f64>>>, need_within: bool, need_between: bool) -> Result<Self> {
        let (w, b) = within_between(&groups)?;
        let within = if need_within {
            let r = to_correlation(&w)?;
            Some((w, r))
        } else {
            None
        };
        let between = if need_between {
            let r = to_correlation(&b)?;
            Some((b, r))
        } else {
            None
        };
        Ok(Self { groups, within, between })
    }

    /// Input gradients given upstream gradients on the two correlation matrices.
    fn backward(&self, grad_rw: Option<&Mat>, grad_rb: Option<&Mat>) -> Result<Vec<Vec<f64>>> {
        let d = self.groups[0][0].len();
        let n_total: usize = self.groups.iter().map(Vec::len).sum();
        let flat: Vec<Vec<f64>> = self.groups.iter().flatten().cloned().collect();
        let mut grads = vec![vec![0.0; d]; n_total];
        let means: Vec<Vec<f64>> = self.groups.iter().map(|g| mean_of(g)).collect();
        if let (Some((w, _)), Some(gr)) = (&self.within, grad_rw) {
            let gc = correlation_backward(w, gr)?;
            let centers: Vec<&[f64]> = self
                .groups
                .iter()
                .zip(&means)
                .flat_map(|(g, m)| core::iter::repeat(m.as_slice()).take(g.len()))
                .collect();
            for (acc, g) in grads.iter_mut().zip(scatter_grads(&gc, &flat, &centers, n_total)) {
                add_into(acc, &g);
            }
        }
        if let (Some((b, _)), Some(gr)) = (&self.between, grad_rb) {
            let gc = correlation_backward(b, gr)?;
            // every utterance of speaker s receives (1/N)(G + Gᵀ)(mu_s - mu)
            let mu = mean_of(&flat);
            let per_speaker = scatter_grads(&gc, &means, &vec![mu.as_slice(); means.len()], n_total);
            let mut k = 0;
            for (g, ps) in self.groups.iter().zip(&per_speaker) {
                for _ in 0..g.len() {
                    add_into(&mut grads[k], ps);
                    k += 1;
                }
            }
        }
        Ok(grads)
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// Within/between distribution alignment on a genre-pair batch:
/// `alpha ||R_i^W - R_j^W||_F^2 + beta ||R_i^B - R_j^B||_F^2`, where each `R`
/// is the correlation-normalized within- or between-speaker covariance of one
/// genre. A zero weight skips that statistic entirely.
pub fn wbda_loss(batch: &MiniBatch, alpha: f64, beta: f64) -> Result<LossOutput> {
    let (gi, gj) = pair_groups(batch)?;
    if batch.speakers_per_group < 2 || batch.utts_per_speaker < 2 {
        return Err(Error::arg(format!(
            "within/between alignment needs S >= 2 and M >= 2 (got S={}, M={})",
            batch.speakers_per_group, batch.utts_per_speaker
        )));
    }
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::arg("alpha and beta must be non-negative"));
    }
    if alpha == 0.0 && beta == 0.0 {
        return Ok(LossOutput::zero_for(batch));
    }
    let (use_w, use_b) = (alpha > 0.0, beta > 0.0);
    let si = ClassStats::new(gi.speaker_vectors(), use_w, use_b)?;
    let sj = ClassStats::new(gj.speaker_vectors(), use_w, use_b)?;

    let mut value = 0.0;
    let (mut gw, mut gb) = (None, None);
    if let (Some((_, ri)), Some((_, rj))) = (&si.within, &sj.within) {
        let diff = ri.sub(rj);
        value += alpha * diff.frob_sq();
        gw = Some(diff.scaled(2.0 * alpha));
    }
    if let (Some((_, ri)), Some((_, rj))) = (&si.between, &sj.between) {
        let diff = ri.sub(rj);
        value += beta * diff.frob_sq();
        gb = Some(diff.scaled(2.0 * beta));
    }
    let grad_i = si.backward(gw.as_ref(), gb.as_ref())?;
    let neg_w = gw.map(|g| g.scaled(-1.0));
    let neg_b = gb.map(|g| g.scaled(-1.0));
    let grad_j = sj.backward(neg_w.as_ref(), neg_b.as_ref())?;
    Ok(PairLoss { value, grad_i, grad_j }.into_loss_output(batch))
}

/// Center loss `(1/N) sum_s sum_i ||x_s^i - mu_s||^2` with in-batch centers.
///
/// Utterances are grouped by speaker id across all batch groups. The
/// centers are differentiated through; because the residuals of a speaker
/// sum to zero, the gradient is `(2/N)(x - mu_s)`.
pub fn center_loss(batch: &MiniBatch) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(Error::arg("center loss of an empty batch"));
    }
    let mut by_speaker: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for (_, s, it) in batch.items() {
        by_speaker.entry(&s.speaker).or_default().push(&it.vector);
    }
    let centers: BTreeMap<&str, Vec<f64>> = by_speaker
        .iter()
        .map(|(s, xs)| (*s, mean_of(xs)))
        .collect();
    let n = batch.len() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for (_, s, it) in batch.items() {
        let mu = &centers[s.speaker.as_str()];
        value += sq_dist(&it.vector, mu);
        grads.push(
            it.vector
                .iter()
                .zip(mu)
                .map(|(x, m)| 2.0 * (x - m) / n)
                .collect(),
        );
    }
    Ok(LossOutput {
        value: value / n,
        grads: batch.keyed_grads(grads),
    })
}

/// The alignment term selected by `cfg.method` on `batch` (zero for `none`).
pub fn da_loss(cfg: &DaConfig, batch: &MiniBatch) -> Result<LossOutput> {
    match cfg.method {
        DaMethod::None => Ok(LossOutput::zero_for(batch)),
        DaMethod::Coral => coral_batch_loss(batch),
        DaMethod::Mmd => mmd_batch_loss(batch, cfg.sigma),
        DaMethod::Center => center_loss(batch),
        DaMethod::Wda | DaMethod::Bda | DaMethod::Wbda => {
            wbda_loss(batch, cfg.effective_alpha(), cfg.effective_beta())
        }
    }
}

/// `ce + lambda * da`, with gradients merged over the union of keys.
pub fn combined_loss(ce: &LossOutput, da: &LossOutput, lambda: f64) -> LossOutput {
    let mut grads: BTreeMap<String, Vec<f64>> = ce.grads.clone();
    if lambda != 0.0 {
        for (k, g) in &da.grads {
            let slot = grads.entry(k.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for (a, b) in slot.iter_mut().zip(g) {
                *a += lambda * b;
            }
        }
    }
    LossOutput {
        value: ce.value + lambda * da.value,
        grads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BatchItem, GenreGroup, SpeakerGroup, MIXED_GENRE};
    use crate::rng::SeededRng;
    use crate::stats::frob_sq_diff;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    fn random_pair_batch(rng: &mut SeededRng, s: usize, m: usize, d: usize) -> MiniBatch {
        let groups = ["a", "b"]
            .iter()
            .map(|g| GenreGroup {
                genre: (*g).into(),
                speakers: (0..s)
                    .map(|k| {
                        let center = rng.gaussian_vec(d, 1.0);
                        SpeakerGroup {
                            speaker: format!("s{k}"),
                            items: (0..m)
                                .map(|u| BatchItem {
                                    utt_id: format!("{g}-s{k}-{u}"),
                                    vector: center.iter().map(|c| c + 0.5 * rng.normal()).collect(),
                                })
                                .collect(),
                        }
                    })
                    .collect(),
            })
            .collect();
        MiniBatch {
            kind: BatchKind::GenrePair,
            groups,
            speakers_per_group: s,
            utts_per_speaker: m,
        }
    }

    #[test]
    fn coral_hand_value() {
        let out = coral_loss(&pts(&[-1.0, 1.0]), &pts(&[-2.0, 2.0])).unwrap();
        assert!((out.value - 2.25).abs() < 1e-15);
    }

    #[test]
    fn coral_zero_cases() {
        let mut rng = SeededRng::new(2);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| rng.gaussian_vec(3, 1.0)).collect();
        let same = coral_loss(&xs, &xs).unwrap();
        assert_eq!(same.value, 0.0);
        assert!(same.grad_i.iter().flatten().all(|&g| g == 0.0));
        let shifted: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|v| v + 3.0).collect()).collect();
        assert!(coral_loss(&xs, &shifted).unwrap().value.abs() < 1e-10);
        assert!(coral_loss(&xs[..1], &xs).is_err());
    }

    #[test]
    fn rbf_examples() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.7).unwrap(), 1.0);
        let v = rbf_kernel(&[0.0, 0.0], &[0.6, 0.8], 1.0).unwrap();
        assert!((v - libm::exp(-0.5)).abs() < 1e-15);
        assert!((v - 0.60653).abs() < 1e-5);
        assert!((rbf_kernel(&[0.0], &[3.0], 1e9).unwrap() - 1.0).abs() < 1e-9);
        assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
        assert!(rbf_kernel(&[0.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn mmd_examples() {
        let mut rng = SeededRng::new(4);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| rng.gaussian_vec(3, 1.0)).collect();
        let same = mmd_loss(&xs, &xs, Sigma::Median).unwrap();
        assert!(same.value.abs() < 1e-12);
        assert!(same.grad_i.iter().flatten().all(|g| g.abs() < 1e-12));

        let (x, y) = (vec![0.3, -1.0], vec![1.0, 0.5]);
        let single = mmd_loss(&[x.clone()], &[y.clone()], Sigma::Fixed(0.9)).unwrap();
        let k = rbf_kernel(&x, &y, 0.9).unwrap();
        assert!((single.value - 2.0 * (1.0 - k)).abs() < 1e-15);

        let ys: Vec<Vec<f64>> = (0..4).map(|_| rng.gaussian_vec(3, 2.0)).collect();
        assert!(mmd_loss(&xs, &ys, Sigma::Fixed(1e9)).unwrap().value.abs() < 1e-12);
        assert!(mmd_loss(&[], &ys, Sigma::Median).is_err());
    }

    #[test]
    fn median_distance_of_collinear_points() {
        // pairs: 1, 3, 2 -> median 2
        assert_eq!(median_pairwise_distance(&pts(&[0.0, 1.0]), &pts(&[3.0])), 2.0);
        // pairs: 1, 2, 1, 3, 2, 1 -> sorted 1 1 1 2 2 3 -> 1.5
        assert_eq!(median_pairwise_distance(&pts(&[0.0, 1.0]), &pts(&[2.0, 3.0])), 1.5);
        assert_eq!(median_pairwise_distance(&pts(&[1.0, 1.0]), &pts(&[1.0])), 1.0);
    }

    #[test]
    fn wbda_identical_sides_and_zero_weights() {
        let mut rng = SeededRng::new(8);
        let mut b = random_pair_batch(&mut rng, 3, 3, 4);
        assert_eq!(wbda_loss(&b, 0.0, 0.0).unwrap().value, 0.0);
        let copy = b.groups[0].speakers.clone();
        b.groups[1].speakers = copy
            .into_iter()
            .map(|mut s| {
                for it in &mut s.items {
                    it.utt_id = format!("copy-{}", it.utt_id);
                }
                s
            })
            .collect();
        let out = wbda_loss(&b, 0.5, 0.5).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grads.len(), 18);
    }

    #[test]
    fn wbda_within_term_matches_stats_module() {
        let mut rng = SeededRng::new(12);
        let b = random_pair_batch(&mut rng, 3, 4, 5);
        let out = wbda_loss(&b, 1.0, 0.0).unwrap();
        let rw = |g: &GenreGroup| {
            let (w, _) = within_between(&g.speaker_vectors()).unwrap();
            to_correlation(&w).unwrap()
        };
        let expected = frob_sq_diff(&rw(&b.groups[0]), &rw(&b.groups[1])).unwrap();
        assert!((out.value - expected).abs() <= 1e-12);
    }

    #[test]
    fn wbda_rejects_small_batches() {
        let mut rng = SeededRng::new(1);
        let b = random_pair_batch(&mut rng, 3, 1, 2);
        assert!(matches!(wbda_loss(&b, 0.5, 0.5), Err(Error::Argument(_))));
        let b = random_pair_batch(&mut rng, 1, 3, 2);
        assert!(matches!(wbda_loss(&b, 0.5, 0.5), Err(Error::Argument(_))));
    }

    fn speaker_batch(groups: Vec<Vec<Vec<f64>>>) -> MiniBatch {
        let m = groups[0].len();
        let s = groups.len();
        MiniBatch {
            kind: BatchKind::Speakers,
            speakers_per_group: s,
            utts_per_speaker: m,
            groups: vec![GenreGroup {
                genre: MIXED_GENRE.into(),
                speakers: groups
                    .into_iter()
                    .enumerate()
                    .map(|(k, vs)| SpeakerGroup {
                        speaker: format!("s{k}"),
                        items: vs
                            .into_iter()
                            .enumerate()
                            .map(|(u, v)| BatchItem { utt_id: format!("s{k}-{u}"), vector: v })
                            .collect(),
                    })
                    .collect(),
            }],
        }
    }

    #[test]
    fn center_loss_examples() {
        let b = speaker_batch(vec![pts(&[-1.0, 1.0])]);
        let out = center_loss(&b).unwrap();
        assert_eq!(out.value, 1.0);
        assert_eq!(out.grads["s0-0"], vec![-1.0]);
        assert_eq!(out.grads["s0-1"], vec![1.0]);

        let b = speaker_batch(vec![vec![vec![1.0, 2.0]; 3], vec![vec![0.0, -1.0]; 3]]);
        assert_eq!(center_loss(&b).unwrap().value, 0.0);

        let b = speaker_batch(vec![vec![vec![1.0, 2.0]], vec![vec![4.0, -1.0]]]);
        assert_eq!(center_loss(&b).unwrap().value, 0.0);
    }

    #[test]
    fn combined_loss_arithmetic() {
        let mut ce = LossOutput { value: 2.0, grads: BTreeMap::new() };
        ce.grads.insert("u".into(), vec![1.0, 2.0]);
        let mut da = LossOutput { value: 1.0, grads: BTreeMap::new() };
        da.grads.insert("u".into(), vec![1.0, 1.0]);
        da.grads.insert("v".into(), vec![2.0, 0.0]);
        let out = combined_loss(&ce, &da, 0.9);
        assert_eq!(out.value, 2.9);
        assert_eq!(out.grads["u"], vec![1.9, 2.9]);
        assert_eq!(out.grads["v"], vec![1.8, 0.0]);
        assert_eq!(combined_loss(&ce, &da, 0.0), ce);
        let zero = LossOutput { value: 0.0, grads: ce.grads.keys().map(|k| (k.clone(), vec![0.0, 0.0])).collect() };
        assert_eq!(combined_loss(&ce, &zero, 0.9), ce);
    }

    #[test]
    fn method_table() {
        let lambdas: Vec<(&str, f64)> = DaMethod::ALL.iter().map(|m| (m.name(), m.default_lambda())).collect();
        assert_eq!(
            lambdas,
            vec![("none", 0.0), ("coral", 0.1), ("mmd", 0.8), ("center", 0.1), ("wda", 0.9), ("bda", 0.03), ("wbda", 0.9)]
        );
        assert_eq!("wbda".parse::<DaMethod>().unwrap(), DaMethod::Wbda);
        assert!("dat".parse::<DaMethod>().is_err());
        let wda = DaConfig::for_method(DaMethod::Wda);
        assert_eq!((wda.effective_alpha(), wda.effective_beta()), (0.5, 0.0));
        let bda = DaConfig::for_method(DaMethod::Bda);
        assert_eq!((bda.effective_alpha(), bda.effective_beta()), (0.0, 0.5));
        assert_eq!("median".parse::<Sigma>().unwrap(), Sigma::Median);
        assert_eq!("2.5".parse::<Sigma>().unwrap(), Sigma::Fixed(2.5));
        assert!("-1".parse::<Sigma>().is_err());
    }
}
