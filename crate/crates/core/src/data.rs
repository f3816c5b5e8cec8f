//! Embedding records, datasets, minibatches and loss outputs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// One utterance embedding with its speaker and genre labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub utt_id: String,
    pub speaker: String,
    pub genre: String,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(
        utt_id: impl Into<String>,
        speaker: impl Into<String>,
        genre: impl Into<String>,
        vector: Vec<f64>,
    ) -> Self {
        Self {
            utt_id: utt_id.into(),
            speaker: speaker.into(),
            genre: genre.into(),
            vector,
        }
    }
}

/// A broken dataset invariant, as reported by [`Dataset::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroDimension,
    NoRecords,
    DimensionMismatch { utt_id: String, expected: usize, found: usize },
    NonFinite { utt_id: String, component: usize },
    DuplicateUttId { utt_id: String, first: usize, second: usize },
    EmptyGenre { genre: String },
    IndexEntry { index: &'static str, key: String, detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroDimension => write!(f, "dataset dimension is zero"),
            Violation::NoRecords => write!(f, "dataset has no records (and therefore no genre)"),
            Violation::DimensionMismatch { utt_id, expected, found } => {
                write!(f, "record `{utt_id}` has {found} components, expected {expected}")
            }
            Violation::NonFinite { utt_id, component } => {
                write!(f, "record `{utt_id}` has a non-finite value at component {component}")
            }
            Violation::DuplicateUttId { utt_id, first, second } => {
                write!(f, "utt_id `{utt_id}` is duplicated at records {first} and {second}")
            }
            Violation::EmptyGenre { genre } => write!(f, "genre `{genre}` has no records"),
            Violation::IndexEntry { index, key, detail } => {
                write!(f, "{index} index entry `{key}`: {detail}")
            }
        }
    }
}

/// An ordered collection of embedding records indexed by speaker and genre.
///
/// Index keys iterate in lexicographic order; positions within each index
/// entry follow record order. The speaker list (sorted) doubles as the class
/// index used by the classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    speaker_index: BTreeMap<String, Vec<usize>>,
    genre_index: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Builds the indices without checking record invariants; call
    /// [`Dataset::validate`] or use [`Dataset::try_new`] for a checked value.
    pub fn new(dim: usize, records: Vec<EmbeddingRecord>) -> Self {
        let mut speaker_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut genre_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            speaker_index.entry(r.speaker.clone()).or_default().push(i);
            genre_index.entry(r.genre.clone()).or_default().push(i);
        }
        Self {
            dim,
            records,
            speaker_index,
            genre_index,
        }
    }

    pub fn try_new(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let ds = Self::new(dim, records);
        let violations = ds.validate();
        if let Some(first) = violations.first() {
            return Err(Error::arg(format!(
                "{} dataset violation(s); first: {first}",
                violations.len()
            )));
        }
        Ok(ds)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    /// Sorted speaker ids.
    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.speaker_index.keys().map(String::as_str)
    }

    /// Sorted genre ids.
    pub fn genres(&self) -> impl Iterator<Item = &str> {
        self.genre_index.keys().map(String::as_str)
    }

    pub fn num_speakers(&self) -> usize {
        self.speaker_index.len()
    }

    pub fn num_genres(&self) -> usize {
        self.genre_index.len()
    }

    pub fn speaker_positions(&self, speaker: &str) -> &[usize] {
        self.speaker_index.get(speaker).map_or(&[], Vec::as_slice)
    }

    pub fn genre_positions(&self, genre: &str) -> &[usize] {
        self.genre_index.get(genre).map_or(&[], Vec::as_slice)
    }

    pub fn has_genre(&self, genre: &str) -> bool {
        self.genre_index.contains_key(genre)
    }

    /// Record positions of `speaker` in `genre`, in record order.
    pub fn speaker_genre_positions(&self, speaker: &str, genre: &str) -> Vec<usize> {
        self.speaker_positions(speaker)
            .iter()
            .copied()
            .filter(|&i| self.records[i].genre == genre)
            .collect()
    }

    /// Speakers present in `genre` with their positions there.
    pub fn speakers_in_genre(&self, genre: &str) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in self.genre_positions(genre) {
            out.entry(self.records[i].speaker.as_str()).or_default().push(i);
        }
        out
    }

    /// Class index of a speaker (its rank in sorted order).
    pub fn speaker_class(&self, speaker: &str) -> Option<usize> {
        self.speaker_index.keys().position(|s| s == speaker)
    }

    /// Map speaker -> class index for every speaker.
    pub fn class_map(&self) -> BTreeMap<String, usize> {
        self.speaker_index
            .keys()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect()
    }

    /// A dataset holding only the records whose speaker satisfies `keep`,
    /// in the original order.
    pub fn filter_speakers(&self, mut keep: impl FnMut(&str) -> bool) -> Dataset {
        let records = self
            .records
            .iter()
            .filter(|r| keep(&r.speaker))
            .cloned()
            .collect();
        Dataset::new(self.dim, records)
    }

    /// Splits off the last `holdout` speakers (in sorted order):
    /// returns `(remaining, held_out)`.
    pub fn split_speakers(&self, holdout: usize) -> (Dataset, Dataset) {
        let n = self.num_speakers();
        let cut = n.saturating_sub(holdout);
        let held: BTreeSet<&str> = self.speakers().skip(cut).collect();
        (
            self.filter_speakers(|s| !held.contains(s)),
            self.filter_speakers(|s| held.contains(s)),
        )
    }

    /// Lists every broken invariant; empty when the dataset is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dim == 0 {
            out.push(Violation::ZeroDimension);
        }
        if self.records.is_empty() {
            out.push(Violation::NoRecords);
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.vector.len() != self.dim {
                out.push(Violation::DimensionMismatch {
                    utt_id: r.utt_id.clone(),
                    expected: self.dim,
                    found: r.vector.len(),
                });
            }
            if let Some(c) = r.vector.iter().position(|v| !v.is_finite()) {
                out.push(Violation::NonFinite {
                    utt_id: r.utt_id.clone(),
                    component: c,
                });
            }
            if let Some(&first) = seen.get(r.utt_id.as_str()) {
                out.push(Violation::DuplicateUttId {
                    utt_id: r.utt_id.clone(),
                    first,
                    second: i,
                });
            } else {
                seen.insert(&r.utt_id, i);
            }
        }
        for (genre, pos) in &self.genre_index {
            if pos.is_empty() {
                out.push(Violation::EmptyGenre { genre: genre.clone() });
            }
        }
        self.check_index("speaker", &self.speaker_index, |r| &r.speaker, &mut out);
        self.check_index("genre", &self.genre_index, |r| &r.genre, &mut out);
        out
    }

    fn check_index(
        &self,
        name: &'static str,
        index: &BTreeMap<String, Vec<usize>>,
        key_of: impl Fn(&EmbeddingRecord) -> &String,
        out: &mut Vec<Violation>,
    ) {
        let mut hits = alloc::vec![0usize; self.records.len()];
        for (key, positions) in index {
            for &p in positions {
                match self.records.get(p) {
                    Some(r) if key_of(r) == key => hits[p] += 1,
                    Some(_) => out.push(Violation::IndexEntry {
                        index: name,
                        key: key.clone(),
                        detail: format!("position {p} belongs to a different key"),
                    }),
                    None => out.push(Violation::IndexEntry {
                        index: name,
                        key: key.clone(),
                        detail: format!("position {p} is out of range"),
                    }),
                }
            }
        }
        for (p, &h) in hits.iter().enumerate() {
            if h != 1 {
                out.push(Violation::IndexEntry {
                    index: name,
                    key: key_of(&self.records[p]).clone(),
                    detail: format!("record `{}` indexed {h} times", self.records[p].utt_id),
                });
            }
        }
    }
}

/// Genre label of the single group in a speaker-only batch.
pub const MIXED_GENRE: &str = "*mixed*";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchKind {
    /// Two genres, `S` speakers each, `M` utterances per speaker.
    GenrePair,
    /// One [`MIXED_GENRE`] group of `S` speakers, `M` utterances each.
    Speakers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub utt_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerGroup {
    pub speaker: String,
    pub items: Vec<BatchItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenreGroup {
    pub genre: String,
    pub speakers: Vec<SpeakerGroup>,
}

impl GenreGroup {
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.speakers
            .iter()
            .flat_map(|s| s.items.iter().map(|it| it.vector.clone()))
            .collect()
    }

    pub fn speaker_vectors(&self) -> Vec<Vec<Vec<f64>>> {
        self.speakers
            .iter()
            .map(|s| s.items.iter().map(|it| it.vector.clone()).collect())
            .collect()
    }
}

/// A structured minibatch: genre groups of speaker groups of utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub kind: BatchKind,
    pub groups: Vec<GenreGroup>,
    pub speakers_per_group: usize,
    pub utts_per_speaker: usize,
}

impl MiniBatch {
    /// All items in batch order (genre, speaker, utterance).
    pub fn items(&self) -> impl Iterator<Item = (&GenreGroup, &SpeakerGroup, &BatchItem)> {
        self.groups.iter().flat_map(|g| {
            g.speakers
                .iter()
                .flat_map(move |s| s.items.iter().map(move |it| (g, s, it)))
        })
    }

    pub fn len(&self) -> usize {
        self.items().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.items().next().map_or(0, |(_, _, it)| it.vector.len())
    }

    /// Same structure with every vector replaced by `f(vector)`.
    pub fn map_vectors(&self, mut f: impl FnMut(&str, &[f64]) -> Vec<f64>) -> MiniBatch {
        MiniBatch {
            kind: self.kind,
            speakers_per_group: self.speakers_per_group,
            utts_per_speaker: self.utts_per_speaker,
            groups: self
                .groups
                .iter()
                .map(|g| GenreGroup {
                    genre: g.genre.clone(),
                    speakers: g
                        .speakers
                        .iter()
                        .map(|s| SpeakerGroup {
                            speaker: s.speaker.clone(),
                            items: s
                                .items
                                .iter()
                                .map(|it| BatchItem {
                                    utt_id: it.utt_id.clone(),
                                    vector: f(&it.utt_id, &it.vector),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Checks the shape invariants for the batch kind.
    pub fn check_shape(&self) -> Result<()> {
        let (s, m) = (self.speakers_per_group, self.utts_per_speaker);
        match self.kind {
            BatchKind::GenrePair => {
                if self.groups.len() != 2 || self.groups[0].genre == self.groups[1].genre {
                    return Err(Error::arg("genre-pair batch needs exactly 2 distinct genres"));
                }
            }
            BatchKind::Speakers => {
                if self.groups.len() != 1 || self.groups[0].genre != MIXED_GENRE {
                    return Err(Error::arg(
                        "speaker batch needs exactly one group marked as mixed genre",
                    ));
                }
            }
        }
        for g in &self.groups {
            if g.speakers.len() != s {
                return Err(Error::arg(format!(
                    "genre `{}` has {} speakers, expected {s}",
                    g.genre,
                    g.speakers.len()
                )));
            }
            for sp in &g.speakers {
                if sp.items.len() != m {
                    return Err(Error::arg(format!(
                        "speaker `{}` in genre `{}` has {} utterances, expected {m}",
                        sp.speaker,
                        g.genre,
                        sp.items.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Attaches per-item gradients (in [`MiniBatch::items`] order) to utt ids.
    pub fn keyed_grads(&self, grads: Vec<Vec<f64>>) -> BTreeMap<String, Vec<f64>> {
        debug_assert_eq!(grads.len(), self.len());
        self.items()
            .map(|(_, _, it)| it.utt_id.clone())
            .zip(grads)
            .collect()
    }
}

/// A scalar loss and its gradient with respect to every batch embedding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossOutput {
    pub value: f64,
    pub grads: BTreeMap<String, Vec<f64>>,
}

impl LossOutput {
    /// Zero loss with zero gradients for every item of `batch`.
    pub fn zero_for(batch: &MiniBatch) -> Self {
        let d = batch.dim();
        Self {
            value: 0.0,
            grads: batch
                .items()
                .map(|(_, _, it)| (it.utt_id.clone(), alloc::vec![0.0; d]))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grads.values().all(|g| g.iter().all(|v| v.is_finite()))
    }
}
