//! Minibatch construction.
//!
//! Sampling is stateless: the batch for `step` is a pure function of
//! `(dataset, config, step)`, drawn from ChaCha substream `step` of
//! `config.seed`. Any step can be computed without computing the others.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::{BatchItem, BatchKind, Dataset, GenreGroup, MiniBatch, SpeakerGroup, MIXED_GENRE};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    GenrePair,
    SpeakerOnly,
}

impl SamplerMode {
    pub fn name(self) -> &'static str {
        match self {
            SamplerMode::GenrePair => "genre_pair",
            SamplerMode::SpeakerOnly => "speaker_only",
        }
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genre_pair" => Ok(SamplerMode::GenrePair),
            "speaker_only" => Ok(SamplerMode::SpeakerOnly),
            _ => Err(Error::config("batch_mode", format!("unknown batch mode `{s}` (expected genre_pair or speaker_only)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    /// Speakers per genre (genre-pair mode) or per batch (speaker-only mode).
    pub speakers: usize,
    /// Utterances per speaker.
    pub utts_per_speaker: usize,
    pub seed: u64,
    pub mode: SamplerMode,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speakers == 0 {
            return Err(Error::config("speakers", "must be positive"));
        }
        if self.utts_per_speaker == 0 {
            return Err(Error::config("utts_per_speaker", "must be positive"));
        }
        Ok(())
    }
}

/// Draws the batch for `step` in the configured mode.
pub fn sample(ds: &Dataset, cfg: &SamplerConfig, step: u64) -> Result<MiniBatch> {
    match cfg.mode {
        SamplerMode::GenrePair => sample_genre_pair(ds, cfg, step),
        SamplerMode::SpeakerOnly => sample_speakers(ds, cfg, step),
    }
}

fn speaker_group(ds: &Dataset, rng: &mut SeededRng, speaker: &str, positions: &[usize], m: usize) -> SpeakerGroup {
    let items = rng
        .choose(positions.len(), m)
        .into_iter()
        .map(|k| {
            let r = &ds.records()[positions[k]];
            BatchItem {
                utt_id: r.utt_id.clone(),
                vector: r.vector.clone(),
            }
        })
        .collect();
    SpeakerGroup {
        speaker: speaker.into(),
        items,
    }
}

/// Per-genre speakers with at least `m` utterances in that genre.
fn eligible_by_genre(ds: &Dataset, m: usize) -> Vec<(String, Vec<(&str, Vec<usize>)>)> {
    ds.genres()
        .map(|g| {
            let speakers = ds
                .speakers_in_genre(g)
                .into_iter()
                .filter(|(_, pos)| pos.len() >= m)
                .collect();
            (String::from(g), speakers)
        })
        .collect()
}

/// Two distinct genres uniformly at random among the eligible ones, then `S`
/// speakers per genre and `M` utterances per speaker, all without
/// replacement. A genre is eligible when at least `S` of its speakers have
/// `M` or more utterances in it.
pub fn sample_genre_pair(ds: &Dataset, cfg: &SamplerConfig, step: u64) -> Result<MiniBatch> {
    cfg.validate()?;
    let (s, m) = (cfg.speakers, cfg.utts_per_speaker);
    let per_genre = eligible_by_genre(ds, m);
    let eligible: Vec<&(String, Vec<(&str, Vec<usize>)>)> =
        per_genre.iter().filter(|(_, sp)| sp.len() >= s).collect();
    if eligible.len() < 2 {
        let counts: Vec<String> = per_genre
            .iter()
            .map(|(g, sp)| format!("{g}={}", sp.len()))
            .collect();
        return Err(Error::SamplingInfeasible(format!(
            "need 2 genres with >= {s} speakers having >= {m} utterances; eligible speakers per genre: [{}]",
            counts.join(", ")
        )));
    }
    let mut rng = SeededRng::with_stream(cfg.seed, step);
    let groups = rng
        .choose(eligible.len(), 2)
        .into_iter()
        .map(|gi| {
            let (genre, speakers) = eligible[gi];
            let speakers = rng
                .choose(speakers.len(), s)
                .into_iter()
                .map(|k| {
                    let (spk, pos) = &speakers[k];
                    speaker_group(ds, &mut rng, spk, pos, m)
                })
                .collect();
            GenreGroup {
                genre: genre.clone(),
                speakers,
            }
        })
        .collect();
    Ok(MiniBatch {
        kind: BatchKind::GenrePair,
        groups,
        speakers_per_group: s,
        utts_per_speaker: m,
    })
}

/// `S` speakers uniformly at random among those with at least `M`
/// utterances overall, then `M` of each speaker's utterances regardless of
/// genre.
pub fn sample_speakers(ds: &Dataset, cfg: &SamplerConfig, step: u64) -> Result<MiniBatch> {
    cfg.validate()?;
    let (s, m) = (cfg.speakers, cfg.utts_per_speaker);
    let eligible: Vec<&str> = ds
        .speakers()
        .filter(|spk| ds.speaker_positions(spk).len() >= m)
        .collect();
    if eligible.len() < s {
        return Err(Error::SamplingInfeasible(format!(
            "need {s} speakers with >= {m} utterances, only {} of {} qualify",
            eligible.len(),
            ds.num_speakers()
        )));
    }
    let mut rng = SeededRng::with_stream(cfg.seed, step);
    let speakers = rng
        .choose(eligible.len(), s)
        .into_iter()
        .map(|k| {
            let spk = eligible[k];
            speaker_group(ds, &mut rng, spk, ds.speaker_positions(spk), m)
        })
        .collect();
    Ok(MiniBatch {
        kind: BatchKind::Speakers,
        groups: alloc::vec![GenreGroup {
            genre: MIXED_GENRE.into(),
            speakers,
        }],
        speakers_per_group: s,
        utts_per_speaker: m,
    })
}
