//! Seeded synthetic multi-genre embedding generator.
//!
//! Construction, with every draw taken from one [`SeededRng`] seeded by
//! `SynthConfig::seed`, in this order:
//!
//! 1. One center per speaker, `N(0, speaker_spread^2 I)`.
//! 2. Per genre (in the configured order), a distortion `x -> A_g x + b_g`
//!    with `A_g = R_g diag(exp(shift * z))`: `R_g` is the product of Givens
//!    rotations over every coordinate plane `(p, q)`, `p < q` (row-major
//!    order), each by angle `shift * theta`, `theta ~ N(0, angle_std^2)`;
//!    `z ~ N(0, log_scale_std^2)` per coordinate; and
//!    `b_g = shift * N(0, (offset_std * speaker_spread)^2 I)`.
//!    The rotation angles, log-scales and offset all grow linearly with
//!    `shift`, and `shift = 0` gives the identity map exactly.
//! 3. Utterances, genre-major then speaker then utterance index:
//!    `A_g (center + noise) + b_g`, `noise ~ N(0, within_spread^2 I)`.
//!
//! Records are emitted in the same order as step 3. Speaker ids are
//! `spk000`, `spk001`, ...; utterance ids are `<speaker>-<genre>-<k>`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Dataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::rng::SeededRng;

/// Per-unit-shift magnitudes of the three genre distortion components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionScale {
    /// Standard deviation of each plane rotation angle (radians).
    pub angle_std: f64,
    /// Standard deviation of each coordinate's log scale.
    pub log_scale_std: f64,
    /// Standard deviation of the offset, relative to `speaker_spread`.
    pub offset_std: f64,
}

impl Default for DistortionScale {
    fn default() -> Self {
        Self {
            angle_std: 0.15,
            log_scale_std: 0.4,
            offset_std: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_speakers: usize,
    pub genres: Vec<String>,
    pub dim: usize,
    pub utts_per_speaker_per_genre: usize,
    pub speaker_spread: f64,
    pub within_spread: f64,
    pub genre_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_speakers: 50,
            genres: ["g1", "g2", "g3"].iter().map(|g| String::from(*g)).collect(),
            dim: 16,
            utts_per_speaker_per_genre: 20,
            speaker_spread: 1.0,
            within_spread: 1.0,
            genre_shift: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_speakers == 0 {
            return Err(Error::config("num_speakers", "must be positive"));
        }
        if self.genres.len() < 2 {
            return Err(Error::config("genres", "at least two genres are required"));
        }
        for (i, g) in self.genres.iter().enumerate() {
            if g.is_empty() || g.chars().any(char::is_whitespace) {
                return Err(Error::config("genres", format!("genre name `{g}` must be non-empty without whitespace")));
            }
            if self.genres[..i].contains(g) {
                return Err(Error::config("genres", format!("genre `{g}` is listed twice")));
            }
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be positive"));
        }
        if self.utts_per_speaker_per_genre == 0 {
            return Err(Error::config("utts_per_speaker_per_genre", "must be positive"));
        }
        if !(self.speaker_spread > 0.0 && self.speaker_spread.is_finite()) {
            return Err(Error::config("speaker_spread", "must be a positive number"));
        }
        if !(self.within_spread > 0.0 && self.within_spread.is_finite()) {
            return Err(Error::config("within_spread", "must be a positive number"));
        }
        if !(self.genre_shift >= 0.0 && self.genre_shift.is_finite()) {
            return Err(Error::config("genre_shift", "must be a non-negative number"));
        }
        Ok(())
    }
}

/// An affine genre distortion `x -> a x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreMap {
    pub a: Mat,
    pub b: Vec<f64>,
}

impl GenreMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .mul_vec(x)
            .into_iter()
            .zip(&self.b)
            .map(|(v, b)| v + b)
            .collect()
    }
}

fn draw_genre_map(rng: &mut SeededRng, dim: usize, shift: f64, spread: f64, scale: &DistortionScale) -> GenreMap {
    let mut rot = Mat::identity(dim);
    for p in 0..dim {
        for q in p + 1..dim {
            let angle = shift * scale.angle_std * rng.normal();
            let (s, c) = (libm::sin(angle), libm::cos(angle));
            // rot <- G(p, q, angle) * rot
            for k in 0..dim {
                let (rp, rq) = (rot[(p, k)], rot[(q, k)]);
                rot[(p, k)] = c * rp - s * rq;
                rot[(q, k)] = s * rp + c * rq;
            }
        }
    }
    let scales: Vec<f64> = (0..dim)
        .map(|_| libm::exp(shift * scale.log_scale_std * rng.normal()))
        .collect();
    for r in 0..dim {
        for (k, s) in scales.iter().enumerate() {
            rot[(r, k)] *= s;
        }
    }
    let b = (0..dim).map(|_| shift * scale.offset_std * spread * rng.normal()).collect();
    GenreMap { a: rot, b }
}

/// Draws the per-genre maps exactly as [`generate_dataset`] does.
pub fn genre_maps(cfg: &SynthConfig, scale: &DistortionScale) -> Result<Vec<GenreMap>> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    for _ in 0..cfg.num_speakers {
        rng.gaussian_vec(cfg.dim, cfg.speaker_spread);
    }
    Ok(cfg
        .genres
        .iter()
        .map(|_| draw_genre_map(&mut rng, cfg.dim, cfg.genre_shift, cfg.speaker_spread, scale))
        .collect())
}

pub fn speaker_id(k: usize) -> String {
    format!("spk{k:03}")
}

/// Generates with the default [`DistortionScale`].
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    generate_dataset_with(cfg, &DistortionScale::default())
}

pub fn generate_dataset_with(cfg: &SynthConfig, scale: &DistortionScale) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let centers: Vec<Vec<f64>> = (0..cfg.num_speakers)
        .map(|_| rng.gaussian_vec(cfg.dim, cfg.speaker_spread))
        .collect();
    let maps: Vec<GenreMap> = cfg
        .genres
        .iter()
        .map(|_| draw_genre_map(&mut rng, cfg.dim, cfg.genre_shift, cfg.speaker_spread, scale))
        .collect();
    let mut records =
        Vec::with_capacity(cfg.genres.len() * cfg.num_speakers * cfg.utts_per_speaker_per_genre);
    for (genre, map) in cfg.genres.iter().zip(&maps) {
        for (k, center) in centers.iter().enumerate() {
            let spk = speaker_id(k);
            for u in 0..cfg.utts_per_speaker_per_genre {
                let x: Vec<f64> = center
                    .iter()
                    .map(|c| c + cfg.within_spread * rng.normal())
                    .collect();
                records.push(EmbeddingRecord::new(
                    format!("{spk}-{genre}-{u:03}"),
                    spk.clone(),
                    genre.clone(),
                    map.apply(&x),
                ));
            }
        }
    }
    Ok(Dataset::new(cfg.dim, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{covariance, frob_sq_diff};
    use alloc::vec;

    fn genre_vectors(ds: &Dataset, g: &str) -> Vec<Vec<f64>> {
        ds.genre_positions(g).iter().map(|&i| ds.records()[i].vector.clone()).collect()
    }

    #[test]
    fn zero_shift_means_identity_maps() {
        let cfg = SynthConfig { genre_shift: 0.0, ..SynthConfig::default() };
        for m in genre_maps(&cfg, &DistortionScale::default()).unwrap() {
            assert_eq!(m.a, Mat::identity(cfg.dim));
            assert!(m.b.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_shift_covariance_gap_shrinks_with_sample_count() {
        let gap = |utts: usize| {
            let cfg = SynthConfig {
                genre_shift: 0.0,
                num_speakers: 40,
                dim: 4,
                utts_per_speaker_per_genre: utts,
                ..SynthConfig::default()
            };
            let ds = generate_dataset(&cfg).unwrap();
            let a = covariance(&genre_vectors(&ds, "g1")).unwrap();
            let b = covariance(&genre_vectors(&ds, "g2")).unwrap();
            libm::sqrt(frob_sq_diff(&a, &b).unwrap())
        };
        let (small, large) = (gap(5), gap(500));
        assert!(large < small, "{small} -> {large}");
        assert!(large < 0.1, "{large}");
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = SynthConfig { num_speakers: 5, ..SynthConfig::default() };
        assert_eq!(generate_dataset(&cfg).unwrap(), generate_dataset(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..cfg.clone() };
        assert_ne!(generate_dataset(&cfg).unwrap(), generate_dataset(&other).unwrap());
    }

    #[test]
    fn every_speaker_in_every_genre() {
        let cfg = SynthConfig { num_speakers: 6, utts_per_speaker_per_genre: 3, ..SynthConfig::default() };
        let ds = generate_dataset(&cfg).unwrap();
        assert!(ds.validate().is_empty());
        assert_eq!(ds.len(), 6 * 3 * 3);
        for s in ds.speakers() {
            for g in ds.genres() {
                assert_eq!(ds.speaker_genre_positions(s, g).len(), 3);
            }
        }
    }

    #[test]
    fn rotations_are_orthogonal_before_scaling() {
        let cfg = SynthConfig { dim: 5, ..SynthConfig::default() };
        let mut rng = SeededRng::new(1);
        let no_offset = DistortionScale { offset_std: 0.0, ..DistortionScale::default() };
        let m = draw_genre_map(&mut rng, 5, 1.0, 1.0, &no_offset);
        // A = R D, so Aᵀ A = D^2 is diagonal
        let ata = m.a.transpose().matmul(&m.a);
        for p in 0..cfg.dim {
            for q in 0..cfg.dim {
                if p != q {
                    assert!(ata[(p, q)].abs() < 1e-12);
                }
            }
        }
        assert!(m.b.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn invalid_configs_name_their_field() {
        let bad = |f: fn(&mut SynthConfig)| {
            let mut c = SynthConfig::default();
            f(&mut c);
            match generate_dataset(&c) {
                Err(Error::Config { field, .. }) => field,
                other => panic!("expected config error, got {other:?}"),
            }
        };
        assert_eq!(bad(|c| c.num_speakers = 0), "num_speakers");
        assert_eq!(bad(|c| c.genres = vec!["only".into()]), "genres");
        assert_eq!(bad(|c| c.genres = vec!["a".into(), "a".into()]), "genres");
        assert_eq!(bad(|c| c.dim = 0), "dim");
        assert_eq!(bad(|c| c.within_spread = 0.0), "within_spread");
        assert_eq!(bad(|c| c.speaker_spread = -1.0), "speaker_spread");
        assert_eq!(bad(|c| c.genre_shift = -0.1), "genre_shift");
        assert_eq!(bad(|c| c.utts_per_speaker_per_genre = 0), "utts_per_speaker_per_genre");
    }
}
