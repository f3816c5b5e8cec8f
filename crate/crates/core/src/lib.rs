//! Distribution alignment toolkit for multi-genre speaker embeddings.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numerical piece:
//! the embedding data model, a seeded synthetic multi-genre generator,
//! second-order statistics, the alignment regularizers with analytic
//! gradients, genre-pair and speaker-only minibatch samplers, a small
//! projection-model trainer, and verification scoring (EER, cross-genre
//! EER matrices). File formats and the command-line driver live in the
//! `genre-align` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod matrix;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use data::{BatchKind, Dataset, EmbeddingRecord, LossOutput, MiniBatch, Violation};
pub use error::{Error, Result};
pub use matrix::Mat;
