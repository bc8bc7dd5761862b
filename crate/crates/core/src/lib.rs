//! Probabilistic subword segmentation for low-resource NMT data pipelines.
//!
//! The crate trains unigram subword lexicons (MAP-weighted EM with pruning,
//! maximum-likelihood unigram, and BPE for comparison), segments text
//! deterministically or stochastically (subword regularization and taboo
//! sampling), corrupts monolingual text for denoising autoencoder tasks,
//! and streams task-scheduled, numericalized minibatches to a trainer.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the CLI uses.

pub mod corpus;
pub mod error;
pub mod lattice;
pub mod lexicon;
pub mod loader;
pub mod noise;
pub mod scalar;
pub mod schedule;
pub mod trainers;
pub mod unigram;
pub mod config;

pub use error::{Error, Result};
pub use lattice::Segmentation;
pub use lexicon::{SubwordLexicon, DEFAULT_MARKER};
pub use scalar::Scalar;

pub type Lexicon = SubwordLexicon<f64>;
pub type Lexicon32 = SubwordLexicon<f32>;
pub type Lattice<'w> = lattice::Lattice<'w, f64>;
pub type MixSchedule = schedule::MixSchedule<f64>;
pub type CostBreakdown = trainers::CostBreakdown<f64>;
pub type EmPruneConfig = trainers::EmPruneConfig<f64>;
