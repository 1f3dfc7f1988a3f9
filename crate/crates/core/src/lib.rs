//! Noise-robust token-level losses built on total variation distance, with
//! everything needed to validate them end to end:
//!
//! - [`simplex`]: exact probability-simplex arithmetic (TVD, Tsallis entropy,
//!   estimation error, the optimal trade-off and its sampled approximation);
//! - [`losses`]: training objectives (plain NLL, constant and adaptive
//!   weighted bounds, loss truncation, Gaussian-mixture re-weighting) and
//!   analytic gradients under the detached-weight contract;
//! - [`theorems`]: brute-force verification of the optimality and
//!   approximation bounds, with machine-readable reports;
//! - [`synth`]: synthetic noisy conditional-token benchmarks with exactly
//!   known clean distributions;
//! - [`trainer`]: deterministic gradient-descent training with per-step
//!   telemetry (loss, trade-off, weights, distance to clean, weight AUC);
//! - [`corpus`]: unique-token diversity metrics, histograms, and saturation
//!   curves.
//!
//! All randomness flows through explicit seeds; identical inputs produce
//! byte-identical outputs.
//!
//! ## Example
//!
//! ```
//! use adatailr::losses::{adatailr_loss, TokenBatch};
//! use adatailr::simplex::Simplex;
//!
//! // One predicted row, target token 0.
//! let batch = TokenBatch::new(
//!     vec![Simplex::new(vec![0.8, 0.2])?],
//!     vec![0],
//! )?;
//! let out = adatailr_loss(&batch, 1.0, 0.0)?;
//! let gamma = out.per_token_gamma.as_ref().unwrap()[0];
//! assert!((gamma - 0.38).abs() < 1e-12);
//! assert!((out.per_token_weight[0] - 0.913242).abs() < 1e-6);
//! # Ok::<(), adatailr::Error>(())
//! ```

#![forbid(unsafe_code)]

pub mod corpus;
pub mod error;
pub mod losses;
pub mod seeding;
pub mod simplex;
pub mod synth;
pub mod theorems;
pub mod trainer;

pub use corpus::{Corpus, DiversityReport};
pub use error::{Error, Result};
pub use losses::{LossKind, LossSpec, TokenBatch, WeightedLoss};
pub use simplex::{GammaValue, OneHot, Simplex};
pub use synth::{CleanTask, Dataset, NoiseKind, NoiseModel, TokenExample};
pub use theorems::{TheoremReport, TheoremTrial};
pub use trainer::{LogitModel, RunMetrics, TrainConfig};
