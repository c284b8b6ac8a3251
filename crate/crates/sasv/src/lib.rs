//! Score-level toolkit for spoofing-robust automatic speaker verification
//! (SASV).
//!
//! A SASV system accepts a trial only when the speech is bona fide *and*
//! from the claimed speaker. This crate works purely at the score level:
//!
//! - [`decision`] converts decision costs into effective priors and composes
//!   countermeasure (CM) and speaker-verification (ASV) log-likelihood
//!   ratios into a single SASV LLR with a Bayes accept rule.
//! - [`calibration`] jointly fits affine transforms of the two raw score
//!   streams by prior-weighted logistic regression so the composed LLR is
//!   well calibrated.
//! - [`metrics`] evaluates labeled score sets: a-DCF, minDCF/actDCF, EER,
//!   and Cllr.
//! - [`score_io`] defines the TAB-separated file formats and trial joining
//!   used by the `sasv` command-line tool ([`cli`]).
//! - [`synth`] generates reproducible synthetic trials with known
//!   ground-truth LLRs and carries naive reference implementations of the
//!   swept metrics for cross-checking.
//! - [`aux_scoring`] holds the auxiliary procedures: label-scheme group
//!   aggregation, min-max fusion, and cosine scoring of embeddings.

pub mod aux_scoring;
pub mod calibration;
pub mod cli;
pub mod decision;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod score_io;
pub mod synth;

pub use calibration::{CalibrationDataset, CalibrationParams, CalibrationResult, FitSettings};
pub use decision::{
    ConditionalRejectPriors, CostModel, EffectivePriors, LlrPair, PriorModel, TrialClass,
};
pub use metrics::{ADcfConfig, ClassSet, EvalMode, MetricsReport, ScoredTrials};
pub use score_io::{JoinedTrialSet, ScoreFile, TrialKeyFile, TrialRecord};
pub use synth::{AffineMap, SynthConfig, SynthTrialSet};
