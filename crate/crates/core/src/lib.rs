//! Evaluation harness for prompting strategies on contextual biomedical
//! machine reading comprehension.
//!
//! Four dataset shapes (ProcessBank, BioMRC, MASH-QA, CliCR) are converted
//! into one [`MrcInstance`] representation, prompted with the Basic, CoT,
//! AR or Implicit RAG strategy through any [`backend::Backend`], and scored
//! with accuracy or EM/P/R/F1.
//!
//! Metric code is generic over [`Scalar`]; the aliases below fix the two
//! instantiations used in practice.

pub mod backend;
pub mod eval;
pub mod ingest;
pub mod io;
pub mod irag;
pub mod model;
pub mod pipeline;
pub mod prompt;
pub mod runner;
mod scalar;

pub use model::{
    validate_instance, Candidate, Context, DatasetTag, Deviation, GoldAnswer, MrcInstance, Prediction, QaPair,
    RetrievedSection, Strategy, Usage,
};
pub use num_rational::Ratio;
pub use scalar::Scalar;

/// Scores as reported.
pub type ScoreSet = eval::ScoreSet<f64>;
/// Scores in exact rational arithmetic, for oracle comparisons.
pub type ExactScoreSet = eval::ScoreSet<Ratio<i64>>;
pub type InstanceScore = eval::InstanceScore<f64>;
