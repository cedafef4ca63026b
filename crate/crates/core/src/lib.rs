//! Discharge-medication prediction from admission-time clinical notes.
//!
//! [`note_parser`] turns raw discharge summaries into admission-time text and
//! medication labels, [`corpus`] builds vocabularies, splits and feature
//! vectors, [`model`] holds the text CNN with its factor-analysis output layer
//! (built on the small autodiff core in [`ndgrad`]), [`baselines`] the
//! comparison models, [`metrics`] the scores and the PMI comparison, and
//! [`analysis`] the interpretability outputs.

pub mod analysis;
pub mod baselines;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod ndgrad;
pub mod note_parser;

use thiserror::Error;

pub use analysis::AnalysisError;
pub use baselines::{BaselineConfig, BaselineError, BaselineParams};
pub use corpus::{CorpusConfig, CorpusError, Dataset, DatasetSplit, EncodedExample, SyntheticSpec, Vocabulary};
pub use metrics::{MetricsReport, PmiMatrix, RankComparison};
pub use model::{CovarianceReport, ModelError, ModelParams, TrainConfig, TrainHistory};
pub use ndgrad::{Activation, Checkpoint, NdError, Tensor};
pub use note_parser::{Medication, NoteParser, ParseError, ParsedNote, RawNote, NUM_MEDICATIONS};

/// Any failure from this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}
