//! End-to-end runs: tokenize → count → fit → predict → collapse, with every
//! tolerance in one [`PipelineConfig`] and a [`RunManifest`] per run.
//!
//! Stages are sequential and each is internally parallel. Library errors are
//! sorted into three kinds that the command line maps to exit codes: bad
//! configuration (2), bad or missing data (3), and numerical failure (4).

mod config;
mod execute;
mod manifest;
mod stages;
pub mod svg;

use thiserror::Error;

pub use config::{
    AsymptoteConfig, BetaFitConfig, CollapseConfig, CovstatsConfig, GammaFitConfig, HorizonConfig, PipelineConfig,
    PowerConfig, TheoryConfig,
};
pub use execute::{execute, replay, selftest_builtin, Command, FitForm, Prediction, ReplayCheck, SelftestOutcome};
pub use manifest::{sha256_file, FileDigest, RunManifest, CACHE_DIR_ENV};
pub use stages::{
    run_full_report, run_measure_beta, run_measure_gamma, BetaMeasurement, DecayForm, DeltaFit, FullReport,
    GammaMeasurement, StageFailure, StageGap,
};

use crate::collapse::CollapseError;
use crate::covstats::CovStatsError;
use crate::fitkit::FitError;
use crate::synthlang::SynthError;
use crate::theory::TheoryError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Numerical(_) => 4,
            Self::Stage { source, .. } => source.exit_code(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Self::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.display()))
    }
}

impl From<TokenizerError> for PipelineError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::VocabTooSmall { .. } => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<CovStatsError> for PipelineError {
    fn from(e: CovStatsError) -> Self {
        match e {
            CovStatsError::NoLags | CovStatsError::InvalidLag(_) | CovStatsError::BadPrefixes { .. } => {
                Self::Config(e.to_string())
            }
            CovStatsError::NormOrdering { .. } => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<FitError> for PipelineError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::InvalidWindow(_) | FitError::InvalidRange { .. } => Self::Config(e.to_string()),
            FitError::Degenerate(_) | FitError::NoAdmissibleAsymptote { .. } | FitError::NoValidBreakpoint { .. } => {
                Self::Numerical(e.to_string())
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<TheoryError> for PipelineError {
    fn from(e: TheoryError) -> Self {
        match e {
            TheoryError::NotPositive { .. } | TheoryError::Negative { .. } | TheoryError::InvalidSpec(_) => {
                Self::Config(e.to_string())
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<CollapseError> for PipelineError {
    fn from(e: CollapseError) -> Self {
        match e {
            CollapseError::NoBins | CollapseError::EmptyGrid => Self::Config(e.to_string()),
            CollapseError::NoOverlap { .. } => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(_) => Self::Data(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}
