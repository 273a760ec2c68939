use std::path::PathBuf;

use thiserror::Error;

use super::{ArtifactError, ConfigError};
use crate::autodiff::AutodiffError;
use crate::eval::EvalError;
use crate::lbm::LbmError;
use crate::lstm::LstmError;
use crate::qcbm::QcbmError;
use crate::qgan::QganError;
use crate::vqvae::VqVaeError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage `{stage}` needs {}: {reason}; run `{producer}` first", .missing.display())]
    Prerequisite {
        stage: &'static str,
        producer: &'static str,
        missing: PathBuf,
        reason: String,
    },
    #[error("numerical failure in `{stage}`: {detail}")]
    Numerical { stage: &'static str, detail: String },
    #[error("`{stage}` failed: {detail}")]
    Stage { stage: &'static str, detail: String },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 2 configuration, 3 missing prerequisite, 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Prerequisite { .. } => 3,
            PipelineError::Numerical { .. } => 4,
            PipelineError::Stage { .. } | PipelineError::Io { .. } => 1,
        }
    }
}

pub(crate) enum Kind {
    Config,
    Numerical,
    Other,
}

fn build(stage: &'static str, kind: Kind, detail: String) -> PipelineError {
    match kind {
        Kind::Config => PipelineError::Config(ConfigError::Invalid {
            key: stage.into(),
            reason: detail,
        }),
        Kind::Numerical => PipelineError::Numerical { stage, detail },
        Kind::Other => PipelineError::Stage { stage, detail },
    }
}

fn autodiff_kind(e: &AutodiffError) -> Kind {
    match e {
        AutodiffError::NonFiniteGradient(_) => Kind::Numerical,
        _ => Kind::Other,
    }
}

/// Classifies a module error for exit-code purposes.
pub(crate) trait Classify: std::fmt::Display {
    fn kind(&self) -> Kind;

    fn at(self, stage: &'static str) -> PipelineError
    where
        Self: Sized,
    {
        build(stage, self.kind(), self.to_string())
    }
}

impl Classify for LbmError {
    fn kind(&self) -> Kind {
        match self {
            LbmError::Config(_) => Kind::Config,
            LbmError::NonFinite(_) | LbmError::Blowup { .. } => Kind::Numerical,
        }
    }
}

impl Classify for VqVaeError {
    fn kind(&self) -> Kind {
        match self {
            VqVaeError::Config(_) => Kind::Config,
            VqVaeError::NonFiniteLoss { .. } => Kind::Numerical,
            VqVaeError::Autodiff(e) => autodiff_kind(e),
            _ => Kind::Other,
        }
    }
}

impl Classify for QcbmError {
    fn kind(&self) -> Kind {
        match self {
            QcbmError::NonFiniteLoss { .. }
            | QcbmError::NonFiniteInput
            | QcbmError::ZeroVariance => Kind::Numerical,
            QcbmError::Optimizer(e) => autodiff_kind(e),
            _ => Kind::Other,
        }
    }
}

impl Classify for QganError {
    fn kind(&self) -> Kind {
        match self {
            QganError::NonFiniteLoss { .. } => Kind::Numerical,
            QganError::Binner(e) => e.kind(),
            QganError::Autodiff(e) => autodiff_kind(e),
            _ => Kind::Other,
        }
    }
}

impl Classify for LstmError {
    fn kind(&self) -> Kind {
        match self {
            LstmError::NonFiniteLoss { .. } => Kind::Numerical,
            LstmError::Autodiff(e) => autodiff_kind(e),
            _ => Kind::Other,
        }
    }
}

impl Classify for AutodiffError {
    fn kind(&self) -> Kind {
        autodiff_kind(self)
    }
}

impl Classify for EvalError {
    fn kind(&self) -> Kind {
        match self {
            EvalError::NonFinite(_) => Kind::Numerical,
            EvalError::TooFewPoints { .. } => Kind::Config,
            _ => Kind::Other,
        }
    }
}

impl Classify for ArtifactError {
    fn kind(&self) -> Kind {
        Kind::Other
    }
}
