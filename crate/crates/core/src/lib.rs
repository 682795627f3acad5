//! Saliency-guided super-resolution of retinal fundus images.

pub mod degrade;
pub mod filters;
pub mod gan;
pub mod imgcore;
pub mod metrics;
pub mod nn;
pub mod saliency;
pub mod stats;
pub mod synth;

/// Coarse error classes, one per command-line exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Shape,
    Divergence,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Shape => 4,
            ErrorKind::Divergence => 5,
        }
    }
}

/// Errors that can be sorted into an [`ErrorKind`].
pub trait Classify {
    fn kind(&self) -> ErrorKind;
}

impl Classify for imgcore::ImageError {
    fn kind(&self) -> ErrorKind {
        use imgcore::ImageError::*;
        match self {
            Unreadable { .. } | Unsupported { .. } | Corrupt { .. } | Write { .. } => ErrorKind::Io,
            InvalidPlane(_) => ErrorKind::Config,
            DimensionMismatch(..) => ErrorKind::Shape,
        }
    }
}

impl Classify for filters::FilterError {
    fn kind(&self) -> ErrorKind {
        match self {
            filters::FilterError::TooSmall(..) => ErrorKind::Shape,
            _ => ErrorKind::Config,
        }
    }
}

impl Classify for saliency::SaliencyError {
    fn kind(&self) -> ErrorKind {
        match self {
            saliency::SaliencyError::Filter(e) => e.kind(),
            saliency::SaliencyError::Config(_) => ErrorKind::Config,
        }
    }
}

impl Classify for degrade::DegradeError {
    fn kind(&self) -> ErrorKind {
        match self {
            degrade::DegradeError::BadScale(_) => ErrorKind::Config,
            degrade::DegradeError::NotDivisible { .. } => ErrorKind::Shape,
        }
    }
}

impl Classify for metrics::MetricsError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Shape
    }
}

impl Classify for stats::StatsError {
    fn kind(&self) -> ErrorKind {
        match self {
            stats::StatsError::LengthMismatch(..) => ErrorKind::Shape,
            _ => ErrorKind::Config,
        }
    }
}

impl Classify for nn::NnError {
    fn kind(&self) -> ErrorKind {
        use nn::NnError::*;
        match self {
            InvalidSpec { .. } => ErrorKind::Config,
            Shape { .. } | NoForwardCache | OptimizerMismatch(_) => ErrorKind::Shape,
            Checkpoint(_) | Io { .. } => ErrorKind::Io,
        }
    }
}

impl Classify for gan::GanError {
    fn kind(&self) -> ErrorKind {
        use gan::GanError::*;
        match self {
            Config(_) | EmptyDataset | StageCount { .. } | Probability(_) => ErrorKind::Config,
            Shape(_) => ErrorKind::Shape,
            Divergence { .. } => ErrorKind::Divergence,
            Nn(e) => e.kind(),
            Saliency(e) => e.kind(),
            Degrade(e) => e.kind(),
            Image(e) => e.kind(),
            Io { .. } => ErrorKind::Io,
        }
    }
}
