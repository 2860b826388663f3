use thiserror::Error;

use crate::builder::LevelStats;
use crate::tree::NodeRef;

pub type Result<T, E = TsaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TsaError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state generated at level {level} from parent {parent} with control {control}")]
    NonFinite {
        level: usize,
        parent: usize,
        control: usize,
    },

    #[error("non-finite value: {0}")]
    NonFiniteValue(String),

    #[error("node cap of {cap} exceeded while building level {level}")]
    NodeCap {
        cap: usize,
        level: usize,
        stats: Vec<LevelStats>,
    },

    #[error("structural error at node {node}: {reason}")]
    Structure { node: NodeRef, reason: String },

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("enumeration of {requested} control sequences exceeds the cap of {cap}")]
    EnumerationCap { requested: u128, cap: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl TsaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        TsaError::InvalidArgument(msg.into())
    }
}
