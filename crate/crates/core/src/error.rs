use thiserror::Error;

use crate::model::{AgentId, VarId};

/// Errors surfaced by the solver framework.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable {0}")]
    UnknownVariable(VarId),

    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),

    #[error("value {value} is not in the domain of variable {var}")]
    ValueOutsideDomain { var: VarId, value: i64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("separator of size {separator} exceeds width cap {cap}")]
    WidthCapExceeded { separator: usize, cap: usize },

    #[error("utility table of {bytes} bytes exceeds the {cap}-byte memory guard")]
    TableTooLarge { bytes: u128, cap: u128 },

    #[error("enumeration space of {rows} rows exceeds the {cap}-row cap")]
    EnumerationCapExceeded { rows: u128, cap: u128 },

    #[error("undeliverable message for unknown receiver {0}")]
    UnknownReceiver(AgentId),

    #[error("termination rule must set at least one criterion")]
    EmptyTerminationRule,

    #[error("destroy strategy requires meeting metadata on the instance")]
    MissingMeetingMetadata,

    #[error("generator: {0}")]
    Generator(String),

    #[error("repair failed at iteration {iteration}: {source}")]
    RepairFailed {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("trace: {0}")]
    Trace(String),
}

pub type Result<T> = std::result::Result<T, Error>;
