use thiserror::Error;

use crate::model::PacketId;

#[derive(Debug, Error)]
pub enum Error {
    /// Packet or buffer violates a model invariant.
    #[error("model error: {0}")]
    Model(String),

    /// Malformed or inconsistent trace. `line` is 1-based when the trace came from a file.
    #[error("trace error{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Trace { line: Option<usize>, msg: String },

    /// The simulation or adversary harness was driven with an illegal action.
    #[error("harness error: {0}")]
    Harness(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("packet {0} is not pending")]
    NotPending(PacketId),

    #[error("packet {0} is not on the Pareto frontier")]
    NotOnFrontier(PacketId),

    #[error("empty buffer")]
    EmptyBuffer,

    #[error("instance has {0} packets, brute force is limited to {1}")]
    TooLarge(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn trace(msg: impl Into<String>) -> Self {
        Error::Trace {
            line: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn at_line(line: usize, msg: impl Into<String>) -> Self {
        Error::Trace {
            line: Some(line),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
