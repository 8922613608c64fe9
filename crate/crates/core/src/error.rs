use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid plant, training or scenario configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller violated a documented precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// The plant produced a non-finite state.
    #[error("simulation fault at step {step}: {detail}")]
    SimulationFault { step: usize, detail: String },

    /// A non-finite value appeared inside the computation graph.
    #[error("numeric fault in `{op}` (node {node}, path `{path}`)")]
    NumericFault {
        op: &'static str,
        node: usize,
        path: String,
    },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("oracle refused: {required} binary sequences required, budget is {limit}")]
    OracleBudget { required: u64, limit: u64 },

    #[error("malformed checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// True for faults that originate in the numerics rather than in the
    /// caller's input. The CLI maps these to exit status 2.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SimulationFault { .. } | Error::NumericFault { .. } | Error::Diverged { .. }
        )
    }

    /// Stamps the step index onto a simulation fault.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            Error::SimulationFault { detail, .. } => Error::SimulationFault { step: k, detail },
            e => e,
        }
    }
}
