//! Error type shared by every stage of a model run.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The configuration text does not match the documented schema.
    #[error("schema error in {}{}: at `{key}`: {message}", file.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Schema {
        file: PathBuf,
        key: String,
        line: Option<usize>,
        message: String,
    },

    /// A well-formed configuration breaks one of the model invariants.
    #[error("invariant violated ({invariant}): {detail}")]
    Invariant {
        invariant: &'static str,
        detail: String,
    },

    #[error("csv error in {}: {message}", path.display())]
    Csv { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing price for fuel `{0}`")]
    MissingFuelPrice(String),

    #[error(
        "geologic storage exhausted: cumulative injection {cumulative:.3} Gt exceeds capacity {capacity:.3} Gt"
    )]
    StorageExhausted { cumulative: f64, capacity: f64 },

    #[error("no feasible technology for sector `{sector}` in {year}")]
    NoFeasibleTechnology { sector: String, year: i32 },

    #[error(
        "cap of {cap:.4} Gt in {year} for region `{region}` is infeasible: net emissions at the price ceiling ${ceiling} are {net_at_ceiling:.4} Gt"
    )]
    Infeasible {
        region: String,
        year: i32,
        cap: f64,
        ceiling: f64,
        net_at_ceiling: f64,
    },

    #[error(
        "carbon price for `{region}` in {year} did not converge: net(0) = {net_at_zero:.4} Gt, net(ceiling) = {net_at_ceiling:.4} Gt, cap = {cap:.4} Gt"
    )]
    NoConvergence {
        region: String,
        year: i32,
        cap: f64,
        net_at_zero: f64,
        net_at_ceiling: f64,
    },

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            invariant,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_scenario(self, scenario: &str) -> Self {
        match self {
            e @ Error::Scenario { .. } => e,
            other => Error::Scenario {
                scenario: scenario.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// True when the failure comes from the solver (the cap or storage cannot be met)
    /// rather than from bad input.
    pub fn is_infeasibility(&self) -> bool {
        match self {
            Error::Infeasible { .. } | Error::NoConvergence { .. } | Error::StorageExhausted { .. } => {
                true
            }
            Error::Scenario { source, .. } => source.is_infeasibility(),
            _ => false,
        }
    }
}
