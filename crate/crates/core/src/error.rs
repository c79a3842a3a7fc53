use thiserror::Error;

use crate::config::ConfigError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rectangle: lower corner {lower:?}, upper corner {upper:?}")]
    DegenerateRectangle { lower: [f64; 2], upper: [f64; 2] },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("region interface not alignable: {0}")]
    RegionNotAlignable(String),

    #[error("regions overlap: {0} and {1}")]
    OverlappingRegions(String, String),

    #[error("element {0} is not an axis-aligned rectangle")]
    UnsupportedElement(usize),

    #[error("singular DKQ construction system (residual {0:e})")]
    SingularBasis(f64),

    #[error("missing material coefficients for region `{0}`")]
    MissingMaterial(String),

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("{0}")]
    InvalidInput(String),

    #[error("obstacle violated by the initial configuration at node {node} (position {position:?})")]
    ObstacleViolated { node: usize, position: [f64; 3] },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run cancelled")]
    Cancelled,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            other => Error::Step {
                step,
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by bad user input rather than a numerical failure.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Step { source, .. } => source.is_config_error(),
            Error::Solver(_) | Error::SingularBasis(_) | Error::Io(_) | Error::Cancelled => false,
            _ => true,
        }
    }
}

fn format_config_errors(errors: &[ConfigError]) -> String {
    let mut out = format!("{} configuration error(s)", errors.len());
    for e in errors {
        out.push_str("\n  ");
        out.push_str(&e.to_string());
    }
    out
}
