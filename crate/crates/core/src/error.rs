use thiserror::Error;

/// Errors raised anywhere in the modeling stack.
///
/// Variants are split into validation failures (bad input, bad files) and
/// numerical failures (solver breakdowns). [`Error::is_numerical`] is what the
/// command-line front end uses to choose an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("nonlinear solve did not converge: {0}")]
    NonConvergence(String),

    #[error("no bracket: {0}")]
    NoBracket(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("population sampling exhausted: {0}")]
    ExhaustedSampling(String),

    #[error("stuck chain: {0}")]
    StuckChain(String),

    #[error("simulation failed: {0}")]
    SimulationFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for solver and linear-algebra breakdowns, false for bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Domain(_)
            | Error::NonConvergence(_)
            | Error::NoBracket(_)
            | Error::NoSolution(_)
            | Error::NotPositiveDefinite(_)
            | Error::DegenerateData(_)
            | Error::DegenerateHull(_)
            | Error::ExhaustedSampling(_)
            | Error::StuckChain(_)
            | Error::SimulationFailed(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
