use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node index {index} out of range for a graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("graph file parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("duplicate edge {from} -> {to} (listed at edges[{first}] and edges[{second}])")]
    DuplicateEdge {
        from: usize,
        to: usize,
        first: usize,
        second: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("pin set is empty")]
    EmptyPinSet,

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("Laplacian is not diagonalizable (eigenvector condition number {condition:.3e})")]
    NonDiagonalizable { condition: f64 },

    #[error("Laplacian spectrum is not real (max |Im theta| = {max_imag:.3e})")]
    ComplexSpectrum { max_imag: f64 },

    #[error("Laplacian is not normalized: in-degrees range over [{min}, {max}]")]
    NotNormalized { min: f64, max: f64 },

    #[error("all nodes are pinned; the reduced system is empty")]
    AllPinned,

    #[error("no positive solution of a^2 + b^2 = 1 was bracketed")]
    NoRoot,

    #[error("step size {step} exceeds a quarter of the smallest positive delay {delay}")]
    StepTooLarge { step: f64, delay: f64 },

    #[error("segment norm is zero or not finite (zero history, or overflow)")]
    DegenerateNorm,

    #[error("characteristic matrix is singular at lambda = {re} + {im}i")]
    SingularAtPoint { re: f64, im: f64 },

    #[error("no characteristic root found in the search region")]
    NoRootFound,

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input or
    /// a violated precondition.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoRoot
                | Error::DegenerateNorm
                | Error::SingularAtPoint { .. }
                | Error::NoRootFound
                | Error::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
