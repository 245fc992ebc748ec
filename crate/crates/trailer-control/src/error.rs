use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A joint angle reached its singular bound or the steering/hitch
    /// coupling factor vanished.
    SingularConfiguration(String),
    /// An argument left its admissible range.
    OutOfRange(String),
    /// The Frenet transform broke down (1 - kappa*z3 at or below tolerance).
    TubeViolation { denominator: f64 },
    /// Two non-adjacent path points tie as nearest projection.
    AmbiguousProjection { s_first: f64, s_second: f64 },
    /// A parameter set contains no feasible point.
    EmptyFeasibleSet,
    /// The LMI system admits no common Lyapunov matrix at the requested
    /// decay rate; carries the best margin attained.
    Infeasible { best_margin: f64 },
    /// An iterative routine hit its iteration cap.
    MaxIterations(String),
    /// No stabilizing Riccati solution exists for the given data.
    NoStabilizingSolution(String),
    /// A numerical cross-check failed (cancellation, validation grid, ...).
    Numerical(String),
    /// Configuration file problem.
    Config(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SingularConfiguration(msg) => write!(f, "singular configuration: {msg}"),
            Error::OutOfRange(msg) => write!(f, "out of range: {msg}"),
            Error::TubeViolation { denominator } => {
                write!(f, "Frenet tube violated (1 - kappa*z3 = {denominator:.6e})")
            }
            Error::AmbiguousProjection { s_first, s_second } => write!(
                f,
                "ambiguous projection: s = {s_first:.6} and s = {s_second:.6} tie"
            ),
            Error::EmptyFeasibleSet => write!(f, "parameter set has no feasible point"),
            Error::Infeasible { best_margin } => {
                write!(f, "LMI infeasible (best margin {best_margin:.3e})")
            }
            Error::MaxIterations(msg) => write!(f, "iteration limit: {msg}"),
            Error::NoStabilizingSolution(msg) => write!(f, "no stabilizing solution: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
