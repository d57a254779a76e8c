use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised when an input violates an operation's precondition or an
/// approximation is evaluated outside the region where it is defined.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on the arguments does not hold.
    InvalidInput(String),
    /// `x` lies outside the range reachable by the truncated CGF's derivative.
    OutOfDomain { x: f64, bound: f64 },
    /// The CGF curvature at the saddlepoint is not positive.
    InvalidCurvature { curvature: f64 },
    /// The summed score derivative is (numerically) zero.
    DegenerateDerivative { sum: f64 },
    /// A ratio's denominator vanished.
    ZeroDenominator(&'static str),
    /// A quantity that must be nonnegative came out negative.
    NumericalDomain(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::OutOfDomain { x, bound } => write!(
                f,
                "x = {x} is outside the truncated CGF domain (bound {bound})"
            ),
            Error::InvalidCurvature { curvature } => {
                write!(
                    f,
                    "non-positive CGF curvature {curvature} at the saddlepoint"
                )
            }
            Error::DegenerateDerivative { sum } => {
                write!(
                    f,
                    "score derivative sum {sum} is degenerate at the initializer"
                )
            }
            Error::ZeroDenominator(what) => write!(f, "zero denominator in {what}"),
            Error::NumericalDomain(msg) => write!(f, "numerical domain error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
