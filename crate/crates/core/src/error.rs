use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A square matrix was required.
    NonSquare { rows: usize, cols: usize },
    /// NaN or infinite value produced or supplied.
    NonFinite { context: &'static str },
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// Pivot below `1e-12 * ||A||` during factorization. `at` carries the
    /// state where the matrix field was evaluated, when known.
    SingularMatrix { at: Option<Vec<f64>> },
    /// Weight matrix of a QPQ storage is not symmetric positive semidefinite.
    InvalidP { min_eigenvalue: f64, asymmetry: f64 },
    /// Metric field is not positive definite at a sampled point.
    NotAMetric { at: Vec<f64>, min_eigenvalue: f64 },
    /// Linear fixture violates `A'P + PA <= 0` or `C' = PB`.
    InvalidFixture { reason: &'static str, value: f64 },
    /// Rigid-body inertias are not strictly ordered `I1 > I2 > I3`.
    InvalidInertia,
    Diverged { t: f64 },
    Parse(crate::simulate::signal::ParseError),
    InvalidArgument(String),
    /// Evaluator failure at a state, wrapping the underlying cause.
    Evaluation { at: Vec<f64>, source: Box<Error> },
}

impl Error {
    pub(crate) fn at(self, x: &[f64]) -> Error {
        match self {
            Error::SingularMatrix { at: None } => Error::SingularMatrix { at: Some(x.to_vec()) },
            e @ (Error::Evaluation { .. } | Error::SingularMatrix { .. }) => e,
            e => Error::Evaluation {
                at: x.to_vec(),
                source: Box::new(e),
            },
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonSquare { rows, cols } => write!(f, "expected a square matrix, got {rows}x{cols}"),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, found {found}")
            }
            Error::SingularMatrix { at: Some(x) } => write!(f, "singular matrix at x = {x:?}"),
            Error::SingularMatrix { at: None } => write!(f, "singular matrix"),
            Error::InvalidP { min_eigenvalue, asymmetry } => write!(
                f,
                "P must be symmetric positive semidefinite (min eigenvalue {min_eigenvalue:e}, asymmetry {asymmetry:e})"
            ),
            Error::NotAMetric { at, min_eigenvalue } => write!(
                f,
                "Q is not positive definite at x = {at:?} (min eigenvalue {min_eigenvalue:e})"
            ),
            Error::InvalidFixture { reason, value } => write!(f, "invalid linear fixture: {reason} ({value:e})"),
            Error::InvalidInertia => write!(f, "inertias must satisfy I1 > I2 > I3"),
            Error::Diverged { t } => write!(f, "integration diverged at t = {t}"),
            Error::Parse(e) => write!(f, "{e}"),
            Error::InvalidArgument(msg) => write!(f, "{msg}"),
            Error::Evaluation { at, source } => write!(f, "evaluation failed at x = {at:?}: {source}"),
        }
    }
}

impl core::error::Error for Error {}

impl From<crate::simulate::signal::ParseError> for Error {
    fn from(e: crate::simulate::signal::ParseError) -> Self {
        Error::Parse(e)
    }
}
