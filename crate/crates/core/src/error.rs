use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the principal Lambert W domain `z >= -1/e`.
    LambertDomain(f64),
    /// A group needs at least two members.
    GroupTooSmall(usize),
    RewardOutOfRange { index: usize, value: f64 },
    LengthMismatch { expected: usize, found: usize },
    InvalidDist(String),
    /// `q(y) = 0` where `p(y) > 0`.
    SupportViolation { index: usize },
    NonPositive { name: &'static str, value: f64 },
    EnumerationBudget { outcomes: usize, group_size: usize },
    /// The Lambert target has no normalized principal-branch solution.
    NoSolution,
    IndexOutOfRange { index: usize, len: usize },
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LambertDomain(z) => write!(f, "lambert W argument {z} is below -1/e"),
            Error::GroupTooSmall(g) => write!(f, "group size {g} is below the minimum of 2"),
            Error::RewardOutOfRange { index, value } => {
                write!(f, "reward {value} at position {index} is outside [0, 1]")
            }
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::InvalidDist(msg) => write!(f, "invalid distribution: {msg}"),
            Error::SupportViolation { index } => {
                write!(f, "support violation at outcome {index}")
            }
            Error::NonPositive { name, value } => write!(f, "{name} must be positive, got {value}"),
            Error::EnumerationBudget { outcomes, group_size } => write!(
                f,
                "enumeration budget exceeded: {outcomes}^{group_size} outcome tuples"
            ),
            Error::NoSolution => f.write_str("lambert target has no principal-branch solution"),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}
