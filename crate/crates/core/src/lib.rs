//! Optimal control of dissipative bilinear systems through semidefinite
//! programming.
//!
//! The library works with a family of systems in which a set of amplitudes
//! couples through a matrix `A` whose symmetric part is negative definite,
//! with per-coordinate phase controls bounded by one. Maximizing the final
//! value of the last coordinate reduces to a small dense SDP over a
//! positive-semidefinite matrix `M`; the optimizer of that program yields a
//! piecewise-constant direction schedule, a state feedback law, and the
//! reachable set.
//!
//! Modules mirror the pipeline:
//!
//! * [`linalg`] — dense symmetric-matrix kernel (Jacobi eigensolver,
//!   Cholesky, trace inner products).
//! * [`problem`] — instance description, validation, constraint matrices,
//!   and coordinate conversions between the three state spaces.
//! * [`sdp`] — primal-dual interior-point solver and optimality
//!   certification.
//! * [`lowrank`] — numerical rank, rank bounds, constructive rank reduction,
//!   and a randomized probe of the rank-1 phenomenon.
//! * [`synthesis`] — direction schedules, feedback laws, and physical
//!   control signals.
//! * [`simulate`] — exact piecewise-linear squared-amplitude trajectories and
//!   adaptive Runge–Kutta integration of the radial and bilinear systems.
//! * [`reachable`] — reachable-set construction by per-slice SDP sweeps.
//! * [`oracles`] — closed forms for the two analytically solvable families,
//!   used as independent checks.

pub mod linalg;
pub mod lowrank;
pub mod oracles;
pub mod problem;
pub mod reachable;
pub mod sdp;
pub mod simulate;
pub mod synthesis;

use std::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operands have incompatible dimensions.
    DimensionMismatch { expected: usize, found: usize },
    /// An argument violates a documented precondition.
    InvalidInput(String),
    /// An iterative routine failed to converge or produced garbage.
    NumericFailure(String),
    /// Cholesky factorization hit a non-positive pivot.
    NotPositiveDefinite,
    /// A physical control cannot realize the requested phase motion.
    SingularControl(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NumericFailure(msg) => write!(f, "numeric failure: {msg}"),
            Error::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            Error::SingularControl(msg) => write!(f, "singular control: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
