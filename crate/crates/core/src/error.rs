use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("series base points differ: {0} vs {1}")]
    BaseMismatch(Complex64, Complex64),
    #[error("division by a series with vanishing constant term")]
    ZeroConstantTerm,
    #[error("{0} of a series with zero constant term")]
    BranchPoint(&'static str),
    #[error("seed {seed} is not a root (residual {residual:.3e})")]
    NotARoot { seed: Complex64, residual: f64 },
    #[error("Newton step singular at {0}: base is a leading-order singularity")]
    SingularNewton(Complex64),
    #[error("coalescing branches: {0} is a singular point")]
    CoalescingBranches(Complex64),
    #[error("{point} lies within {dist:.3e} of singular point {singular}")]
    TooCloseToSingularity { point: Complex64, singular: Complex64, dist: f64 },
    #[error("branch continuation failed near {0}")]
    ContinuationFailed(Complex64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("order budget exhausted: {0}")]
    OrderBudget(String),
    #[error("path passes within {dist:.3e} of singular point {singular}")]
    PathCollision { singular: Complex64, dist: f64 },
    #[error("path crosses a branch cut at {0}")]
    CrossesCut(Complex64),
    #[error("quadrature tolerance not met (estimate {0:.3e})")]
    Quadrature(f64),
    #[error("{0} lies on a Stokes or anti-Stokes curve")]
    OnCurve(Complex64),
    #[error("{0} lies on a branch cut")]
    OnCut(Complex64),
    #[error("too few terms for a late-order fit: {0}")]
    InsufficientTerms(usize),
    #[error("degenerate truncation: |chi|/eps = {0:.3e}")]
    DegenerateTruncation(f64),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("turning point of the singulant at {0}")]
    TurningPoint(Complex64),
}

pub type Result<T> = std::result::Result<T, Error>;
