pub mod coefficients;
pub mod error;
pub mod leading;
pub mod precision;
pub mod quadrature;
pub mod richardson;
pub mod series;
pub mod singulant;
pub mod solver;
pub mod stokes;

pub use error::{Error, Result};

// Book chapters run as doctests of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/leading-order.md")]
    mod leading_order {}
    #[doc = include_str!("../../../book/src/coefficients.md")]
    mod coefficients {}
    #[doc = include_str!("../../../book/src/singulants.md")]
    mod singulants {}
    #[doc = include_str!("../../../book/src/stokes.md")]
    mod stokes {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
