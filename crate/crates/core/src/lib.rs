#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod cumulant;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod integrate;
pub mod kernel;
pub mod observables;
pub mod scenarios;
pub mod twotime;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod book_geometry {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/couplings.md")]
pub mod book_couplings {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/exact.md")]
pub mod book_exact {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/hierarchy.md")]
pub mod book_hierarchy {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/correlations.md")]
pub mod book_correlations {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/observables.md")]
pub mod book_observables {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod book_scenarios {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod book_cli {}
