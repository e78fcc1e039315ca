//! Truncated operator hierarchies: expectation values of products of up to
//! three single-atom operators, closed by dropping higher cumulants.

pub mod closure;
mod fast;
mod rhs;
mod state;
mod terms;

pub use rhs::{rhs, rhs_linear, Assembly, Hierarchy};
pub use state::{HierarchyState, Order};
pub use terms::{Coupling, OneAtomTerms, TwoAtomTensors, U_ENTRIES, V_ENTRIES};

pub(crate) use state::Ops;
