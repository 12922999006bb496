//! Cleanness contracts: what counts as a parameter of interest, which
//! inputs are standard, how input and output deviations are measured, and
//! how much output deviation each input deviation may cause.

mod boundfn;
mod contract;
mod distance;
mod hausdorff;

pub use boundfn::{BoundFn, BoundFnError};
pub use contract::{Contract, ContractError, ParamSel};
pub use distance::{Distance, DistanceError};
pub use hausdorff::{hausdorff, hausdorff_by, two_clause_within, two_clause_within_by};

pub use crate::value::{Grid, Value};
