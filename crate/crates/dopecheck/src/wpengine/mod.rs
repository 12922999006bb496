//! Weakest-precondition checking for deterministic programs.
//!
//! The cleanness properties compare two runs of the same program, so they
//! reduce to ordinary verification conditions over a self-composition: the
//! program runs once on its own variables and once on a primed copy, and a
//! first-order formula relates the two initial and final states. [`wp`]
//! computes weakest preconditions for the deterministic fragment (loops by
//! bounded unrolling), [`vc_clean`], [`vc_robustly_clean`] and
//! [`vc_f_clean`] assemble the conditions, and [`check_validity`] discharges
//! them by exhaustive evaluation over the declared grids.

mod validity;
mod vc;
mod wp;

pub use validity::{
    check_validity, Block, CheckVcOpts, DomainSpec, ValidityError, VcReport, VcVerdict,
};
pub use vc::{
    check_wp, vc_clean, vc_domains, vc_f_clean, vc_robustly_clean, Vc, VcError, WpOpts,
    WpOutcome, WpProperty,
};
pub use wp::{grid_map, primed, rename_expr, rename_pred, rename_program, substitute,
    substitute_expr, wp, WpError, DEFAULT_UNROLL};
