//! Decides whether parameterized programs are clean or doped.
//!
//! A program family is *clean* when every pair of parameter instantiations
//! agrees on the inputs of interest, *robustly clean* when bounded input
//! deviations can only cause bounded output deviations, and *f-clean* when
//! the output deviation is bounded by a user-supplied function of the input
//! deviation. This crate checks those properties three ways:
//!
//! * enumeration over the finite grid semantics of a small imperative
//!   language ([`seqcheck`]),
//! * weakest-precondition verification conditions over a self-composed
//!   program, discharged by enumeration ([`wpengine`]),
//! * hyperproperty checking on finite-state reactive models, via bounded
//!   product exploration, a strengthened universal formula, negated
//!   two-trace instances, and an exact search for the one-alternation
//!   fragment ([`hypercheck`]).
//!
//! [`casestudy`] ships the emission-control and printer models the checks
//! are calibrated against, and the `dopecheck` binary exposes everything on
//! the command line.

pub mod casestudy;
pub mod contracts;
pub mod hypercheck;
pub mod reactive;
pub mod report;
pub mod seqcheck;
pub mod seqlang;
pub mod testgen;
pub mod value;
pub mod wpengine;

pub use contracts::Contract;
pub use value::{Grid, Value};

/// Verdict of any doping check, generic over the witness carried by `Doped`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Verdict<W> {
    /// The property holds.
    Clean,
    /// The property is violated; the witness says where.
    Doped { witness: W },
    /// The check could not decide within its budget or preconditions.
    Unknown { reason: String },
}

impl<W> Verdict<W> {
    pub fn is_clean(&self) -> bool {
        matches!(self, Verdict::Clean)
    }

    pub fn is_doped(&self) -> bool {
        matches!(self, Verdict::Doped { .. })
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, Verdict::Unknown { .. })
    }

    /// Drops the witness, keeping only the outcome.
    pub fn outcome(&self) -> Outcome {
        match self {
            Verdict::Clean => Outcome::Clean,
            Verdict::Doped { .. } => Outcome::Doped,
            Verdict::Unknown { .. } => Outcome::Unknown,
        }
    }

    pub fn map_witness<V>(self, f: impl FnOnce(W) -> V) -> Verdict<V> {
        match self {
            Verdict::Clean => Verdict::Clean,
            Verdict::Doped { witness } => Verdict::Doped { witness: f(witness) },
            Verdict::Unknown { reason } => Verdict::Unknown { reason },
        }
    }
}

/// Witness-free verdict, used when only the outcome matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Clean,
    Doped,
    Unknown,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Clean => write!(f, "clean"),
            Outcome::Doped => write!(f, "doped"),
            Outcome::Unknown => write!(f, "unknown"),
        }
    }
}
