//! Cleanness checking on finite-state reactive models, via formulas that
//! relate several runs of the same model.
//!
//! Three checking modes trade precision against cost:
//!
//! * The **strengthened pairwise check** drops the trace sets from the
//!   definitions and demands that every comparison run track every standard
//!   run position by position. It is a two-run safety check, cheap and
//!   sound for cleanness: if the strengthened formula holds, the model is
//!   clean. Its violations are not yet doping evidence, which is what the
//!   **negated two-trace instances** are for: at constant inputs `a` and
//!   `b`, if no run reading `b` forever can track any standard run reading
//!   `a` forever, in either direction, and such runs exist, the model is
//!   doped.
//! * The **exact check** decides the characterisations with one trace
//!   alternation: for every standard run and every comparison run some
//!   partner, input-locked to one of them, must do the tracking. Decided by
//!   threading the set of surviving partner candidates through a product
//!   walk, which is exact because the candidate tree is finitely branching.
//! * The **bounded trace-set oracle** works on the definitions themselves:
//!   it compares the output sets reachable on two input words with the
//!   two-sided set distance, position by position, exploring subset pairs
//!   up to a depth bound. Violations are definitive, and so is a run that
//!   closes before the bound.
//!
//! All modes require input-enabled models; a model with an input gap gets
//! an `Unknown` verdict naming the gap. Distances must compare events only
//! (past-forgetful), except in the oracle, which also accepts the
//! three-valued prefix distance.

mod formula;
mod pairs;
mod product;
mod sets;
mod support;
mod trace_eval;

pub use formula::{
    exact_formulas, expand_comparison, negation_formulas, strengthened_formula, HAtom, HForm,
    HyperFormula, NegationFormulas, TraceQuant,
};
pub use pairs::{check_forall_forall, check_negation_instance};
pub use product::{check_exists_exists, ProductSystem};
pub use sets::{
    bounded_oracle_clean, bounded_oracle_fclean, bounded_oracle_robust,
    check_forall_forall_exists_exact, replay_unmatched, replay_word,
};
pub use trace_eval::{eval_body_at, eval_weak_until};

use crate::contracts::{BoundFnError, Contract, ContractError, DistanceError};
use crate::reactive::{Lasso, ModelError, TransitionSystem};
use crate::seqlang::{Env, EvalError};
use crate::value::Value;
use crate::Verdict;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum HyperError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("distance: {0}")]
    Distance(#[from] DistanceError),
    #[error("bound function: {0}")]
    Bound(#[from] BoundFnError),
    #[error("formula: {0}")]
    Formula(String),
    #[error("{0}")]
    Unsupported(String),
}

/// The cleanness notion being checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Clean,
    Robust,
    FClean,
}

impl std::fmt::Display for Property {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Property::Clean => write!(f, "clean"),
            Property::Robust => write!(f, "robust"),
            Property::FClean => write!(f, "fclean"),
        }
    }
}

/// Which checking mode to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strengthen,
    Exact,
    Oracle,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Strengthen => write!(f, "strengthen"),
            Mode::Exact => write!(f, "exact"),
            Mode::Oracle => write!(f, "oracle"),
        }
    }
}

/// A violating pair of runs: at `position`, the obligation relating `t1`
/// (the standard side) to `t2` became false. For the exact mode the pair is
/// one with no surviving partner, and `position` is where the last
/// candidate died. `measured` and `bound` name the output distance seen and
/// the bound it broke, when the obligation is a distance comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairWitness {
    pub left_var: String,
    pub right_var: String,
    pub t1: Lasso,
    pub t2: Lasso,
    pub position: usize,
    pub measured: Option<Value>,
    pub bound: Option<Value>,
}

/// A violating pair of input words from the bounded oracle: after reading
/// `std_inputs` and `cmp_inputs` up to `position`, the reachable output
/// sets are further apart than `bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordWitness {
    pub std_inputs: Vec<Env>,
    pub cmp_inputs: Vec<Env>,
    pub position: usize,
    pub measured: Value,
    pub bound: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperWitness {
    Pair(PairWitness),
    Words(WordWitness),
}

/// Default exploration depth for the bounded oracle: twice the squared
/// state count, capped at ten thousand positions.
pub fn default_oracle_depth(ts: &TransitionSystem) -> usize {
    (2 * ts.states() * ts.states()).clamp(1, 10_000)
}

/// One call for the whole reactive surface: builds the formulas for the
/// property and dispatches on the mode. In strengthen mode a `Doped`
/// verdict means the strengthened formula is violated, which callers must
/// present with the caveat that it is not yet doping evidence; the negated
/// instances and the oracle return definitive violations.
pub fn check_reactive(
    ts: &TransitionSystem,
    c: &Contract,
    prop: Property,
    mode: Mode,
    depth: Option<usize>,
) -> Result<Verdict<HyperWitness>, HyperError> {
    match mode {
        Mode::Strengthen => check_forall_forall(&strengthened_formula(c, prop)?, ts),
        Mode::Exact => {
            let mut undecided = None;
            for phi in exact_formulas(c, prop)? {
                match check_forall_forall_exists_exact(&phi, ts)? {
                    Verdict::Doped { witness } => return Ok(Verdict::Doped { witness }),
                    Verdict::Unknown { reason } => undecided = Some(reason),
                    Verdict::Clean => {}
                }
            }
            Ok(match undecided {
                Some(reason) => Verdict::Unknown { reason },
                None => Verdict::Clean,
            })
        }
        Mode::Oracle => {
            let depth = depth.unwrap_or_else(|| default_oracle_depth(ts));
            match prop {
                Property::Clean => bounded_oracle_clean(ts, c, depth),
                Property::Robust => bounded_oracle_robust(ts, c, depth),
                Property::FClean => bounded_oracle_fclean(ts, c, depth),
            }
        }
    }
}
