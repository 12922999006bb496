//! Discharges verification conditions by exhaustive grid evaluation.

use serde::Serialize;
use thiserror::Error;

use crate::seqlang::{eval_expr, Env, EvalError, Expr, Pred};
use crate::value::{Grid, Value};

/// One enumerated chunk of the evaluation domain. Grids enumerate a single
/// variable; row blocks enumerate several variables jointly, for parameter
/// sets given as explicit tuples.
#[derive(Debug, Clone)]
pub enum Block {
    Grid { var: String, grid: Grid },
    Rows { vars: Vec<String>, rows: Vec<Vec<Value>> },
}

impl Block {
    fn count(&self) -> usize {
        match self {
            Block::Grid { grid, .. } => grid.count(),
            Block::Rows { rows, .. } => rows.len(),
        }
    }

    fn write(&self, idx: usize, env: &mut Env) {
        match self {
            Block::Grid { var, grid } => {
                env.insert(var.clone(), grid.value_at(idx));
            }
            Block::Rows { vars, rows } => {
                for (v, val) in vars.iter().zip(&rows[idx]) {
                    env.insert(v.clone(), *val);
                }
            }
        }
    }
}

/// Evaluation domain of a formula: blocks are enumerated in order with the
/// last block varying fastest, fixed variables hold one value throughout.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub blocks: Vec<Block>,
    pub fixed: Vec<(String, Value)>,
}

impl DomainSpec {
    /// Number of states the domain enumerates.
    pub fn states(&self) -> u128 {
        self.blocks.iter().map(|b| b.count() as u128).product()
    }
}

#[derive(Debug, Error)]
pub enum ValidityError {
    #[error("variable {0} is not covered by the evaluation domain")]
    Unbound(String),
    #[error("domain has {states} states, over the limit of {max}")]
    Budget { states: u128, max: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VcVerdict {
    Valid,
    Invalid,
    Unknown,
}

/// Outcome of checking one verification condition.
#[derive(Debug, Clone, Serialize)]
pub struct VcReport {
    pub verdict: VcVerdict,
    /// Falsifying states in enumeration order, up to the configured cap.
    pub counterexamples: Vec<Env>,
    /// First state the formula could not be decided on, with the reason.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unresolved: Option<(Env, String)>,
    pub states: u64,
}

#[derive(Debug, Clone)]
pub struct CheckVcOpts {
    /// How many falsifying states to collect before stopping. The default
    /// stops at the first.
    pub max_counterexamples: usize,
    pub max_states: u64,
}

impl Default for CheckVcOpts {
    fn default() -> Self {
        CheckVcOpts { max_counterexamples: 1, max_states: 5_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum K3 {
    True,
    False,
    Unknown,
}

impl K3 {
    fn not(self) -> K3 {
        match self {
            K3::True => K3::False,
            K3::False => K3::True,
            K3::Unknown => K3::Unknown,
        }
    }

    fn and(self, other: K3) -> K3 {
        match (self, other) {
            (K3::False, _) | (_, K3::False) => K3::False,
            (K3::True, K3::True) => K3::True,
            _ => K3::Unknown,
        }
    }

    fn or(self, other: K3) -> K3 {
        match (self, other) {
            (K3::True, _) | (_, K3::True) => K3::True,
            (K3::False, K3::False) => K3::False,
            _ => K3::Unknown,
        }
    }
}

fn eval3_expr(
    e: &Expr,
    env: &Env,
    note: &mut Option<String>,
) -> Result<Option<Value>, ValidityError> {
    match eval_expr(e, env) {
        Ok(v) => Ok(Some(v)),
        Err(EvalError::Unbound(name)) => Err(ValidityError::Unbound(name)),
        Err(other) => {
            note.get_or_insert_with(|| other.to_string());
            Ok(None)
        }
    }
}

/// Three-valued evaluation: arithmetic that fails to evaluate and loop
/// summaries that neither establish the postcondition nor witness
/// termination come out unknown instead of tipping the verdict.
fn eval3(p: &Pred, env: &Env, note: &mut Option<String>) -> Result<K3, ValidityError> {
    Ok(match p {
        Pred::Bool(b) => {
            if *b {
                K3::True
            } else {
                K3::False
            }
        }
        Pred::Cmp { op, lhs, rhs } => {
            match (eval3_expr(lhs, env, note)?, eval3_expr(rhs, env, note)?) {
                (Some(a), Some(b)) => {
                    if op.eval(a, b) {
                        K3::True
                    } else {
                        K3::False
                    }
                }
                _ => K3::Unknown,
            }
        }
        Pred::InInterval { expr, lo, lo_open, hi, hi_open } => {
            match eval3_expr(expr, env, note)? {
                Some(v) => {
                    let above = if *lo_open { v > *lo } else { v >= *lo };
                    let below = if *hi_open { v < *hi } else { v <= *hi };
                    if above && below {
                        K3::True
                    } else {
                        K3::False
                    }
                }
                None => K3::Unknown,
            }
        }
        Pred::Not(a) => eval3(a, env, note)?.not(),
        Pred::And(a, b) => eval3(a, env, note)?.and(eval3(b, env, note)?),
        Pred::Or(a, b) => eval3(a, env, note)?.or(eval3(b, env, note)?),
        Pred::Implies(a, b) => eval3(a, env, note)?.not().or(eval3(b, env, note)?),
        Pred::LoopBound { disj, term } => match eval3(disj, env, note)? {
            K3::True => K3::True,
            K3::False => match eval3(term, env, note)? {
                // The loop exits within the unrolling depth but the
                // postcondition fails: a definite violation.
                K3::True => K3::False,
                _ => {
                    note.get_or_insert_with(|| {
                        "loop not resolved within the unrolling depth".to_string()
                    });
                    K3::Unknown
                }
            },
            K3::Unknown => K3::Unknown,
        },
    })
}

/// Evaluates the formula on every state of the domain. The verdict is
/// invalid as soon as any state definitely falsifies it; unknown states
/// alone degrade the verdict to unknown.
pub fn check_validity(
    formula: &Pred,
    dom: &DomainSpec,
    opts: &CheckVcOpts,
) -> Result<VcReport, ValidityError> {
    let total = dom.states();
    if total > opts.max_states as u128 {
        return Err(ValidityError::Budget { states: total, max: opts.max_states });
    }

    let mut env = Env::new();
    for (name, val) in &dom.fixed {
        env.insert(name.clone(), *val);
    }

    let mut counterexamples = Vec::new();
    let mut unresolved: Option<(Env, String)> = None;
    let mut states = 0u64;

    let counts: Vec<usize> = dom.blocks.iter().map(Block::count).collect();
    if counts.contains(&0) {
        return Ok(VcReport {
            verdict: VcVerdict::Valid,
            counterexamples,
            unresolved,
            states,
        });
    }
    let mut idx = vec![0usize; dom.blocks.len()];
    'scan: loop {
        for (b, &i) in dom.blocks.iter().zip(&idx) {
            b.write(i, &mut env);
        }
        states += 1;
        let mut note = None;
        match eval3(formula, &env, &mut note)? {
            K3::True => {}
            K3::False => {
                counterexamples.push(env.clone());
                if counterexamples.len() >= opts.max_counterexamples {
                    break 'scan;
                }
            }
            K3::Unknown => {
                if unresolved.is_none() {
                    let why = note.unwrap_or_else(|| "undecided subformula".to_string());
                    unresolved = Some((env.clone(), why));
                }
            }
        }
        // Odometer step, last block fastest.
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                break 'scan;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < counts[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }

    let verdict = if !counterexamples.is_empty() {
        VcVerdict::Invalid
    } else if unresolved.is_some() {
        VcVerdict::Unknown
    } else {
        VcVerdict::Valid
    };
    Ok(VcReport { verdict, counterexamples, unresolved, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqlang::parse_pred;

    fn grid(lo: &str, hi: &str, step: &str) -> Grid {
        Grid::new(lo.parse().unwrap(), hi.parse().unwrap(), step.parse().unwrap()).unwrap()
    }

    fn dom(blocks: Vec<Block>) -> DomainSpec {
        DomainSpec { blocks, fixed: Vec::new() }
    }

    #[test]
    fn tautologies_are_valid() {
        let d = dom(vec![Block::Grid { var: "x".into(), grid: grid("0", "2", "1") }]);
        let r = check_validity(&Pred::Bool(true), &d, &CheckVcOpts::default()).unwrap();
        assert_eq!(r.verdict, VcVerdict::Valid);
        assert_eq!(r.states, 3);
    }

    #[test]
    fn first_counterexample_is_lexicographic() {
        let d = dom(vec![Block::Grid { var: "x".into(), grid: grid("0", "2", "1") }]);
        let q = parse_pred("x <= 1").unwrap();
        let r = check_validity(&q, &d, &CheckVcOpts::default()).unwrap();
        assert_eq!(r.verdict, VcVerdict::Invalid);
        assert_eq!(r.counterexamples[0]["x"], "2".parse().unwrap());
    }

    #[test]
    fn row_blocks_bind_tuples_jointly() {
        let d = dom(vec![Block::Rows {
            vars: vec!["a".into(), "b".into()],
            rows: vec![
                vec!["0".parse().unwrap(), "1".parse().unwrap()],
                vec!["1".parse().unwrap(), "0".parse().unwrap()],
            ],
        }]);
        let q = parse_pred("a + b = 1").unwrap();
        let r = check_validity(&q, &d, &CheckVcOpts::default()).unwrap();
        assert_eq!(r.verdict, VcVerdict::Valid);
        assert_eq!(r.states, 2);
    }

    #[test]
    fn arithmetic_failures_degrade_to_unknown() {
        let d = dom(vec![Block::Grid { var: "x".into(), grid: grid("0", "1", "1") }]);
        // Division by zero at x = 0 cannot settle the comparison there.
        let q = parse_pred("1 / x >= 0").unwrap();
        let r = check_validity(&q, &d, &CheckVcOpts::default()).unwrap();
        assert_eq!(r.verdict, VcVerdict::Unknown);
        let (at, why) = r.unresolved.unwrap();
        assert_eq!(at["x"], Value::ZERO);
        assert!(why.contains("zero"), "{why}");
    }

    #[test]
    fn definite_violations_outrank_unknowns() {
        let d = dom(vec![Block::Grid { var: "x".into(), grid: grid("0", "2", "1") }]);
        // x = 0 divides by zero, x = 2 definitely violates.
        let q = parse_pred("1 / x >= 0 && x <= 1").unwrap();
        let r = check_validity(&q, &d, &CheckVcOpts::default()).unwrap();
        assert_eq!(r.verdict, VcVerdict::Invalid);
        assert_eq!(r.counterexamples[0]["x"], "2".parse().unwrap());
    }

    #[test]
    fn budget_overrun_is_an_error() {
        let d = dom(vec![Block::Grid { var: "x".into(), grid: grid("0", "2", "1") }]);
        let opts = CheckVcOpts { max_states: 2, ..CheckVcOpts::default() };
        assert!(matches!(
            check_validity(&Pred::Bool(true), &d, &opts),
            Err(ValidityError::Budget { states: 3, max: 2 })
        ));
    }

    #[test]
    fn unbound_variables_are_a_domain_error() {
        let d = dom(vec![]);
        let q = parse_pred("x <= 1").unwrap();
        assert!(matches!(
            check_validity(&q, &d, &CheckVcOpts::default()),
            Err(ValidityError::Unbound(name)) if name == "x"
        ));
    }

    #[test]
    fn loop_summaries_evaluate_three_valued() {
        use crate::wpengine::wp::{grid_map, wp};
        let p = crate::seqlang::parse_program(
            "input x : [0, 5] step 1;\noutput y : [0, 5] step 1;\n\
             y := x;\nwhile y > 0 { y := y - 1; }\n",
        )
        .unwrap();
        let grids = grid_map(&[&p]);
        let q = parse_pred("y = 0").unwrap();
        let d = DomainSpec {
            blocks: vec![Block::Grid { var: "x".into(), grid: grid("0", "5", "1") }],
            fixed: vec![("y".into(), Value::ZERO)],
        };

        // Deep enough unrolling proves the loop counts down to zero.
        let full = wp(&grids, &p.body, q.clone(), 8).unwrap();
        let r = check_validity(&full, &d, &CheckVcOpts::default()).unwrap();
        assert_eq!(r.verdict, VcVerdict::Valid);

        // A depth of two leaves x >= 3 unresolved.
        let shallow = wp(&grids, &p.body, q, 2).unwrap();
        let r = check_validity(&shallow, &d, &CheckVcOpts::default()).unwrap();
        assert_eq!(r.verdict, VcVerdict::Unknown);
        let (at, why) = r.unresolved.unwrap();
        assert_eq!(at["x"], "3".parse().unwrap());
        assert!(why.contains("unrolling"), "{why}");
    }
}
