//! Ultimately periodic runs and temporal predicates over them.

use super::{StateId, TransitionSystem};
use crate::seqlang::{eval_pred, Env, EvalError, TemporalPred};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LassoError {
    #[error("lasso cycle is empty")]
    EmptyCycle,
    #[error("lasso starts in {0}, which is not an initial state")]
    NotInitial(StateId),
    #[error("lasso uses a transition {0} -> {1} the model lacks")]
    NoEdge(StateId, StateId),
    #[error("state {0} is out of range")]
    BadStateRef(StateId),
}

/// An infinite run with a finite description: the states of `stem` once,
/// then the states of `cycle` forever.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lasso {
    pub stem: Vec<StateId>,
    pub cycle: Vec<StateId>,
}

impl Lasso {
    pub fn new(stem: Vec<StateId>, cycle: Vec<StateId>) -> Lasso {
        Lasso { stem, cycle }
    }

    /// The state at position `k` of the unrolled run.
    pub fn state_at(&self, k: usize) -> StateId {
        if k < self.stem.len() {
            self.stem[k]
        } else {
            self.cycle[(k - self.stem.len()) % self.cycle.len()]
        }
    }

    /// Positions `0..horizon()` visit every state of the run at least once.
    pub fn horizon(&self) -> usize {
        self.stem.len() + self.cycle.len()
    }

    pub fn env_at(&self, ts: &TransitionSystem, k: usize) -> Env {
        ts.state_env(self.state_at(k))
    }

    /// Checks the lasso is an actual run of the model: starts initial,
    /// follows transitions, and closes its cycle.
    pub fn validate(&self, ts: &TransitionSystem) -> Result<(), LassoError> {
        if self.cycle.is_empty() {
            return Err(LassoError::EmptyCycle);
        }
        let n = ts.states() as StateId;
        for &s in self.stem.iter().chain(&self.cycle) {
            if s >= n {
                return Err(LassoError::BadStateRef(s));
            }
        }
        let first = self.state_at(0);
        if !ts.initial().contains(&first) {
            return Err(LassoError::NotInitial(first));
        }
        for k in 0..self.horizon() {
            let here = self.state_at(k);
            let next = self.state_at(k + 1);
            if !ts.succ(here).contains(&next) {
                return Err(LassoError::NoEdge(here, next));
            }
        }
        Ok(())
    }
}

/// Evaluates a temporal predicate over the run, starting at its first event.
pub fn eval_temporal(
    ts: &TransitionSystem,
    lasso: &Lasso,
    t: &TemporalPred,
) -> Result<bool, EvalError> {
    eval_temporal_at(ts, lasso, t, 0)
}

/// Evaluates a temporal predicate over the suffix of the run starting at
/// position `k`. Exact: the run repeats with the cycle period, so a window
/// of one period past `max(k, stem length)` covers every reachable event.
pub fn eval_temporal_at(
    ts: &TransitionSystem,
    lasso: &Lasso,
    t: &TemporalPred,
    k: usize,
) -> Result<bool, EvalError> {
    let window = |k: usize| k.max(lasso.stem.len()) + lasso.cycle.len();
    match t {
        TemporalPred::Lift(p) => eval_pred(p, &lasso.env_at(ts, k)),
        TemporalPred::Globally(p) => {
            for j in k..window(k) {
                if !eval_pred(p, &lasso.env_at(ts, j))? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        TemporalPred::Next(inner) => eval_temporal_at(ts, lasso, inner, k + 1),
        TemporalPred::WeakUntil(p, q) => {
            for j in k..window(k) {
                let env = lasso.env_at(ts, j);
                if eval_pred(q, &env)? {
                    return Ok(true);
                }
                if !eval_pred(p, &env)? {
                    return Ok(false);
                }
            }
            // One full period with p and never q: p holds forever.
            Ok(true)
        }
        TemporalPred::And(a, b) => {
            Ok(eval_temporal_at(ts, lasso, a, k)? && eval_temporal_at(ts, lasso, b, k)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reactive::{ModelBuilder, VarSpec};
    use crate::seqlang::{parse_temporal, Role};
    use crate::value::{Grid, Value};

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    /// Three states with x = 0, 1, 2 on a chain 0 -> 1 -> 2 -> 2.
    fn chain() -> (TransitionSystem, Lasso) {
        let grid = Grid::new(v("0"), v("2"), v("1")).unwrap();
        let mut b = ModelBuilder::new("chain", vec![VarSpec::new("x", Role::Input, grid)]).unwrap();
        let s0 = b.state(&[("x", v("0"))]).unwrap();
        let s1 = b.state(&[("x", v("1"))]).unwrap();
        let s2 = b.state(&[("x", v("2"))]).unwrap();
        b.mark_initial(s0);
        b.edge(s0, s1);
        b.edge(s1, s2);
        b.edge(s2, s2);
        let ts = b.finish().unwrap();
        let run = Lasso::new(vec![s0, s1], vec![s2]);
        (ts, run)
    }

    #[test]
    fn positions_unroll_the_cycle() {
        let (_, run) = chain();
        assert_eq!(run.state_at(0), 0);
        assert_eq!(run.state_at(1), 1);
        assert_eq!(run.state_at(2), 2);
        assert_eq!(run.state_at(17), 2);
        assert_eq!(run.horizon(), 3);
    }

    #[test]
    fn validate_checks_edges_and_start() {
        let (ts, run) = chain();
        assert_eq!(run.validate(&ts), Ok(()));
        assert_eq!(
            Lasso::new(vec![], vec![1]).validate(&ts),
            Err(LassoError::NotInitial(1))
        );
        assert_eq!(
            Lasso::new(vec![0], vec![2]).validate(&ts),
            Err(LassoError::NoEdge(0, 2))
        );
        assert_eq!(
            Lasso::new(vec![0, 1, 2], vec![]).validate(&ts),
            Err(LassoError::EmptyCycle)
        );
        // The cycle must close on itself.
        assert_eq!(
            Lasso::new(vec![0], vec![1, 2]).validate(&ts),
            Err(LassoError::NoEdge(2, 1))
        );
        assert_eq!(
            Lasso::new(vec![], vec![9]).validate(&ts),
            Err(LassoError::BadStateRef(9))
        );
    }

    #[test]
    fn temporal_evaluation_on_the_chain() {
        let (ts, run) = chain();
        let eval = |src: &str| eval_temporal(&ts, &run, &parse_temporal(src).unwrap()).unwrap();
        assert!(eval("x = 0"));
        assert!(!eval("x = 1"));
        assert!(eval("X(x = 1)"));
        assert!(eval("X(X(G(x = 2)))"));
        assert!(!eval("G(x <= 1)"));
        assert!(eval("G(x <= 2)"));
        assert!(eval("(x <= 1) W (x = 2)"));
        assert!(!eval("(x = 0) W (x = 2)"));
        assert!(eval("x = 0 && X(G(x >= 1))"));
    }

    #[test]
    fn weak_until_without_release_needs_p_forever() {
        let (ts, _) = chain();
        let stay = Lasso::new(vec![], vec![0, 1]);
        // There is no edge 1 -> 0, so this is not a run, but evaluation is
        // defined on any lasso.
        let t = parse_temporal("(x <= 1) W (x = 5)").unwrap();
        assert!(eval_temporal(&ts, &stay, &t).unwrap());
        let t = parse_temporal("(x = 0) W (x = 5)").unwrap();
        assert!(!eval_temporal(&ts, &stay, &t).unwrap());
    }

    #[test]
    fn unbound_variables_surface_as_errors() {
        let (ts, run) = chain();
        let t = parse_temporal("G(y = 0)").unwrap();
        assert!(matches!(eval_temporal(&ts, &run, &t), Err(EvalError::Unbound(_))));
    }
}
