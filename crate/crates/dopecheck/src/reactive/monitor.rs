//! Stepwise monitoring of temporal predicates along runs.
//!
//! The supported temporal layer (state predicates, `G`, `X`, `W`, `&&`) only
//! expresses safety: a run violates a formula at the first event that can no
//! longer be extended into a satisfying run, and satisfies it if that never
//! happens. That makes the formula checkable one event at a time by formula
//! rewriting. Each step consumes one event and leaves the obligation on the
//! rest of the run; reaching `false` means the prefix already violates.

use super::{ModelError, StateId, TransitionSystem};
use crate::seqlang::{eval_pred, Env, EvalError, Pred, TemporalPred};
use std::collections::{HashMap, HashSet};

pub type MonId = u32;

const FALSE: TemporalPred = TemporalPred::Lift(Pred::Bool(false));

pub(crate) fn is_false(t: &TemporalPred) -> bool {
    matches!(t, TemporalPred::Lift(Pred::Bool(false)))
}

fn mk_and(a: TemporalPred, b: TemporalPred) -> TemporalPred {
    if is_false(&a) || is_false(&b) {
        return FALSE;
    }
    if a.is_trivially_true() || a == b {
        return b;
    }
    if b.is_trivially_true() {
        return a;
    }
    TemporalPred::And(Box::new(a), Box::new(b))
}

pub(crate) fn step_formula(t: &TemporalPred, env: &Env) -> Result<TemporalPred, EvalError> {
    match t {
        TemporalPred::Lift(p) => Ok(TemporalPred::Lift(Pred::Bool(eval_pred(p, env)?))),
        TemporalPred::Globally(p) => {
            if eval_pred(p, env)? {
                Ok(t.clone())
            } else {
                Ok(FALSE)
            }
        }
        TemporalPred::Next(inner) => Ok((**inner).clone()),
        TemporalPred::WeakUntil(p, q) => {
            if eval_pred(q, env)? {
                Ok(TemporalPred::TRUE)
            } else if eval_pred(p, env)? {
                Ok(t.clone())
            } else {
                Ok(FALSE)
            }
        }
        TemporalPred::And(a, b) => Ok(mk_and(step_formula(a, env)?, step_formula(b, env)?)),
    }
}

/// A deterministic monitor for one temporal predicate over one model's
/// states. Monitor states are the rewritten obligations, interned; steps
/// are memoized per (obligation, state label).
pub struct Monitor<'ts> {
    ts: &'ts TransitionSystem,
    states: Vec<TemporalPred>,
    index: HashMap<String, MonId>,
    steps: Vec<HashMap<u64, MonId>>,
}

impl<'ts> Monitor<'ts> {
    pub fn new(
        ts: &'ts TransitionSystem,
        formula: &TemporalPred,
    ) -> Result<Monitor<'ts>, ModelError> {
        for var in formula.vars() {
            if ts.var(&var).is_none() {
                return Err(ModelError::UnknownVar(var));
            }
        }
        let mut mon = Monitor { ts, states: Vec::new(), index: HashMap::new(), steps: Vec::new() };
        mon.intern(formula.clone());
        Ok(mon)
    }

    fn intern(&mut self, t: TemporalPred) -> MonId {
        let key = t.to_string();
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.states.len() as MonId;
        self.states.push(t);
        self.steps.push(HashMap::new());
        self.index.insert(key, id);
        id
    }

    /// The obligation before any event is consumed.
    pub fn initial(&self) -> MonId {
        0
    }

    pub fn formula(&self, m: MonId) -> &TemporalPred {
        &self.states[m as usize]
    }

    /// The prefix so far already violates the formula.
    pub fn is_false(&self, m: MonId) -> bool {
        is_false(&self.states[m as usize])
    }

    /// Every continuation satisfies the formula.
    pub fn is_true(&self, m: MonId) -> bool {
        self.states[m as usize].is_trivially_true()
    }

    /// Consumes the event of state `s`, returning the remaining obligation.
    pub fn step(&mut self, m: MonId, s: StateId) -> Result<MonId, EvalError> {
        let label = self.ts.label(s);
        if let Some(&next) = self.steps[m as usize].get(&label) {
            return Ok(next);
        }
        let next = step_formula(&self.states[m as usize], &self.ts.state_env(s))?;
        let next = self.intern(next);
        self.steps[m as usize].insert(label, next);
        Ok(next)
    }

    /// The pairs (state, obligation after its event) reachable from the
    /// initial states from which some infinite run keeps the formula alive.
    /// For this safety fragment that means some run from the pair onward
    /// satisfies the remaining obligation.
    pub fn live_set(&mut self) -> Result<HashSet<(StateId, MonId)>, EvalError> {
        let mut nodes: Vec<(StateId, MonId)> = Vec::new();
        let mut id_of: HashMap<(StateId, MonId), usize> = HashMap::new();
        let mut edges: Vec<Vec<usize>> = Vec::new();
        let mut queue: Vec<usize> = Vec::new();

        let init = self.initial();
        for &s in self.ts.initial() {
            let m = self.step(init, s)?;
            if self.is_false(m) {
                continue;
            }
            id_of.entry((s, m)).or_insert_with(|| {
                nodes.push((s, m));
                edges.push(Vec::new());
                queue.push(nodes.len() - 1);
                nodes.len() - 1
            });
        }
        let mut at = 0;
        while at < queue.len() {
            let id = queue[at];
            at += 1;
            let (s, m) = nodes[id];
            for &t in self.ts.succ(s) {
                let m2 = self.step(m, t)?;
                if self.is_false(m2) {
                    continue;
                }
                let next_id = *id_of.entry((t, m2)).or_insert_with(|| {
                    nodes.push((t, m2));
                    edges.push(Vec::new());
                    queue.push(nodes.len() - 1);
                    nodes.len() - 1
                });
                edges[id].push(next_id);
            }
        }

        // Greatest fixpoint: drop nodes whose every successor was dropped.
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        let mut out_count: Vec<usize> = vec![0; nodes.len()];
        for (id, outs) in edges.iter().enumerate() {
            out_count[id] = outs.len();
            for &t in outs {
                rev[t].push(id);
            }
        }
        let mut dead: Vec<usize> =
            (0..nodes.len()).filter(|&id| out_count[id] == 0).collect();
        let mut alive = vec![true; nodes.len()];
        while let Some(id) = dead.pop() {
            if !alive[id] {
                continue;
            }
            alive[id] = false;
            for &p in &rev[id] {
                if alive[p] {
                    out_count[p] -= 1;
                    if out_count[p] == 0 {
                        dead.push(p);
                    }
                }
            }
        }
        Ok(nodes
            .into_iter()
            .enumerate()
            .filter(|&(id, _)| alive[id])
            .map(|(_, pair)| pair)
            .collect())
    }
}
