//! Shared plumbing for the reactive checkers: the input alphabet with its
//! decoded valuations, a letter-indexed monitor for the standard-input
//! spec, distance tables over letters and output labels, and the rule that
//! turns a current input distance into an output bound.

use std::collections::HashMap;

use crate::contracts::{BoundFn, Contract, Distance};
use crate::reactive::{step_formula, Lasso, StateId, TransitionSystem};
use crate::seqlang::{Env, Role, TemporalPred};
use crate::value::Value;

use super::formula::event_base;
use super::{HyperError, Property};

/// The model's input alphabet: every input valuation the grids allow, with
/// each state mapped to the letter it reads.
pub(crate) struct Letters {
    pub letters: Vec<u64>,
    pub envs: Vec<Env>,
    pub state_letter: Vec<u16>,
}

impl Letters {
    pub(crate) fn build(ts: &TransitionSystem) -> Result<Letters, HyperError> {
        let letters = ts.input_alphabet();
        if letters.len() > u16::MAX as usize {
            return Err(HyperError::Unsupported(format!(
                "an input alphabet of {} letters is past the supported size",
                letters.len()
            )));
        }
        let index: HashMap<u64, u16> =
            letters.iter().enumerate().map(|(i, &l)| (l, i as u16)).collect();
        let envs = letters.iter().map(|&l| ts.decode_input(l)).collect();
        let state_letter = (0..ts.states() as StateId)
            .map(|s| index[&ts.input_label(s)])
            .collect();
        Ok(Letters { letters, envs, state_letter })
    }

    pub(crate) fn count(&self) -> u16 {
        self.letters.len() as u16
    }

    pub(crate) fn of_state(&self, s: StateId) -> u16 {
        self.state_letter[s as usize]
    }

    /// The letter with exactly this valuation, if it is on the grids.
    pub(crate) fn find(&self, input: &Env) -> Option<u16> {
        self.envs.iter().position(|e| e == input).map(|i| i as u16)
    }
}

/// Pairwise distances between letters under a per-event value distance,
/// lifted over the input variables by max.
pub(crate) fn letter_matrix(base: &Distance, envs: &[Env]) -> Result<Vec<Value>, HyperError> {
    let n = envs.len();
    let mut m = Vec::with_capacity(n * n);
    for a in envs {
        for b in envs {
            m.push(base.valuation_dist(a.values().copied().zip(b.values().copied()))?);
        }
    }
    Ok(m)
}

/// The distinct output labels of a model, with pairwise distances and each
/// state mapped to its label.
pub(crate) struct OutLabels {
    pub count: usize,
    pub state_out: Vec<u32>,
    pub dist: Vec<Value>,
}

impl OutLabels {
    pub(crate) fn build(ts: &TransitionSystem, base: &Distance) -> Result<OutLabels, HyperError> {
        let out_names: Vec<&str> = ts
            .vars()
            .iter()
            .filter(|v| v.role == Role::Output)
            .map(|v| v.name.as_str())
            .collect();
        let mut reps: Vec<Vec<Value>> = Vec::new();
        let mut index: HashMap<u64, u32> = HashMap::new();
        let mut state_out = Vec::with_capacity(ts.states());
        for s in 0..ts.states() as StateId {
            let label = ts.output_label(s);
            let id = *index.entry(label).or_insert_with(|| {
                reps.push(
                    out_names.iter().map(|n| ts.value_of(s, n).expect("declared output")).collect(),
                );
                (reps.len() - 1) as u32
            });
            state_out.push(id);
        }
        let n = reps.len();
        let mut dist = Vec::with_capacity(n * n);
        for a in &reps {
            for b in &reps {
                dist.push(base.valuation_dist(a.iter().copied().zip(b.iter().copied()))?);
            }
        }
        Ok(OutLabels { count: n, state_out, dist })
    }

    pub(crate) fn of_state(&self, s: StateId) -> u32 {
        self.state_out[s as usize]
    }

    pub(crate) fn dist(&self, a: u32, b: u32) -> Value {
        self.dist[a as usize * self.count + b as usize]
    }
}

/// A deterministic monitor for the standard-input spec, indexed by input
/// letters. States are rewritten obligations; `viable` marks obligations
/// some infinite word can keep alive. On input-enabled models viability of
/// the obligation after a prefix is exactly extendability of that prefix
/// into a standard run, which is what makes pruning on it sound.
pub(crate) struct LetterMon {
    forms: Vec<TemporalPred>,
    step: Vec<Vec<u32>>,
    dead: Vec<bool>,
    viable: Vec<bool>,
}

const MAX_OBLIGATIONS: usize = 4_096;

impl LetterMon {
    pub(crate) fn build(stdin: &TemporalPred, envs: &[Env]) -> Result<LetterMon, HyperError> {
        let mut forms = vec![stdin.clone()];
        let mut index: HashMap<String, u32> = HashMap::new();
        index.insert(stdin.to_string(), 0);
        let mut step: Vec<Vec<u32>> = Vec::new();
        let mut at = 0usize;
        while at < forms.len() {
            let mut row = Vec::with_capacity(envs.len());
            for env in envs {
                let next = step_formula(&forms[at], env)?;
                let key = next.to_string();
                let id = match index.get(&key) {
                    Some(&id) => id,
                    None => {
                        let id = forms.len() as u32;
                        if forms.len() >= MAX_OBLIGATIONS {
                            return Err(HyperError::Unsupported(format!(
                                "the standard-input spec unfolds into more than \
                                 {MAX_OBLIGATIONS} obligations"
                            )));
                        }
                        forms.push(next);
                        index.insert(key, id);
                        id
                    }
                };
                row.push(id);
            }
            step.push(row);
            at += 1;
        }
        let dead: Vec<bool> = forms.iter().map(crate::reactive::formula_is_false).collect();
        let mut viable: Vec<bool> = dead.iter().map(|d| !d).collect();
        loop {
            let mut changed = false;
            for f in 0..forms.len() {
                if viable[f] && !step[f].iter().any(|&n| viable[n as usize]) {
                    viable[f] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Ok(LetterMon { forms, step, dead, viable })
    }

    /// The obligation before any letter is read.
    pub(crate) fn init(&self) -> u32 {
        0
    }

    pub(crate) fn step(&self, m: u32, letter: u16) -> u32 {
        self.step[m as usize][letter as usize]
    }

    pub(crate) fn dead(&self, m: u32) -> bool {
        self.dead[m as usize]
    }

    pub(crate) fn viable(&self, m: u32) -> bool {
        self.viable[m as usize]
    }

    /// Whether the constant word repeating `letter` is standard.
    pub(crate) fn standard_forever(&self, letter: u16) -> bool {
        let mut seen = vec![false; self.forms.len()];
        let mut m = self.init();
        loop {
            m = self.step(m, letter);
            if self.dead(m) {
                return false;
            }
            if seen[m as usize] {
                return true;
            }
            seen[m as usize] = true;
        }
    }
}

/// How the current input distance constrains the current outputs: released
/// entirely once the inputs drift past `kappa_in`, or rebounded by `f` at
/// every position. A released obligation never returns, so checkers prune
/// released branches as satisfied.
pub(crate) enum Rule {
    Release { kappa_in: Value, kappa_out: Value },
    Bounded { f: BoundFn },
}

impl Rule {
    pub(crate) fn released(&self, din: Value) -> bool {
        match self {
            Rule::Release { kappa_in, .. } => din > *kappa_in,
            Rule::Bounded { .. } => false,
        }
    }

    pub(crate) fn bound(&self, din: Value) -> Result<Value, HyperError> {
        match self {
            Rule::Release { kappa_out, .. } => Ok(*kappa_out),
            Rule::Bounded { f } => Ok(f.apply(din)?),
        }
    }
}

/// Letter-level input distance: a full matrix, or the three-valued prefix
/// summary that only the bounded oracle threads (it needs two running flags
/// per explored branch, not a per-letter value).
pub(crate) enum DinKind {
    Matrix(Vec<Value>),
    Summary { base: Vec<Value>, kappa: Value },
}

/// Everything a definition-level check derives from a contract: the input
/// distance over letters, the output label distances, and the bound rule.
pub(crate) struct ContractTables {
    pub din: DinKind,
    pub outs: OutLabels,
    pub rule: Rule,
}

pub(crate) enum TablesOutcome {
    Ready(ContractTables),
    /// The contract is self-inconsistent in a way that asks for a decision,
    /// not an error: reported as an unknown verdict with this reason.
    Undecided(String),
}

pub(crate) fn contract_tables(
    ts: &TransitionSystem,
    c: &Contract,
    prop: Property,
    allow_summary: bool,
    letters: &Letters,
) -> Result<TablesOutcome, HyperError> {
    let discrete = Distance::Discrete { unequal: Value::Inf };
    Ok(TablesOutcome::Ready(match prop {
        Property::Clean => ContractTables {
            din: DinKind::Matrix(letter_matrix(&discrete, &letters.envs)?),
            outs: OutLabels::build(ts, &discrete)?,
            rule: Rule::Release { kappa_in: Value::ZERO, kappa_out: Value::ZERO },
        },
        Property::Robust | Property::FClean => {
            let rule = match prop {
                Property::Robust => Rule::Release {
                    kappa_in: c.require_kappa_in()?,
                    kappa_out: c.require_kappa_out()?,
                },
                _ => Rule::Bounded { f: c.require_f()?.clone() },
            };
            let din = match (c.d_in().as_dnew(), allow_summary) {
                (Some((base, kappa, embedded)), true) => {
                    if embedded.to_string() != c.stdin.to_string() {
                        return Ok(TablesOutcome::Undecided(format!(
                            "the three-valued input distance fixes the standard-input spec \
                             {embedded}, but the contract says {}; decide which applies",
                            c.stdin
                        )));
                    }
                    DinKind::Summary { base: letter_matrix(base, &letters.envs)?, kappa }
                }
                _ => DinKind::Matrix(letter_matrix(
                    &event_base(&c.d_in(), "input")?,
                    &letters.envs,
                )?),
            };
            ContractTables { din, outs: OutLabels::build(ts, &event_base(&c.d_out(), "output")?)?, rule }
        }
    }))
}

/// Checks the preconditions every reactive mode shares: the model reads
/// every input everywhere, and the standard-input spec speaks about input
/// variables only. Returns the alphabet and the spec monitor.
pub(crate) enum SideOutcome {
    Ready(Letters, LetterMon),
    Undecided(String),
}

pub(crate) fn input_side(
    ts: &TransitionSystem,
    stdin: &TemporalPred,
) -> Result<SideOutcome, HyperError> {
    if let Some(gap) = ts.input_enabled_gap() {
        return Ok(SideOutcome::Undecided(format!(
            "the model is not input-enabled ({gap}), so runs cannot read every input word"
        )));
    }
    let input_names: Vec<&str> = ts
        .vars()
        .iter()
        .filter(|v| v.role == Role::Input)
        .map(|v| v.name.as_str())
        .collect();
    for var in stdin.vars() {
        if !input_names.contains(&var.as_str()) {
            return Err(HyperError::Unsupported(format!(
                "the standard-input spec mentions {var}, which is not an input variable"
            )));
        }
    }
    let letters = Letters::build(ts)?;
    let mon = LetterMon::build(stdin, &letters.envs)?;
    Ok(SideOutcome::Ready(letters, mon))
}

/// Extends a nonempty path into a lasso by walking first successors,
/// keeping the standard-input obligation alive and viable when one is
/// given. Needs an input-enabled model, where a viable obligation always
/// has a viable successor to step to.
pub(crate) fn extend_to_lasso(
    ts: &TransitionSystem,
    guide: Option<(&LetterMon, u32, &Letters)>,
    prefix: Vec<StateId>,
) -> Lasso {
    let mut seq = prefix;
    let mut m = guide.as_ref().map(|&(_, m, _)| m).unwrap_or(0);
    let mut seen: HashMap<(StateId, u32), usize> = HashMap::new();
    seen.insert((*seq.last().expect("nonempty path"), m), seq.len() - 1);
    loop {
        let cur = *seq.last().expect("nonempty path");
        let next = match &guide {
            Some((lm, _, letters)) => ts
                .succ(cur)
                .iter()
                .copied()
                .find(|&t| {
                    let n = lm.step(m, letters.of_state(t));
                    !lm.dead(n) && lm.viable(n)
                })
                .unwrap_or_else(|| ts.succ(cur)[0]),
            None => ts.succ(cur)[0],
        };
        if let Some((lm, _, letters)) = &guide {
            m = lm.step(m, letters.of_state(next));
        }
        seq.push(next);
        let key = (next, m);
        if let Some(&j) = seen.get(&key) {
            let cycle = seq[j..seq.len() - 1].to_vec();
            let stem = seq[..j].to_vec();
            return Lasso::new(stem, cycle);
        }
        seen.insert(key, seq.len() - 1);
    }
}
