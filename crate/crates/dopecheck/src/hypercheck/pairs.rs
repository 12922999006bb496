//! The two-run safety engine. A forall-forall formula is decided by
//! walking the pair product of the model breadth first, rewriting the body
//! into its residual obligation one position at a time; a residual of
//! false at some position is a violating pair of runs, and exhausting the
//! reachable configurations proves the formula.
//!
//! Also here: the negated two-trace instances at constant pinned inputs,
//! whose violations are doping evidence for the set-based definitions.

use std::collections::{HashMap, HashSet};

use crate::contracts::Contract;
use crate::reactive::{StateId, TransitionSystem};
use crate::seqlang::{eval_pred, Env, Role, TemporalPred};
use crate::value::Value;
use crate::Verdict;

use super::formula::{hform_to_temporal, HAtom, HForm, HyperFormula, VarRoles};
use super::product::ProductSystem;
use super::support::{
    contract_tables, extend_to_lasso, input_side, letter_matrix, DinKind, Letters,
    OutLabels, SideOutcome, TablesOutcome,
};
use super::{HyperError, HyperWitness, PairWitness, Property, TraceQuant};

const MAX_CONFIGS: usize = 1 << 22;
const MAX_WORK: usize = 1 << 28;
const MAX_ATOMS: usize = 16;

/// Decides a two-run universally quantified safety formula. The antecedent
/// may gate the pair with state predicates at the first position and put a
/// run spec on one of the runs; the consequent must sit in the safety
/// fragment. `Doped` here means the formula is violated, nothing more;
/// whether that is doping evidence depends on the formula.
pub fn check_forall_forall(
    phi: &HyperFormula,
    ts: &TransitionSystem,
) -> Result<Verdict<HyperWitness>, HyperError> {
    if phi.prefix().len() != 2 || phi.prefix().iter().any(|(q, _)| *q != TraceQuant::ForAll) {
        return Err(HyperError::Formula(
            "the pairwise check needs a forall-forall prefix over two runs".into(),
        ));
    }
    let names = [phi.var(0).to_string(), phi.var(1).to_string()];
    let (gates, stdins, consequent) = split_body(phi.body(), &names)?;
    consequent.safety_fragment()?;
    let (std_copy, stdin) = match stdins {
        [Some(s), None] => (0, s),
        [None, Some(s)] => (1, s),
        [None, None] => (0, TemporalPred::TRUE),
        [Some(_), Some(_)] => {
            return Err(HyperError::Unsupported(
                "run specs on both quantified runs".into(),
            ))
        }
    };
    let (letters, mon) = match input_side(ts, &stdin)? {
        SideOutcome::Ready(l, m) => (l, m),
        SideOutcome::Undecided(reason) => return Ok(Verdict::Unknown { reason }),
    };

    let mut atoms = Vec::new();
    collect_atoms(&consequent, &mut atoms);
    if atoms.len() > MAX_ATOMS {
        return Err(HyperError::Unsupported(format!(
            "{} distinct comparison atoms (up to {MAX_ATOMS} are supported)",
            atoms.len()
        )));
    }
    let name_refs = [names[0].as_str(), names[1].as_str()];
    let tables = atoms
        .iter()
        .map(|a| atom_table(a, ts, &letters, &name_refs))
        .collect::<Result<Vec<_>, _>>()?;
    let out_raw: Vec<u64> = (0..ts.states() as StateId).map(|s| ts.output_label(s)).collect();
    let envs: Vec<Env> = (0..ts.states() as StateId).map(|s| ts.state_env(s)).collect();
    let roles = VarRoles::of(ts);

    let mut space = FormSpace::new();
    let root_form = space.intern(consequent.clone());
    let mut memo: HashMap<(u32, u16), StepOut> = HashMap::new();

    let mut parent: HashMap<u128, u128> = HashMap::new();
    let mut seen: HashSet<u128> = HashSet::new();
    let mut frontier: Vec<u128> = Vec::new();
    'roots: for &i1 in ts.initial() {
        for &i2 in ts.initial() {
            let assign = [(names[0].as_str(), &envs[i1 as usize]), (names[1].as_str(), &envs[i2 as usize])];
            let mut open = true;
            for g in &gates {
                if !g.eval_inst(&roles, &assign)? {
                    open = false;
                    break;
                }
            }
            if !open {
                continue;
            }
            let key = pack(i1, i2, mon.init(), root_form);
            if seen.insert(key) {
                frontier.push(key);
            }
            if seen.len() > MAX_CONFIGS {
                break 'roots;
            }
        }
    }

    let mut work = 0usize;
    let mut position = 0usize;
    while !frontier.is_empty() {
        if seen.len() > MAX_CONFIGS || work > MAX_WORK {
            return Ok(Verdict::Unknown {
                reason: format!(
                    "the pairwise search passed its budget ({} configurations, {} steps) \
                     before settling",
                    seen.len(),
                    work
                ),
            });
        }
        let mut next = Vec::new();
        for &key in &frontier {
            let (s1, s2, m, f) = unpack(key);
            let m2 = mon.step(m, letters.of_state(if std_copy == 0 { s1 } else { s2 }));
            if mon.dead(m2) || !mon.viable(m2) {
                continue;
            }
            let mask = atom_mask(&tables, &letters, &out_raw, [s1, s2]);
            let out = match memo.get(&(f, mask)) {
                Some(&o) => o,
                None => {
                    let truth = |a: &HAtom| {
                        let i = atoms.iter().position(|x| x == a).expect("collected atom");
                        mask & (1 << i) != 0
                    };
                    let res = residual(space.get(f), &truth)?;
                    let o = match res {
                        HForm::Bool(false) => StepOut::Violated,
                        HForm::Bool(true) => StepOut::Satisfied,
                        other => StepOut::Goto(space.intern(other)),
                    };
                    memo.insert((f, mask), o);
                    o
                }
            };
            match out {
                StepOut::Violated => {
                    let (stem1, stem2) = stems(key, &parent);
                    let (t1, t2) = if std_copy == 0 {
                        (
                            extend_to_lasso(ts, Some((&mon, m2, &letters)), stem1),
                            extend_to_lasso(ts, None, stem2),
                        )
                    } else {
                        (
                            extend_to_lasso(ts, None, stem1),
                            extend_to_lasso(ts, Some((&mon, m2, &letters)), stem2),
                        )
                    };
                    let (measured, bound) =
                        annotate(&atoms, &tables, &letters, [s1, s2]);
                    return Ok(Verdict::Doped {
                        witness: HyperWitness::Pair(PairWitness {
                            left_var: names[0].clone(),
                            right_var: names[1].clone(),
                            t1,
                            t2,
                            position,
                            measured,
                            bound,
                        }),
                    });
                }
                StepOut::Satisfied => {}
                StepOut::Goto(f2) => {
                    for &t1 in ts.succ(s1) {
                        for &t2 in ts.succ(s2) {
                            work += 1;
                            let key2 = pack(t1, t2, m2, f2);
                            if seen.insert(key2) {
                                parent.insert(key2, key);
                                next.push(key2);
                                if seen.len() > MAX_CONFIGS {
                                    break;
                                }
                            }
                        }
                        if seen.len() > MAX_CONFIGS || work > MAX_WORK {
                            break;
                        }
                    }
                }
            }
        }
        frontier = next;
        position += 1;
    }
    Ok(Verdict::Clean)
}

/// Checks one pinned instance of the negated definition: the standard run
/// reads `a` forever, the comparison run reads `b` forever. `Doped` means
/// some standard run has no comparison run tracking it, which refutes the
/// set-based definition outright. `Clean` only means this instance is no
/// evidence; other inputs may still be.
pub fn check_negation_instance(
    ts: &TransitionSystem,
    c: &Contract,
    a: Value,
    b: Value,
    prop: Property,
) -> Result<Verdict<HyperWitness>, HyperError> {
    let mut input_vars = ts.vars().iter().filter(|v| v.role == Role::Input);
    let iname = match (input_vars.next(), input_vars.next()) {
        (Some(v), None) => v.name.clone(),
        _ => {
            return Err(HyperError::Unsupported(
                "pinned instances need a model with a single input variable".into(),
            ))
        }
    };
    let (letters, mon) = match input_side(ts, &c.stdin)? {
        SideOutcome::Ready(l, m) => (l, m),
        SideOutcome::Undecided(reason) => return Ok(Verdict::Unknown { reason }),
    };
    let tables = match contract_tables(ts, c, prop, false, &letters)? {
        TablesOutcome::Ready(t) => t,
        TablesOutcome::Undecided(reason) => return Ok(Verdict::Unknown { reason }),
    };
    let find = |v: Value| letters.find(&Env::from([(iname.clone(), v)]));
    let (la, lb) = match (find(a), find(b)) {
        (Some(la), Some(lb)) => (la, lb),
        _ => {
            return Ok(Verdict::Unknown {
                reason: format!(
                    "{iname} = {a} or {iname} = {b} is off the model's input grid, so the \
                     pinned runs do not exist"
                ),
            })
        }
    };
    if !mon.standard_forever(la) {
        return Ok(Verdict::Unknown {
            reason: format!(
                "{iname} = {a} repeated forever does not satisfy the standard-input spec"
            ),
        });
    }
    let din = match &tables.din {
        DinKind::Matrix(m) => m[la as usize * letters.count() as usize + lb as usize],
        DinKind::Summary { .. } => {
            return Err(HyperError::Unsupported(
                "the three-valued input distance is only supported by the bounded oracle".into(),
            ))
        }
    };
    if tables.rule.released(din) {
        return Ok(Verdict::Clean);
    }
    let bound = tables.rule.bound(din)?;
    if bound == Value::Inf {
        return Ok(Verdict::Clean);
    }
    let outs = &tables.outs;
    let prod = ProductSystem::new(vec![ts, ts])?;
    let compliant = prod.find_lasso(&mut |t| {
        Ok(letters.of_state(t[0]) == la
            && letters.of_state(t[1]) == lb
            && outs.dist(outs.of_state(t[0]), outs.of_state(t[1])) <= bound)
    })?;
    if compliant.is_some() {
        return Ok(Verdict::Clean);
    }
    let pinned = prod
        .find_lasso(&mut |t| Ok(letters.of_state(t[0]) == la && letters.of_state(t[1]) == lb))?;
    let Some(mut pair) = pinned else {
        return Ok(Verdict::Unknown {
            reason: format!(
                "no runs read {iname} = {a} and {iname} = {b} forever, so the pinned \
                 instance is vacuous"
            ),
        });
    };
    let horizon = pair[0].stem.len() + pair[0].cycle.len();
    let position = (0..horizon)
        .find(|&k| outs.dist(outs.of_state(pair[0].state_at(k)), outs.of_state(pair[1].state_at(k))) > bound)
        .expect("a pair outside the compliant product violates within its joint lasso");
    let measured = outs.dist(
        outs.of_state(pair[0].state_at(position)),
        outs.of_state(pair[1].state_at(position)),
    );
    let t2 = pair.pop().expect("two runs");
    let t1 = pair.pop().expect("two runs");
    Ok(Verdict::Doped {
        witness: HyperWitness::Pair(PairWitness {
            left_var: "t1".into(),
            right_var: "t2".into(),
            t1,
            t2,
            position,
            measured: Some(measured),
            bound: Some(bound),
        }),
    })
}

fn pack(s1: StateId, s2: StateId, m: u32, f: u32) -> u128 {
    s1 as u128 | (s2 as u128) << 32 | (m as u128) << 64 | (f as u128) << 96
}

fn unpack(key: u128) -> (StateId, StateId, u32, u32) {
    (key as u32, (key >> 32) as u32, (key >> 64) as u32, (key >> 96) as u32)
}

/// The state pair paths from the roots to `key`, by parent links.
fn stems(key: u128, parent: &HashMap<u128, u128>) -> (Vec<StateId>, Vec<StateId>) {
    let mut rev = vec![key];
    let mut cur = key;
    while let Some(&p) = parent.get(&cur) {
        rev.push(p);
        cur = p;
    }
    rev.reverse();
    let s1 = rev.iter().map(|&k| unpack(k).0).collect();
    let s2 = rev.iter().map(|&k| unpack(k).1).collect();
    (s1, s2)
}

/// Pair gates, optional per-run specs, and the tracked remainder of a body.
type SplitBody = (Vec<HForm>, [Option<TemporalPred>; 2], HForm);

fn split_body(body: &HForm, names: &[String; 2]) -> Result<SplitBody, HyperError> {
    let (ante, cons) = match body {
        HForm::Implies(l, r) => (Some(l.as_ref()), r.as_ref()),
        _ => (None, body),
    };
    let mut gates = Vec::new();
    let mut stdins: [Option<TemporalPred>; 2] = [None, None];
    if let Some(a) = ante {
        let mut parts = Vec::new();
        flatten_and(a, &mut parts);
        for p in parts {
            if p.is_instantaneous() {
                gates.push(p.clone());
                continue;
            }
            let vars = p.vars();
            if vars.len() != 1 {
                return Err(HyperError::Unsupported(
                    "a temporal antecedent across both runs".into(),
                ));
            }
            let v = *vars.iter().next().expect("one variable");
            let idx = names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| HyperError::Formula(format!("unbound trace variable {v}")))?;
            let tp = hform_to_temporal(p, v).ok_or_else(|| {
                HyperError::Unsupported(format!("an antecedent about {v} that is not a run spec"))
            })?;
            stdins[idx] = Some(match stdins[idx].take() {
                Some(old) => TemporalPred::And(Box::new(old), Box::new(tp)),
                None => tp,
            });
        }
    }
    Ok((gates, stdins, cons.clone()))
}

fn flatten_and<'a>(f: &'a HForm, out: &mut Vec<&'a HForm>) {
    match f {
        HForm::And(l, r) => {
            flatten_and(l, out);
            flatten_and(r, out);
        }
        other => out.push(other),
    }
}

fn collect_atoms(f: &HForm, out: &mut Vec<HAtom>) {
    match f {
        HForm::Bool(_) => {}
        HForm::Atom(a) => {
            if !out.contains(a) {
                out.push(a.clone());
            }
        }
        HForm::Not(g) | HForm::Next(g) | HForm::Globally(g) | HForm::Finally(g) => {
            collect_atoms(g, out)
        }
        HForm::And(l, r) | HForm::Or(l, r) | HForm::Implies(l, r) | HForm::Until(l, r)
        | HForm::WeakUntil(l, r) => {
            collect_atoms(l, out);
            collect_atoms(r, out);
        }
    }
}

/// One comparison atom compiled against the model: evaluation becomes a
/// table lookup on the state pair.
enum AtomTable {
    Always(bool),
    PerState { copy: usize, truth: Vec<bool> },
    LetterEq { a: usize, b: usize },
    OutputEq { a: usize, b: usize },
    LetterPair { a: usize, b: usize, truth: Vec<bool> },
    OutPair { a: usize, b: usize, outs: OutLabels, kappa: Value },
    OutByIn { oa: usize, ob: usize, ia: usize, ib: usize, outs: OutLabels, bound: Vec<Value> },
}

fn atom_table(
    atom: &HAtom,
    ts: &TransitionSystem,
    letters: &Letters,
    names: &[&str; 2],
) -> Result<AtomTable, HyperError> {
    let copy = |v: &str| {
        names
            .iter()
            .position(|n| *n == v)
            .ok_or_else(|| HyperError::Formula(format!("unbound trace variable {v}")))
    };
    Ok(match atom {
        HAtom::Holds { on, pred } => {
            let truth = (0..ts.states() as StateId)
                .map(|s| eval_pred(pred, &ts.state_env(s)))
                .collect::<Result<_, _>>()?;
            AtomTable::PerState { copy: copy(on)?, truth }
        }
        HAtom::ParamsEq { .. } => AtomTable::Always(true),
        HAtom::InputsEq { left, right } => AtomTable::LetterEq { a: copy(left)?, b: copy(right)? },
        HAtom::OutputsEq { left, right } => AtomTable::OutputEq { a: copy(left)?, b: copy(right)? },
        HAtom::InDistLe { left, right, dist, kappa } => {
            let truth =
                letter_matrix(dist, &letters.envs)?.iter().map(|d| *d <= *kappa).collect();
            AtomTable::LetterPair { a: copy(left)?, b: copy(right)?, truth }
        }
        HAtom::OutDistLe { left, right, dist, kappa } => AtomTable::OutPair {
            a: copy(left)?,
            b: copy(right)?,
            outs: OutLabels::build(ts, dist)?,
            kappa: *kappa,
        },
        HAtom::OutDistLeF { out_left, out_right, in_left, in_right, d_out, d_in, f } => {
            let bound = letter_matrix(d_in, &letters.envs)?
                .iter()
                .map(|d| f.apply(*d))
                .collect::<Result<_, _>>()?;
            AtomTable::OutByIn {
                oa: copy(out_left)?,
                ob: copy(out_right)?,
                ia: copy(in_left)?,
                ib: copy(in_right)?,
                outs: OutLabels::build(ts, d_out)?,
                bound,
            }
        }
    })
}

impl AtomTable {
    fn eval(&self, letters: &Letters, out_raw: &[u64], pair: [StateId; 2]) -> bool {
        match self {
            AtomTable::Always(v) => *v,
            AtomTable::PerState { copy, truth } => truth[pair[*copy] as usize],
            AtomTable::LetterEq { a, b } => {
                letters.of_state(pair[*a]) == letters.of_state(pair[*b])
            }
            AtomTable::OutputEq { a, b } => {
                out_raw[pair[*a] as usize] == out_raw[pair[*b] as usize]
            }
            AtomTable::LetterPair { a, b, truth } => {
                let n = letters.count() as usize;
                truth[letters.of_state(pair[*a]) as usize * n
                    + letters.of_state(pair[*b]) as usize]
            }
            AtomTable::OutPair { a, b, outs, kappa } => {
                outs.dist(outs.of_state(pair[*a]), outs.of_state(pair[*b])) <= *kappa
            }
            AtomTable::OutByIn { oa, ob, ia, ib, outs, bound } => {
                let n = letters.count() as usize;
                let bnd = bound[letters.of_state(pair[*ia]) as usize * n
                    + letters.of_state(pair[*ib]) as usize];
                outs.dist(outs.of_state(pair[*oa]), outs.of_state(pair[*ob])) <= bnd
            }
        }
    }
}

fn atom_mask(
    tables: &[AtomTable],
    letters: &Letters,
    out_raw: &[u64],
    pair: [StateId; 2],
) -> u16 {
    let mut mask = 0u16;
    for (i, t) in tables.iter().enumerate() {
        if t.eval(letters, out_raw, pair) {
            mask |= 1 << i;
        }
    }
    mask
}

/// The output distance the violated obligation measured, read off the
/// first output comparison atom, with the bound it was compared against.
fn annotate(
    atoms: &[HAtom],
    tables: &[AtomTable],
    letters: &Letters,
    pair: [StateId; 2],
) -> (Option<Value>, Option<Value>) {
    for (atom, table) in atoms.iter().zip(tables) {
        match (atom, table) {
            (HAtom::OutDistLe { .. }, AtomTable::OutPair { a, b, outs, kappa }) => {
                let d = outs.dist(outs.of_state(pair[*a]), outs.of_state(pair[*b]));
                return (Some(d), Some(*kappa));
            }
            (HAtom::OutDistLeF { .. }, AtomTable::OutByIn { oa, ob, ia, ib, outs, bound }) => {
                let n = letters.count() as usize;
                let bnd = bound[letters.of_state(pair[*ia]) as usize * n
                    + letters.of_state(pair[*ib]) as usize];
                let d = outs.dist(outs.of_state(pair[*oa]), outs.of_state(pair[*ob]));
                return (Some(d), Some(bnd));
            }
            _ => {}
        }
    }
    (None, None)
}

struct FormSpace {
    forms: Vec<HForm>,
    ids: HashMap<String, u32>,
}

#[derive(Clone, Copy)]
enum StepOut {
    Violated,
    Satisfied,
    Goto(u32),
}

impl FormSpace {
    fn new() -> FormSpace {
        FormSpace { forms: Vec::new(), ids: HashMap::new() }
    }

    fn intern(&mut self, f: HForm) -> u32 {
        let key = f.to_string();
        match self.ids.get(&key) {
            Some(&id) => id,
            None => {
                let id = self.forms.len() as u32;
                self.forms.push(f);
                self.ids.insert(key, id);
                id
            }
        }
    }

    fn get(&self, id: u32) -> &HForm {
        &self.forms[id as usize]
    }
}

/// Conjunction in a canonical order, so residuals that differ only in
/// association intern to one obligation.
fn and_all(parts: Vec<HForm>) -> HForm {
    let mut flat = Vec::new();
    for p in parts {
        flatten_and_owned(p, &mut flat);
    }
    if flat.iter().any(|f| matches!(f, HForm::Bool(false))) {
        return HForm::FALSE;
    }
    let mut keyed: Vec<(String, HForm)> = flat
        .into_iter()
        .filter(|f| !matches!(f, HForm::Bool(true)))
        .map(|f| (f.to_string(), f))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    let mut it = keyed.into_iter().map(|(_, f)| f);
    match it.next() {
        None => HForm::TRUE,
        Some(first) => it.fold(first, HForm::and),
    }
}

fn flatten_and_owned(f: HForm, out: &mut Vec<HForm>) {
    match f {
        HForm::And(l, r) => {
            flatten_and_owned(*l, out);
            flatten_and_owned(*r, out);
        }
        other => out.push(other),
    }
}

/// The obligation left for the strict future after reading the current
/// position, with atom truth supplied by `truth`. False means the current
/// position already violates; true means nothing can anymore.
fn residual(f: &HForm, truth: &dyn Fn(&HAtom) -> bool) -> Result<HForm, HyperError> {
    Ok(match f {
        HForm::Bool(b) => HForm::Bool(*b),
        HForm::Atom(a) => HForm::Bool(truth(a)),
        HForm::Not(g) => HForm::Bool(!now(g, truth)?),
        HForm::And(l, r) => and_all(vec![residual(l, truth)?, residual(r, truth)?]),
        HForm::Or(l, r) => HForm::or(residual(l, truth)?, residual(r, truth)?),
        HForm::Implies(l, r) => {
            if now(l, truth)? {
                residual(r, truth)?
            } else {
                HForm::TRUE
            }
        }
        HForm::Next(g) => (**g).clone(),
        HForm::Globally(g) => and_all(vec![residual(g, truth)?, f.clone()]),
        HForm::WeakUntil(p, q) => {
            if now(q, truth)? {
                HForm::TRUE
            } else {
                and_all(vec![residual(p, truth)?, f.clone()])
            }
        }
        HForm::Finally(_) | HForm::Until(_, _) => {
            return Err(HyperError::Formula(
                "a liveness operator reached the safety engine".into(),
            ))
        }
    })
}

fn now(f: &HForm, truth: &dyn Fn(&HAtom) -> bool) -> Result<bool, HyperError> {
    Ok(match f {
        HForm::Bool(b) => *b,
        HForm::Atom(a) => truth(a),
        HForm::Not(g) => !now(g, truth)?,
        HForm::And(l, r) => now(l, truth)? && now(r, truth)?,
        HForm::Or(l, r) => now(l, truth)? || now(r, truth)?,
        HForm::Implies(l, r) => !now(l, truth)? || now(r, truth)?,
        _ => {
            return Err(HyperError::Formula(
                "a temporal operator where a state predicate was needed".into(),
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::Distance;
    use crate::hypercheck::strengthened_formula;
    use crate::reactive::{ModelBuilder, VarSpec};
    use crate::seqlang::parse_temporal;
    use crate::value::Grid;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    /// Inputs 0 and 1; output follows the input with value 10 * i, except
    /// that when `cheat` a run that has read 1 may also answer 5.
    fn follower(cheat: bool) -> TransitionSystem {
        let mut b = ModelBuilder::new(
            "follower",
            vec![
                VarSpec::new("i", Role::Input, Grid::new(v("0"), v("1"), v("1")).unwrap()),
                VarSpec::new("o", Role::Output, Grid::new(v("0"), v("10"), v("5")).unwrap()),
            ],
        )
        .unwrap();
        let s0 = b.state(&[("i", v("0")), ("o", v("0"))]).unwrap();
        let s1 = b.state(&[("i", v("1")), ("o", v("10"))]).unwrap();
        let mut all = vec![s0, s1];
        if cheat {
            all.push(b.state(&[("i", v("1")), ("o", v("5"))]).unwrap());
        }
        for &s in &all {
            b.mark_initial(s);
            for &t in &all {
                b.edge(s, t);
            }
        }
        b.finish().unwrap()
    }

    fn contract(kappa_in: &str, kappa_out: &str) -> Contract {
        Contract {
            stdin: parse_temporal("G(i in [0, 1])").unwrap(),
            d_in: Some(Distance::PastForgetful { base: Box::new(Distance::AbsDiff) }),
            d_out: Some(Distance::PastForgetful { base: Box::new(Distance::AbsDiff) }),
            kappa_in: Some(v(kappa_in)),
            kappa_out: Some(v(kappa_out)),
            ..Contract::default()
        }
    }

    #[test]
    fn tracking_holds_when_outputs_follow_inputs() {
        let ts = follower(false);
        let phi = strengthened_formula(&contract("0", "0"), Property::Robust).unwrap();
        let verdict = check_forall_forall(&phi, &ts).unwrap();
        assert!(matches!(verdict, Verdict::Clean), "{verdict:?}");
    }

    #[test]
    fn cheating_branch_is_found_with_a_replayable_pair() {
        let ts = follower(true);
        let phi = strengthened_formula(&contract("0", "0"), Property::Robust).unwrap();
        let Verdict::Doped { witness: HyperWitness::Pair(w) } =
            check_forall_forall(&phi, &ts).unwrap()
        else {
            panic!("expected a violating pair");
        };
        w.t1.validate(&ts).unwrap();
        w.t2.validate(&ts).unwrap();
        assert!(w.measured.unwrap() > w.bound.unwrap());
        let body = phi.body();
        let HForm::Implies(_, cons) = body else { panic!("guarded body") };
        let binds = [(w.left_var.as_str(), &w.t1), (w.right_var.as_str(), &w.t2)];
        assert!(!crate::hypercheck::eval_body_at(cons, &ts, &binds, 0).unwrap());
    }

    #[test]
    fn larger_slack_absorbs_the_cheat() {
        let ts = follower(true);
        let phi = strengthened_formula(&contract("0", "10"), Property::Robust).unwrap();
        assert!(matches!(check_forall_forall(&phi, &ts).unwrap(), Verdict::Clean));
    }

    #[test]
    fn liveness_is_rejected() {
        let ts = follower(false);
        let phi = HyperFormula::new(
            vec![(TraceQuant::ForAll, "x"), (TraceQuant::ForAll, "y")],
            HForm::finally(HForm::Atom(HAtom::outputs_eq("x", "y"))),
        )
        .unwrap();
        assert!(matches!(check_forall_forall(&phi, &ts), Err(HyperError::Unsupported(_))));
    }

    /// Input 0 holds output 0. Input 1 answers 10 at first and then
    /// settles: every run reading 1 forever is forced onto the settled
    /// output after one step.
    fn drifter(settle: &str) -> TransitionSystem {
        let mut b = ModelBuilder::new(
            "drifter",
            vec![
                VarSpec::new("i", Role::Input, Grid::new(v("0"), v("1"), v("1")).unwrap()),
                VarSpec::new("o", Role::Output, Grid::new(v("0"), v("15"), v("5")).unwrap()),
            ],
        )
        .unwrap();
        let a = b.state(&[("i", v("0")), ("o", v("0"))]).unwrap();
        let b0 = b.state(&[("i", v("1")), ("o", v("10"))]).unwrap();
        let b1 = b.state(&[("i", v("1")), ("o", v(settle))]).unwrap();
        b.mark_initial(a);
        b.mark_initial(b0);
        b.edge(a, a);
        b.edge(a, b0);
        b.edge(b0, b1);
        b.edge(b0, a);
        b.edge(b1, b1);
        b.edge(b1, a);
        b.finish().unwrap()
    }

    #[test]
    fn pinned_instance_finds_the_forced_drift() {
        let ts = drifter("15");
        let c = contract("1", "10");
        let verdict = check_negation_instance(&ts, &c, v("0"), v("1"), Property::Robust).unwrap();
        let Verdict::Doped { witness: HyperWitness::Pair(w) } = verdict else {
            panic!("expected doping evidence");
        };
        assert_eq!(w.bound, Some(v("10")));
        assert_eq!(w.measured, Some(v("15")));
        assert_eq!(w.position, 1);
        for k in 0..w.t1.horizon() + 1 {
            assert_eq!(w.t1.env_at(&ts, k)["i"], v("0"));
            assert_eq!(w.t2.env_at(&ts, k)["i"], v("1"));
        }
    }

    #[test]
    fn settled_drift_within_slack_is_no_evidence() {
        let ts = drifter("10");
        let c = contract("1", "10");
        let verdict = check_negation_instance(&ts, &c, v("0"), v("1"), Property::Robust).unwrap();
        assert!(matches!(verdict, Verdict::Clean));
    }

    #[test]
    fn released_instance_is_no_evidence() {
        let ts = drifter("15");
        let c = contract("0.5", "10");
        let verdict = check_negation_instance(&ts, &c, v("0"), v("1"), Property::Robust).unwrap();
        assert!(matches!(verdict, Verdict::Clean));
    }

    #[test]
    fn nonstandard_pin_is_vacuous() {
        let ts = drifter("15");
        let mut c = contract("1", "10");
        c.stdin = parse_temporal("G(i in [0, 0])").unwrap();
        let verdict = check_negation_instance(&ts, &c, v("1"), v("0"), Property::Robust).unwrap();
        assert!(matches!(verdict, Verdict::Unknown { .. }));
    }
}
