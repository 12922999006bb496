//! The definition-level engines: a bounded walk over pairs of reachable
//! state sets for the trace-set definitions, and the partner-threading
//! engine that decides the one-alternation characterisations exactly.
//!
//! The oracle compares, position by position, the output labels reachable
//! on a standard input word with those reachable on a comparison word,
//! under the two-clause set distance. Word pairs are explored as joint
//! letter sequences over interned subset pairs. A failed obligation is a
//! definitive violation carrying both words; running out of new subset
//! pairs proves the property; hitting the depth bound first proves nothing
//! and is reported as unknown.
//!
//! The exact engine threads the set of surviving partner candidates
//! through a product walk of the two universally quantified runs. The set
//! tracks every run the partner could still be after the positions seen so
//! far, so its death is a pair of runs no partner serves, refuting the
//! formula, and closure without a death proves it: the candidate tree of a
//! surviving pair is infinite and finitely branching, so an actual partner
//! run exists. Released pairs are pruned as satisfied, which is sound
//! because the release letters are shared by every candidate (the partner
//! is input-locked) and an input-enabled model keeps a locked partner
//! alive forever.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use crate::contracts::{hausdorff_by, two_clause_within_by, BoundFn, Contract, Distance};
use crate::reactive::{StateId, TransitionSystem};
use crate::seqlang::{Env, TemporalPred};
use crate::value::Value;
use crate::Verdict;

use super::formula::{hform_to_temporal, HAtom, HForm, HyperFormula};
use super::support::{
    contract_tables, extend_to_lasso, input_side, letter_matrix, ContractTables, DinKind,
    LetterMon, Letters, OutLabels, Rule, SideOutcome, TablesOutcome,
};
use super::{HyperError, HyperWitness, PairWitness, Property, TraceQuant, WordWitness};

const MAX_ORACLE_CONFIGS: usize = 1 << 20;
const MAX_EXACT_CONFIGS: usize = 1 << 22;
const MAX_EXACT_WORK: usize = 1 << 28;

/// Prefix flags for the three-valued input distance: both start set and
/// only ever fall.
const EQ_SO_FAR: u8 = 0b01;
const WITHIN_SO_FAR: u8 = 0b10;

const TWO: Value = Value::from_mantissa(2_000_000);

/// Interned sets of states, each with the sorted set of output labels its
/// members show.
struct SetPool {
    sets: Vec<Vec<StateId>>,
    outs: Vec<Vec<u32>>,
    ids: HashMap<Vec<StateId>, u32>,
}

impl SetPool {
    fn new() -> SetPool {
        SetPool { sets: Vec::new(), outs: Vec::new(), ids: HashMap::new() }
    }

    fn intern(&mut self, mut set: Vec<StateId>, labels: &OutLabels) -> u32 {
        set.sort_unstable();
        set.dedup();
        if let Some(&id) = self.ids.get(&set) {
            return id;
        }
        let mut outs: Vec<u32> = set.iter().map(|&s| labels.of_state(s)).collect();
        outs.sort_unstable();
        outs.dedup();
        let id = self.sets.len() as u32;
        self.ids.insert(set.clone(), id);
        self.sets.push(set);
        self.outs.push(outs);
        id
    }

    fn len(&self) -> usize {
        self.sets.len()
    }
}

// ---------------------------------------------------------------------------
// The bounded trace-set oracle.

fn pack_sets(p: u32, q: u32, m: u32, flags: u8) -> u128 {
    p as u128 | (q as u128) << 32 | (m as u128) << 64 | (flags as u128) << 96
}

fn unpack_sets(key: u128) -> (u32, u32, u32, u8) {
    (key as u32, (key >> 32) as u32, (key >> 64) as u32, (key >> 96) as u8)
}

/// Updates the prefix flags with the letter pair at the current position.
/// Full matrices need no flags; the summary distance drops equality on the
/// first differing letter and closeness on the first pair past its
/// embedded bound.
fn step_flags(din: &DinKind, flags: u8, la: u16, lb: u16, n: usize) -> u8 {
    match din {
        DinKind::Matrix(_) => flags,
        DinKind::Summary { base, kappa } => {
            let mut f = flags;
            if la != lb {
                f &= !EQ_SO_FAR;
            }
            if base[la as usize * n + lb as usize] > *kappa {
                f &= !WITHIN_SO_FAR;
            }
            f
        }
    }
}

/// The input distance charged at the current position: the letter pair's
/// entry for a full matrix, or the three-valued summary of the prefixes
/// read so far. The summary never needs the standard-side clause checked
/// separately, because obligations are only raised while the standard
/// prefix is alive.
fn din_at(din: &DinKind, flags: u8, la: u16, lb: u16, n: usize) -> Value {
    match din {
        DinKind::Matrix(m) => m[la as usize * n + lb as usize],
        DinKind::Summary { .. } => {
            if flags & EQ_SO_FAR != 0 {
                Value::ZERO
            } else if flags & WITHIN_SO_FAR != 0 {
                Value::ONE
            } else {
                TWO
            }
        }
    }
}

/// The two input words leading to a violation, rebuilt from the parent
/// links plus the final letter pair.
fn word_pair(
    parent: &HashMap<u128, (Option<u128>, u16, u16)>,
    from: Option<u128>,
    last: (u16, u16),
    letters: &Letters,
) -> (Vec<Env>, Vec<Env>) {
    let mut pairs = vec![last];
    let mut at = from;
    while let Some(k) = at {
        let &(p, la, lb) = parent.get(&k).expect("walked configuration");
        pairs.push((la, lb));
        at = p;
    }
    pairs.reverse();
    let std_inputs = pairs.iter().map(|&(la, _)| letters.envs[la as usize].clone()).collect();
    let cmp_inputs = pairs.iter().map(|&(_, lb)| letters.envs[lb as usize].clone()).collect();
    (std_inputs, cmp_inputs)
}

struct Oracle<'a> {
    ts: &'a TransitionSystem,
    letters: Letters,
    mon: LetterMon,
    din: DinKind,
    outs: OutLabels,
    rule: Rule,
    pool: SetPool,
    step_memo: HashMap<(u32, u16), u32>,
    ob_memo: HashMap<(u32, u32, Value), bool>,
}

impl Oracle<'_> {
    fn set_step(&mut self, set: u32, letter: u16) -> u32 {
        if let Some(&id) = self.step_memo.get(&(set, letter)) {
            return id;
        }
        let next: Vec<StateId> = self.pool.sets[set as usize]
            .iter()
            .flat_map(|&s| self.ts.succ(s).iter().copied())
            .filter(|&t| self.letters.of_state(t) == letter)
            .collect();
        let id = self.pool.intern(next, &self.outs);
        self.step_memo.insert((set, letter), id);
        id
    }

    fn holds(&mut self, p: u32, q: u32, bound: Value) -> Result<bool, HyperError> {
        if bound == Value::Inf {
            return Ok(true);
        }
        if let Some(&ok) = self.ob_memo.get(&(p, q, bound)) {
            return Ok(ok);
        }
        let ok = two_clause_within_by(
            &self.pool.outs[p as usize],
            &self.pool.outs[q as usize],
            bound,
            |a, b| Ok::<Value, HyperError>(self.outs.dist(*a, *b)),
        )?;
        self.ob_memo.insert((p, q, bound), ok);
        Ok(ok)
    }

    fn measure(&self, p: u32, q: u32) -> Result<Value, HyperError> {
        hausdorff_by(&self.pool.outs[p as usize], &self.pool.outs[q as usize], |a, b| {
            Ok::<Value, HyperError>(self.outs.dist(*a, *b))
        })
    }
}

fn bounded_oracle(
    ts: &TransitionSystem,
    c: &Contract,
    prop: Property,
    depth: usize,
) -> Result<Verdict<HyperWitness>, HyperError> {
    let (letters, mon) = match input_side(ts, &c.stdin)? {
        SideOutcome::Ready(l, m) => (l, m),
        SideOutcome::Undecided(reason) => return Ok(Verdict::Unknown { reason }),
    };
    let ContractTables { din, outs, rule } = match contract_tables(ts, c, prop, true, &letters)? {
        TablesOutcome::Ready(t) => t,
        TablesOutcome::Undecided(reason) => return Ok(Verdict::Unknown { reason }),
    };
    if depth == 0 {
        return Ok(Verdict::Unknown { reason: "a depth of 0 positions checks nothing".into() });
    }
    let n = letters.count() as usize;
    let mut o = Oracle {
        ts,
        letters,
        mon,
        din,
        outs,
        rule,
        pool: SetPool::new(),
        step_memo: HashMap::new(),
        ob_memo: HashMap::new(),
    };
    let init_sets: Vec<u32> = (0..n as u16)
        .map(|l| {
            let set: Vec<StateId> =
                ts.initial().iter().copied().filter(|&s| o.letters.of_state(s) == l).collect();
            o.pool.intern(set, &o.outs)
        })
        .collect();

    let budget = |o: &Oracle| {
        Ok::<Verdict<HyperWitness>, HyperError>(Verdict::Unknown {
            reason: format!(
                "the set search passed its budget ({} subset pairs) before settling",
                o.pool.len()
            ),
        })
    };

    let mut parent: HashMap<u128, (Option<u128>, u16, u16)> = HashMap::new();
    let mut frontier: Vec<u128> = Vec::new();
    for la in 0..n as u16 {
        let m1 = o.mon.step(o.mon.init(), la);
        if o.mon.dead(m1) || !o.mon.viable(m1) {
            continue;
        }
        for lb in 0..n as u16 {
            let flags = step_flags(&o.din, EQ_SO_FAR | WITHIN_SO_FAR, la, lb, n);
            let d = din_at(&o.din, flags, la, lb, n);
            if o.rule.released(d) {
                continue;
            }
            let bound = o.rule.bound(d)?;
            let (p, q) = (init_sets[la as usize], init_sets[lb as usize]);
            if !o.holds(p, q, bound)? {
                let (std_inputs, cmp_inputs) = word_pair(&parent, None, (la, lb), &o.letters);
                return Ok(Verdict::Doped {
                    witness: HyperWitness::Words(WordWitness {
                        std_inputs,
                        cmp_inputs,
                        position: 0,
                        measured: o.measure(p, q)?,
                        bound,
                    }),
                });
            }
            let key = pack_sets(p, q, m1, flags);
            if let Entry::Vacant(e) = parent.entry(key) {
                e.insert((None, la, lb));
                frontier.push(key);
            }
            if parent.len() > MAX_ORACLE_CONFIGS {
                return budget(&o);
            }
        }
    }

    let mut position = 0usize;
    while !frontier.is_empty() {
        position += 1;
        if position >= depth {
            return Ok(Verdict::Unknown {
                reason: format!(
                    "no violation in the first {depth} positions, with configurations still \
                     open; raise the depth"
                ),
            });
        }
        let mut next = Vec::new();
        for &key in &frontier {
            let (p, q, m, flags) = unpack_sets(key);
            for la in 0..n as u16 {
                let m2 = o.mon.step(m, la);
                if o.mon.dead(m2) || !o.mon.viable(m2) {
                    continue;
                }
                let p2 = o.set_step(p, la);
                for lb in 0..n as u16 {
                    let flags2 = step_flags(&o.din, flags, la, lb, n);
                    let d = din_at(&o.din, flags2, la, lb, n);
                    if o.rule.released(d) {
                        continue;
                    }
                    let bound = o.rule.bound(d)?;
                    let q2 = o.set_step(q, lb);
                    if !o.holds(p2, q2, bound)? {
                        let (std_inputs, cmp_inputs) =
                            word_pair(&parent, Some(key), (la, lb), &o.letters);
                        return Ok(Verdict::Doped {
                            witness: HyperWitness::Words(WordWitness {
                                std_inputs,
                                cmp_inputs,
                                position,
                                measured: o.measure(p2, q2)?,
                                bound,
                            }),
                        });
                    }
                    let key2 = pack_sets(p2, q2, m2, flags2);
                    if let Entry::Vacant(e) = parent.entry(key2) {
                        e.insert((Some(key), la, lb));
                        next.push(key2);
                    }
                    if parent.len() > MAX_ORACLE_CONFIGS {
                        return budget(&o);
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(Verdict::Clean)
}

/// Set-based cleanness up to `depth` positions: on equal standard input
/// words the reachable output sets must coincide.
pub fn bounded_oracle_clean(
    ts: &TransitionSystem,
    c: &Contract,
    depth: usize,
) -> Result<Verdict<HyperWitness>, HyperError> {
    bounded_oracle(ts, c, Property::Clean, depth)
}

/// Set-based robust cleanness up to `depth` positions: while the input
/// words stay within `kappa_in` at every position read so far, the
/// reachable output sets stay within `kappa_out`.
pub fn bounded_oracle_robust(
    ts: &TransitionSystem,
    c: &Contract,
    depth: usize,
) -> Result<Verdict<HyperWitness>, HyperError> {
    bounded_oracle(ts, c, Property::Robust, depth)
}

/// Set-based f-cleanness up to `depth` positions: at every position the
/// reachable output sets stay within `f` of the current input distance.
pub fn bounded_oracle_fclean(
    ts: &TransitionSystem,
    c: &Contract,
    depth: usize,
) -> Result<Verdict<HyperWitness>, HyperError> {
    bounded_oracle(ts, c, Property::FClean, depth)
}

/// Re-runs a word witness against the model and contract: builds the
/// reachable sets along both words and confirms the obligation at the
/// recorded position is genuinely broken, with the standard side still
/// alive and extendable. Structural defects (off-grid words, a released or
/// non-standard prefix, a bound that holds after all) make it `false`
/// rather than an error.
pub fn replay_word(
    ts: &TransitionSystem,
    c: &Contract,
    prop: Property,
    w: &WordWitness,
) -> Result<bool, HyperError> {
    let (letters, mon) = match input_side(ts, &c.stdin)? {
        SideOutcome::Ready(l, m) => (l, m),
        SideOutcome::Undecided(_) => return Ok(false),
    };
    let ContractTables { din, outs, rule } = match contract_tables(ts, c, prop, true, &letters)? {
        TablesOutcome::Ready(t) => t,
        TablesOutcome::Undecided(_) => return Ok(false),
    };
    if w.std_inputs.is_empty()
        || w.std_inputs.len() != w.position + 1
        || w.cmp_inputs.len() != w.position + 1
    {
        return Ok(false);
    }
    let resolve = |word: &[Env]| -> Option<Vec<u16>> {
        word.iter().map(|e| letters.find(e)).collect()
    };
    let (Some(las), Some(lbs)) = (resolve(&w.std_inputs), resolve(&w.cmp_inputs)) else {
        return Ok(false);
    };
    let n = letters.count() as usize;
    let mut m = mon.init();
    let mut flags = EQ_SO_FAR | WITHIN_SO_FAR;
    let mut p: Vec<StateId> = Vec::new();
    let mut q: Vec<StateId> = Vec::new();
    for k in 0..=w.position {
        let (la, lb) = (las[k], lbs[k]);
        m = mon.step(m, la);
        if mon.dead(m) {
            return Ok(false);
        }
        let filter_step = |set: &[StateId], l: u16| -> Vec<StateId> {
            let mut next: Vec<StateId> = if k == 0 {
                ts.initial().iter().copied().filter(|&s| letters.of_state(s) == l).collect()
            } else {
                set.iter()
                    .flat_map(|&s| ts.succ(s).iter().copied())
                    .filter(|&t| letters.of_state(t) == l)
                    .collect()
            };
            next.sort_unstable();
            next.dedup();
            next
        };
        p = filter_step(&p, la);
        q = filter_step(&q, lb);
        if p.is_empty() || q.is_empty() {
            return Ok(false);
        }
        flags = step_flags(&din, flags, la, lb, n);
        let d = din_at(&din, flags, la, lb, n);
        if rule.released(d) {
            return Ok(false);
        }
        if k == w.position {
            if !mon.viable(m) {
                return Ok(false);
            }
            let bound = rule.bound(d)?;
            if bound == Value::Inf {
                return Ok(false);
            }
            let project = |set: &[StateId]| -> Vec<u32> {
                let mut o: Vec<u32> = set.iter().map(|&s| outs.of_state(s)).collect();
                o.sort_unstable();
                o.dedup();
                o
            };
            let measured = hausdorff_by(&project(&p), &project(&q), |a, b| {
                Ok::<Value, HyperError>(outs.dist(*a, *b))
            })?;
            return Ok(measured > bound);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// The exact one-alternation engine.

/// What the partner is held to at each position, read off the formula.
enum TrackKind {
    /// Outputs equal to the tracked run's, forever.
    Equal,
    /// Output distance within `kappa_out` until the inputs drift past
    /// `kappa_in`, which releases the pair for good.
    Release { d_in: Distance, kappa_in: Value, d_out: Distance, kappa_out: Value },
    /// Output distance within `f` of the current input distance, forever.
    Bounded { d_in: Distance, d_out: Distance, f: BoundFn },
}

/// A recognised one-alternation formula: two universal runs, a partner
/// bound to `lock_src`'s inputs, a run spec on `std_var`, and a tracking
/// obligation between the partner and `against`. `din_other` names the
/// universal run whose inputs the release or rebound compares against the
/// partner's, which the lock makes a comparison of two universal letters.
struct ExactSpec {
    std_var: usize,
    stdin: TemporalPred,
    lock_src: usize,
    against: usize,
    din_other: usize,
    track: TrackKind,
}

fn conjuncts<'a>(f: &'a HForm, out: &mut Vec<&'a HForm>) {
    match f {
        HForm::And(l, r) => {
            conjuncts(l, out);
            conjuncts(r, out);
        }
        other => out.push(other),
    }
}

/// The universal run an atom pairs the partner with.
fn partner_peer(left: &str, right: &str, evar: &str, u: &[&str; 2]) -> Result<usize, HyperError> {
    let other = if left == evar {
        right
    } else if right == evar {
        left
    } else {
        return Err(HyperError::Formula(format!(
            "the atom relating {left} and {right} does not mention the partner run {evar}"
        )));
    };
    u.iter().position(|n| *n == other).ok_or_else(|| {
        HyperError::Formula(format!(
            "the atom relating {left} and {right} must pair the partner with a universal run"
        ))
    })
}

fn recognize(phi: &HyperFormula) -> Result<ExactSpec, HyperError> {
    let pre = phi.prefix();
    if pre.len() != 3
        || pre[0].0 != TraceQuant::ForAll
        || pre[1].0 != TraceQuant::ForAll
        || pre[2].0 != TraceQuant::Exists
    {
        return Err(HyperError::Formula(
            "the exact check needs a forall-forall-exists prefix over three runs".into(),
        ));
    }
    let u = [phi.var(0), phi.var(1)];
    let evar = phi.var(2);
    let (ante, cons) = match phi.body() {
        HForm::Implies(l, r) => (Some(l.as_ref()), r.as_ref()),
        other => (None, other),
    };
    let (std_var, stdin) = match ante {
        None => (0, TemporalPred::TRUE),
        Some(a) => {
            let vars = a.vars();
            let v = match (vars.len(), vars.iter().next()) {
                (1, Some(&v)) => v,
                _ => {
                    return Err(HyperError::Formula(
                        "the antecedent must be a run spec on one universally quantified run"
                            .into(),
                    ))
                }
            };
            let idx = u.iter().position(|n| *n == v).ok_or_else(|| {
                HyperError::Formula(format!(
                    "the run spec is on {v}, which is not universally quantified"
                ))
            })?;
            let tp = hform_to_temporal(a, v).ok_or_else(|| {
                HyperError::Formula(format!("the antecedent {a} is not a run spec"))
            })?;
            (idx, tp)
        }
    };
    let mut parts = Vec::new();
    conjuncts(cons, &mut parts);
    let mut lock: Option<usize> = None;
    let mut track: Option<(usize, usize, TrackKind)> = None;
    let reject = |part: &HForm| {
        HyperError::Formula(format!(
            "{part} is not an input lock, a tracking obligation, or a parameter tie, which \
             is all the exact check handles"
        ))
    };
    for part in parts {
        match part {
            HForm::Atom(HAtom::ParamsEq { .. }) => {}
            HForm::Globally(inner) => match inner.as_ref() {
                HForm::Atom(HAtom::InputsEq { left, right }) => {
                    let src = partner_peer(left, right, evar, &u)?;
                    if lock.replace(src).is_some() {
                        return Err(HyperError::Formula(
                            "two input locks on the partner run".into(),
                        ));
                    }
                }
                HForm::Atom(HAtom::OutputsEq { left, right }) => {
                    let against = partner_peer(left, right, evar, &u)?;
                    if track.replace((against, against, TrackKind::Equal)).is_some() {
                        return Err(HyperError::Formula(
                            "two tracking obligations on the partner run".into(),
                        ));
                    }
                }
                HForm::Atom(HAtom::OutDistLeF {
                    out_left,
                    out_right,
                    in_left,
                    in_right,
                    d_out,
                    d_in,
                    f,
                }) => {
                    let against = partner_peer(out_left, out_right, evar, &u)?;
                    let din_other = partner_peer(in_left, in_right, evar, &u)?;
                    let kind = TrackKind::Bounded {
                        d_in: d_in.clone(),
                        d_out: d_out.clone(),
                        f: f.clone(),
                    };
                    if track.replace((against, din_other, kind)).is_some() {
                        return Err(HyperError::Formula(
                            "two tracking obligations on the partner run".into(),
                        ));
                    }
                }
                other => return Err(reject(other)),
            },
            HForm::WeakUntil(lhs, rhs) => {
                let HForm::Atom(HAtom::OutDistLe { left, right, dist: d_out, kappa: kappa_out }) =
                    lhs.as_ref()
                else {
                    return Err(reject(part));
                };
                let HForm::Not(neg) = rhs.as_ref() else {
                    return Err(reject(part));
                };
                let HForm::Atom(HAtom::InDistLe { left: il, right: ir, dist: d_in, kappa }) =
                    neg.as_ref()
                else {
                    return Err(reject(part));
                };
                let against = partner_peer(left, right, evar, &u)?;
                let din_other = partner_peer(il, ir, evar, &u)?;
                let kind = TrackKind::Release {
                    d_in: d_in.clone(),
                    kappa_in: *kappa,
                    d_out: d_out.clone(),
                    kappa_out: *kappa_out,
                };
                if track.replace((against, din_other, kind)).is_some() {
                    return Err(HyperError::Formula(
                        "two tracking obligations on the partner run".into(),
                    ));
                }
            }
            other => return Err(reject(other)),
        }
    }
    let lock_src = lock.ok_or_else(|| {
        HyperError::Formula("the partner run is not input-locked to a universal run".into())
    })?;
    let (against, din_other, track) = track.ok_or_else(|| {
        HyperError::Formula("no tracking obligation on the partner run".into())
    })?;
    Ok(ExactSpec { std_var, stdin, lock_src, against, din_other, track })
}

/// The recognised obligation compiled against the model. `report` says
/// whether death positions carry a measured distance and a broken bound,
/// which plain output equality does not.
struct ExactTables {
    outs: OutLabels,
    din: Option<Vec<Value>>,
    rule: Rule,
    report: bool,
}

fn exact_tables(
    spec: &ExactSpec,
    ts: &TransitionSystem,
    letters: &Letters,
) -> Result<ExactTables, HyperError> {
    Ok(match &spec.track {
        TrackKind::Equal => ExactTables {
            outs: OutLabels::build(ts, &Distance::Discrete { unequal: Value::Inf })?,
            din: None,
            rule: Rule::Release { kappa_in: Value::Inf, kappa_out: Value::ZERO },
            report: false,
        },
        TrackKind::Release { d_in, kappa_in, d_out, kappa_out } => ExactTables {
            outs: OutLabels::build(ts, d_out)?,
            din: Some(letter_matrix(d_in, &letters.envs)?),
            rule: Rule::Release { kappa_in: *kappa_in, kappa_out: *kappa_out },
            report: true,
        },
        TrackKind::Bounded { d_in, d_out, f } => ExactTables {
            outs: OutLabels::build(ts, d_out)?,
            din: Some(letter_matrix(d_in, &letters.envs)?),
            rule: Rule::Bounded { f: f.clone() },
            report: true,
        },
    })
}

fn exact_din(t: &ExactTables, l_other: u16, l_lock: u16, n: usize) -> Value {
    match &t.din {
        Some(m) => m[l_other as usize * n + l_lock as usize],
        None => Value::ZERO,
    }
}

/// Filters candidates by the output obligation, also reporting how close
/// the best of them came.
fn sift(
    cand: &[StateId],
    against_out: u32,
    bound: Value,
    outs: &OutLabels,
) -> (Vec<StateId>, Option<Value>) {
    let mut best: Option<Value> = None;
    let mut survivors = Vec::new();
    for &b in cand {
        let d = outs.dist(outs.of_state(b), against_out);
        best = Some(match best {
            Some(x) if x <= d => x,
            _ => d,
        });
        if d <= bound {
            survivors.push(b);
        }
    }
    (survivors, best)
}

fn pack_exact(sa: StateId, sb: StateId, a: u32, m: u32) -> u128 {
    sa as u128 | (sb as u128) << 32 | (a as u128) << 64 | (m as u128) << 96
}

fn unpack_exact(key: u128) -> (StateId, StateId, u32, u32) {
    (key as u32, (key >> 32) as u32, (key >> 64) as u32, (key >> 96) as u32)
}

struct Death {
    from: Option<u128>,
    last: [StateId; 2],
    m: u32,
    position: usize,
    best: Option<Value>,
    bound: Value,
    report: bool,
}

fn unmatched_witness(
    ts: &TransitionSystem,
    mon: &LetterMon,
    letters: &Letters,
    spec: &ExactSpec,
    uvars: &[String; 2],
    parent: &HashMap<u128, Option<u128>>,
    d: Death,
) -> Verdict<HyperWitness> {
    let mut chain = Vec::new();
    let mut at = d.from;
    while let Some(k) = at {
        let (sa, sb, _, _) = unpack_exact(k);
        chain.push([sa, sb]);
        at = *parent.get(&k).expect("walked configuration");
    }
    chain.reverse();
    chain.push(d.last);
    let p0: Vec<StateId> = chain.iter().map(|p| p[0]).collect();
    let p1: Vec<StateId> = chain.iter().map(|p| p[1]).collect();
    let guide = Some((mon, d.m, letters));
    let (t1, t2) = if spec.std_var == 0 {
        (extend_to_lasso(ts, guide, p0), extend_to_lasso(ts, None, p1))
    } else {
        (extend_to_lasso(ts, None, p0), extend_to_lasso(ts, guide, p1))
    };
    Verdict::Doped {
        witness: HyperWitness::Pair(PairWitness {
            left_var: uvars[0].clone(),
            right_var: uvars[1].clone(),
            t1,
            t2,
            position: d.position,
            measured: if d.report { d.best } else { None },
            bound: if d.report { Some(d.bound) } else { None },
        }),
    }
}

/// Decides a forall-forall-exists formula of the tracking shape exactly:
/// `Doped` is a pair of runs whose candidate set died, `Clean` means every
/// reachable pair keeps a live candidate set, which yields a partner run
/// for every pair.
pub fn check_forall_forall_exists_exact(
    phi: &HyperFormula,
    ts: &TransitionSystem,
) -> Result<Verdict<HyperWitness>, HyperError> {
    let spec = recognize(phi)?;
    let (letters, mon) = match input_side(ts, &spec.stdin)? {
        SideOutcome::Ready(l, m) => (l, m),
        SideOutcome::Undecided(reason) => return Ok(Verdict::Unknown { reason }),
    };
    let t = exact_tables(&spec, ts, &letters)?;
    let n = letters.count() as usize;
    let uvars = [phi.var(0).to_string(), phi.var(1).to_string()];

    let mut pool = SetPool::new();
    let mut amemo: HashMap<(u32, u16, u32, Value), u32> = HashMap::new();
    let mut parent: HashMap<u128, Option<u128>> = HashMap::new();
    let mut frontier: Vec<u128> = Vec::new();

    for &ia in ts.initial() {
        for &ib in ts.initial() {
            let s = [ia, ib];
            let m1 = mon.step(mon.init(), letters.of_state(s[spec.std_var]));
            if mon.dead(m1) || !mon.viable(m1) {
                continue;
            }
            let l_lock = letters.of_state(s[spec.lock_src]);
            let din = exact_din(&t, letters.of_state(s[spec.din_other]), l_lock, n);
            if t.rule.released(din) {
                continue;
            }
            let bound = t.rule.bound(din)?;
            let cand: Vec<StateId> = ts
                .initial()
                .iter()
                .copied()
                .filter(|&b| letters.of_state(b) == l_lock)
                .collect();
            let against_out = t.outs.of_state(s[spec.against]);
            let (survivors, best) = sift(&cand, against_out, bound, &t.outs);
            if survivors.is_empty() {
                let death = Death {
                    from: None,
                    last: s,
                    m: m1,
                    position: 0,
                    best,
                    bound,
                    report: t.report,
                };
                return Ok(unmatched_witness(ts, &mon, &letters, &spec, &uvars, &parent, death));
            }
            let aid = pool.intern(survivors, &t.outs);
            let key = pack_exact(ia, ib, aid, m1);
            if let Entry::Vacant(e) = parent.entry(key) {
                e.insert(None);
                frontier.push(key);
            }
        }
    }

    let mut work = 0usize;
    let mut position = 0usize;
    while !frontier.is_empty() {
        position += 1;
        let mut next = Vec::new();
        for &key in &frontier {
            let (sa, sb, aid, m) = unpack_exact(key);
            for &sa2 in ts.succ(sa) {
                for &sb2 in ts.succ(sb) {
                    work += 1;
                    if parent.len() > MAX_EXACT_CONFIGS || work > MAX_EXACT_WORK {
                        return Ok(Verdict::Unknown {
                            reason: format!(
                                "the partner search passed its budget ({} configurations, \
                                 {} steps); the strengthened check or the bounded oracle \
                                 may still settle this",
                                parent.len(),
                                work
                            ),
                        });
                    }
                    let s2 = [sa2, sb2];
                    let m2 = mon.step(m, letters.of_state(s2[spec.std_var]));
                    if mon.dead(m2) || !mon.viable(m2) {
                        continue;
                    }
                    let l_lock = letters.of_state(s2[spec.lock_src]);
                    let din = exact_din(&t, letters.of_state(s2[spec.din_other]), l_lock, n);
                    if t.rule.released(din) {
                        continue;
                    }
                    let bound = t.rule.bound(din)?;
                    let against_out = t.outs.of_state(s2[spec.against]);
                    let aid2 = match amemo.get(&(aid, l_lock, against_out, bound)) {
                        Some(&id) => id,
                        None => {
                            let cand: Vec<StateId> = pool.sets[aid as usize]
                                .iter()
                                .flat_map(|&b| ts.succ(b).iter().copied())
                                .filter(|&b| letters.of_state(b) == l_lock)
                                .collect();
                            let (survivors, best) = sift(&cand, against_out, bound, &t.outs);
                            if survivors.is_empty() {
                                let death = Death {
                                    from: Some(key),
                                    last: s2,
                                    m: m2,
                                    position,
                                    best,
                                    bound,
                                    report: t.report,
                                };
                                return Ok(unmatched_witness(
                                    ts, &mon, &letters, &spec, &uvars, &parent, death,
                                ));
                            }
                            let id = pool.intern(survivors, &t.outs);
                            amemo.insert((aid, l_lock, against_out, bound), id);
                            id
                        }
                    };
                    let key2 = pack_exact(sa2, sb2, aid2, m2);
                    if let Entry::Vacant(e) = parent.entry(key2) {
                        e.insert(Some(key));
                        next.push(key2);
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(Verdict::Clean)
}

/// Re-threads the candidate set along a pair witness of the exact engine:
/// `true` when the set genuinely dies by the recorded position while the
/// standard run stays standard forever. Structural defects (mismatched
/// variables, lassos that are not runs, a released pair, a candidate that
/// survives) make it `false` rather than an error.
pub fn replay_unmatched(
    phi: &HyperFormula,
    ts: &TransitionSystem,
    w: &PairWitness,
) -> Result<bool, HyperError> {
    let spec = recognize(phi)?;
    let (letters, mon) = match input_side(ts, &spec.stdin)? {
        SideOutcome::Ready(l, m) => (l, m),
        SideOutcome::Undecided(_) => return Ok(false),
    };
    let t = exact_tables(&spec, ts, &letters)?;
    let n = letters.count() as usize;
    if w.left_var != phi.var(0) || w.right_var != phi.var(1) {
        return Ok(false);
    }
    if w.t1.validate(ts).is_err() || w.t2.validate(ts).is_err() {
        return Ok(false);
    }
    let runs = [&w.t1, &w.t2];
    let std_run = runs[spec.std_var];
    let mut m = mon.init();
    for &s in &std_run.stem {
        m = mon.step(m, letters.of_state(s));
        if mon.dead(m) {
            return Ok(false);
        }
    }
    let mut orbit = std::collections::HashSet::new();
    let mut i = 0usize;
    while orbit.insert((i, m)) {
        m = mon.step(m, letters.of_state(std_run.cycle[i]));
        if mon.dead(m) {
            return Ok(false);
        }
        i = (i + 1) % std_run.cycle.len();
    }
    let mut alive: Vec<StateId> = Vec::new();
    for k in 0..=w.position {
        let s = [runs[0].state_at(k), runs[1].state_at(k)];
        let l_lock = letters.of_state(s[spec.lock_src]);
        let din = exact_din(&t, letters.of_state(s[spec.din_other]), l_lock, n);
        if t.rule.released(din) {
            return Ok(false);
        }
        let bound = t.rule.bound(din)?;
        let cand: Vec<StateId> = if k == 0 {
            ts.initial().iter().copied().filter(|&b| letters.of_state(b) == l_lock).collect()
        } else {
            let mut c: Vec<StateId> = alive
                .iter()
                .flat_map(|&b| ts.succ(b).iter().copied())
                .filter(|&b| letters.of_state(b) == l_lock)
                .collect();
            c.sort_unstable();
            c.dedup();
            c
        };
        let (survivors, _) = sift(&cand, t.outs.of_state(s[spec.against]), bound, &t.outs);
        if survivors.is_empty() {
            return Ok(true);
        }
        alive = survivors;
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::Distance;
    use crate::hypercheck::{check_reactive, exact_formulas, strengthened_formula, Mode};
    use crate::reactive::{ModelBuilder, VarSpec};
    use crate::seqlang::{parse_temporal, Role};
    use crate::value::Grid;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    /// Input 0 holds output 0. Input 1 answers 10 at first and is then
    /// forced onto the settled output.
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
    fn oracle_catches_the_forced_drift() {
        let ts = drifter("15");
        let c = contract("1", "10");
        let Verdict::Doped { witness: HyperWitness::Words(w) } =
            bounded_oracle_robust(&ts, &c, 64).unwrap()
        else {
            panic!("expected a violating word pair");
        };
        assert_eq!(w.position, 1);
        assert_eq!(w.measured, v("15"));
        assert_eq!(w.bound, v("10"));
        for env in &w.std_inputs {
            assert_eq!(env["i"], v("0"));
        }
        for env in &w.cmp_inputs {
            assert_eq!(env["i"], v("1"));
        }
        assert!(replay_word(&ts, &c, Property::Robust, &w).unwrap());
        let truncated = WordWitness {
            std_inputs: w.std_inputs.clone(),
            cmp_inputs: w.cmp_inputs.clone(),
            position: 0,
            measured: w.measured,
            bound: w.bound,
        };
        assert!(!replay_word(&ts, &c, Property::Robust, &truncated).unwrap());
    }

    #[test]
    fn oracle_closes_on_the_settled_model() {
        let ts = drifter("10");
        let c = contract("1", "10");
        let verdict = bounded_oracle_robust(&ts, &c, 64).unwrap();
        assert!(matches!(verdict, Verdict::Clean), "{verdict:?}");
    }

    #[test]
    fn shallow_depth_is_inconclusive() {
        let ts = drifter("15");
        let c = contract("1", "10");
        assert!(matches!(
            bounded_oracle_robust(&ts, &c, 1).unwrap(),
            Verdict::Unknown { .. }
        ));
        assert!(matches!(
            bounded_oracle_robust(&ts, &c, 0).unwrap(),
            Verdict::Unknown { .. }
        ));
    }

    fn dnew_contract(embedded_kappa: &str, embedded_stdin: &str) -> Contract {
        Contract {
            stdin: parse_temporal("G(i in [0, 1])").unwrap(),
            d_in: Some(Distance::DNew {
                base: Box::new(Distance::AbsDiff),
                kappa_in: v(embedded_kappa),
                stdin: Box::new(parse_temporal(embedded_stdin).unwrap()),
            }),
            d_out: Some(Distance::PastForgetful { base: Box::new(Distance::AbsDiff) }),
            kappa_in: Some(v("1")),
            kappa_out: Some(v("10")),
            ..Contract::default()
        }
    }

    #[test]
    fn prefix_summary_distance_threads_through_the_oracle() {
        let ts = drifter("15");
        let close = dnew_contract("1", "G(i in [0, 1])");
        let Verdict::Doped { witness: HyperWitness::Words(w) } =
            bounded_oracle_robust(&ts, &close, 64).unwrap()
        else {
            panic!("expected a violating word pair");
        };
        assert_eq!(w.position, 1);
        assert!(replay_word(&ts, &close, Property::Robust, &w).unwrap());

        let distant = dnew_contract("0.5", "G(i in [0, 1])");
        assert!(matches!(bounded_oracle_robust(&ts, &distant, 64).unwrap(), Verdict::Clean));

        let skewed = dnew_contract("1", "G(i in [0, 0])");
        let Verdict::Unknown { reason } = bounded_oracle_robust(&ts, &skewed, 64).unwrap() else {
            panic!("expected the contract mismatch to be surfaced");
        };
        assert!(reason.contains("decide which applies"), "{reason}");
    }

    #[test]
    fn threshold_bound_matches_the_release_rule() {
        let ts = drifter("15");
        let base = contract("1", "10");
        let tight = Contract {
            f: Some(BoundFn::Threshold { kappa_in: v("1"), kappa_out: v("10") }),
            kappa_in: None,
            kappa_out: None,
            ..base.clone()
        };
        let Verdict::Doped { witness: HyperWitness::Words(w) } =
            bounded_oracle_fclean(&ts, &tight, 64).unwrap()
        else {
            panic!("expected a violating word pair");
        };
        assert_eq!(w.position, 1);
        assert_eq!(w.bound, v("10"));
        assert!(replay_word(&ts, &tight, Property::FClean, &w).unwrap());

        let slack = Contract {
            f: Some(BoundFn::Threshold { kappa_in: v("1"), kappa_out: v("15") }),
            ..tight
        };
        assert!(matches!(bounded_oracle_fclean(&ts, &slack, 64).unwrap(), Verdict::Clean));
    }

    #[test]
    fn single_run_clean_oracle_closes() {
        let ts = drifter("15");
        let c = Contract { stdin: parse_temporal("G(i in [0, 1])").unwrap(), ..Contract::default() };
        assert!(matches!(bounded_oracle_clean(&ts, &c, 64).unwrap(), Verdict::Clean));
    }

    /// Reading 0 is the only standard input and holds output 0. Reading 1
    /// answers 0 or 9, but once a run is on the 9 branch it can only keep
    /// reading 1 there; coming back to 0 resets it.
    fn directional() -> TransitionSystem {
        let mut b = ModelBuilder::new(
            "directional",
            vec![
                VarSpec::new("i", Role::Input, Grid::new(v("0"), v("1"), v("1")).unwrap()),
                VarSpec::new("o", Role::Output, Grid::new(v("0"), v("9"), v("9")).unwrap()),
            ],
        )
        .unwrap();
        let a0 = b.state(&[("i", v("0")), ("o", v("0"))]).unwrap();
        let b0 = b.state(&[("i", v("1")), ("o", v("0"))]).unwrap();
        let b9 = b.state(&[("i", v("1")), ("o", v("9"))]).unwrap();
        for s in [a0, b0, b9] {
            b.mark_initial(s);
        }
        for s in [a0, b0] {
            b.edge(s, a0);
            b.edge(s, b0);
            b.edge(s, b9);
        }
        b.edge(b9, b9);
        b.edge(b9, a0);
        b.finish().unwrap()
    }

    fn zero_lock() -> Contract {
        Contract {
            stdin: parse_temporal("G(i in [0, 0])").unwrap(),
            d_in: Some(Distance::PastForgetful { base: Box::new(Distance::AbsDiff) }),
            d_out: Some(Distance::PastForgetful { base: Box::new(Distance::AbsDiff) }),
            kappa_in: Some(v("1")),
            kappa_out: Some(v("1")),
            ..Contract::default()
        }
    }

    #[test]
    fn exact_directions_split() {
        let ts = directional();
        let c = zero_lock();
        let forms = exact_formulas(&c, Property::Robust).unwrap();
        assert_eq!(forms.len(), 2);

        let deviant = check_forall_forall_exists_exact(&forms[0], &ts).unwrap();
        assert!(matches!(deviant, Verdict::Clean), "{deviant:?}");

        let Verdict::Doped { witness: HyperWitness::Pair(w) } =
            check_forall_forall_exists_exact(&forms[1], &ts).unwrap()
        else {
            panic!("expected a pair with no partner");
        };
        assert_eq!(w.position, 0);
        assert_eq!(w.bound, Some(v("1")));
        assert_eq!(w.measured, Some(v("9")));
        w.t1.validate(&ts).unwrap();
        w.t2.validate(&ts).unwrap();
        for k in 0..w.t1.horizon() + 1 {
            assert_eq!(w.t1.env_at(&ts, k)["i"], v("0"));
        }
        assert_eq!(w.t2.env_at(&ts, 0)["o"], v("9"));
        assert!(replay_unmatched(&forms[1], &ts, &w).unwrap());

        let matched = PairWitness { t2: w.t1.clone(), ..w };
        assert!(!replay_unmatched(&forms[1], &ts, &matched).unwrap());
    }

    #[test]
    fn exact_mode_combines_both_directions() {
        let ts = directional();
        let verdict =
            check_reactive(&ts, &zero_lock(), Property::Robust, Mode::Exact, None).unwrap();
        assert!(matches!(verdict, Verdict::Doped { .. }), "{verdict:?}");

        let clean_c =
            Contract { stdin: parse_temporal("G(i in [0, 0])").unwrap(), ..Contract::default() };
        let verdict =
            check_reactive(&ts, &clean_c, Property::Clean, Mode::Exact, None).unwrap();
        assert!(matches!(verdict, Verdict::Clean), "{verdict:?}");
    }

    #[test]
    fn exact_rejects_other_shapes() {
        let ts = directional();
        let phi = strengthened_formula(&zero_lock(), Property::Robust).unwrap();
        assert!(matches!(
            check_forall_forall_exists_exact(&phi, &ts),
            Err(HyperError::Formula(_))
        ));
    }
}
