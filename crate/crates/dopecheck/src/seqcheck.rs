//! Enumeration-based cleanness checks for sequential programs.
//!
//! Programs here are finite: every variable ranges over a grid, so the
//! checks can literally enumerate all parameter and input valuations,
//! execute the program, and compare output sets. Execution-budget
//! exhaustion is tracked per run and can only ever make a verdict
//! `Unknown`, never flip it.

use crate::contracts::{
    hausdorff_by, BoundFnError, Contract, ContractError, DistanceError, ParamSel,
};
use crate::seqlang::{
    eval::{run, Env, EvalOpts},
    eval_pred, Decl, EvalError, Program,
};
use crate::value::Value;
use crate::Verdict;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Bound(#[from] BoundFnError),
    #[error("enumeration infeasible: {0}")]
    Enumeration(String),
}

#[derive(Debug, Clone)]
pub struct CheckOpts {
    pub eval: EvalOpts,
    /// Cap on enumerated parameter valuations and on input valuations.
    pub max_valuations: usize,
}

impl Default for CheckOpts {
    fn default() -> Self {
        CheckOpts { eval: EvalOpts::default(), max_valuations: 100_000 }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SeqStats {
    pub param_valuations: usize,
    pub input_valuations: usize,
    pub standard_inputs: usize,
    pub runs: u64,
    pub pairs_checked: u64,
    pub bottom_runs: u64,
    pub snap_events: u64,
}

/// Where a sequential check failed.
#[derive(Debug, Clone, Serialize)]
pub struct SeqWitness {
    pub params: Env,
    pub params_alt: Env,
    pub input: Env,
    pub input_alt: Env,
    pub outputs: Vec<Env>,
    pub outputs_alt: Vec<Env>,
    /// Measured output deviation (Hausdorff), when the property bounds one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<Value>,
    /// Which requirement of the general property failed, if applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<u8>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub verdict: Verdict<SeqWitness>,
    pub stats: SeqStats,
}

// ---------------------------------------------------------------------------
// Enumeration.

fn grid_product(decls: &[&Decl], cap: usize) -> Result<Vec<Env>, CheckError> {
    let mut total: usize = 1;
    for d in decls {
        total = total
            .checked_mul(d.grid.count())
            .filter(|t| *t <= cap)
            .ok_or_else(|| {
                CheckError::Enumeration(format!(
                    "more than {cap} valuations over {}",
                    decls
                        .iter()
                        .map(|d| d.name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })?;
    }
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; decls.len()];
    loop {
        let env: Env = decls
            .iter()
            .zip(&idx)
            .map(|(d, i)| (d.name.clone(), d.grid.value_at(*i)))
            .collect();
        out.push(env);
        // Odometer: last variable varies fastest, so the sequence is
        // lexicographic in declaration order.
        let mut pos = decls.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < decls[pos].grid.count() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn param_envs(prog: &Program, c: &Contract, opts: &CheckOpts) -> Result<Vec<Env>, CheckError> {
    let decls: Vec<&Decl> = prog.params().collect();
    match &c.pintrs {
        ParamSel::Pred(p) => {
            let all = grid_product(&decls, opts.max_valuations)?;
            let mut kept = Vec::new();
            for env in all {
                if eval_pred(p, &env)? {
                    kept.push(env);
                }
            }
            Ok(kept)
        }
        ParamSel::Explicit(rows) => {
            let mut kept = Vec::new();
            for row in rows {
                if row.len() != decls.len()
                    || !decls.iter().all(|d| row.contains_key(&d.name))
                {
                    return Err(CheckError::Enumeration(format!(
                        "explicit parameter row {row:?} does not bind exactly the declared params"
                    )));
                }
                for d in &decls {
                    if !d.grid.contains(row[&d.name]) {
                        return Err(CheckError::Enumeration(format!(
                            "parameter {} = {} is off its grid {}",
                            d.name, row[&d.name], d.grid
                        )));
                    }
                }
                kept.push(row.clone());
            }
            Ok(kept)
        }
    }
}

fn input_envs(prog: &Program, opts: &CheckOpts) -> Result<Vec<Env>, CheckError> {
    let decls: Vec<&Decl> = prog.inputs().collect();
    grid_product(&decls, opts.max_valuations)
}

/// One executed run: its output set in deterministic order, and whether the
/// execution budget cut some resolution short.
#[derive(Debug, Clone)]
struct RunOut {
    outputs: Vec<Env>,
    bottom: bool,
}

struct Table {
    runs: Vec<RunOut>,
    inputs_len: usize,
}

impl Table {
    fn at(&self, pi: usize, ii: usize) -> &RunOut {
        &self.runs[pi * self.inputs_len + ii]
    }
}

fn eval_table(
    prog: &Program,
    params: &[Env],
    inputs: &[Env],
    opts: &CheckOpts,
    stats: &mut SeqStats,
) -> Result<Table, CheckError> {
    let jobs: Vec<(usize, usize)> = (0..params.len())
        .flat_map(|pi| (0..inputs.len()).map(move |ii| (pi, ii)))
        .collect();
    let results: Result<Vec<(RunOut, u64)>, EvalError> = jobs
        .par_iter()
        .map(|(pi, ii)| {
            let r = run(prog, &params[*pi], &inputs[*ii], &opts.eval)?;
            let outputs: Vec<Env> = r.outputs.into_iter().collect();
            Ok((RunOut { outputs, bottom: r.bottom }, r.snap_count))
        })
        .collect();
    let results = results?;
    stats.runs += results.len() as u64;
    for (r, snaps) in &results {
        stats.snap_events += snaps;
        if r.bottom {
            stats.bottom_runs += 1;
        }
    }
    Ok(Table {
        runs: results.into_iter().map(|(r, _)| r).collect(),
        inputs_len: inputs.len(),
    })
}

// ---------------------------------------------------------------------------
// Comparisons under incomplete runs.

enum Cmp {
    Fine,
    Violation { measured: Option<Value>, elem: Env, missing_from_alt: bool },
    Undecided(String),
}

/// Set equality with budget awareness: an element missing from a complete
/// set is a definitive difference; anything else involving an incomplete
/// run stays undecided.
fn compare_equal(a: &RunOut, b: &RunOut) -> Cmp {
    let sa: BTreeSet<&Env> = a.outputs.iter().collect();
    let sb: BTreeSet<&Env> = b.outputs.iter().collect();
    if let Some(x) = sa.difference(&sb).next() {
        if !b.bottom {
            return Cmp::Violation {
                measured: None,
                elem: (*x).clone(),
                missing_from_alt: true,
            };
        }
    }
    if let Some(x) = sb.difference(&sa).next() {
        if !a.bottom {
            return Cmp::Violation {
                measured: None,
                elem: (*x).clone(),
                missing_from_alt: false,
            };
        }
    }
    if sa == sb && !a.bottom && !b.bottom {
        Cmp::Fine
    } else {
        Cmp::Undecided(
            "output sets could not be separated: execution budget exhausted on some resolution"
                .into(),
        )
    }
}

/// Hausdorff comparison against a bound, budget-aware. `identical`
/// short-circuits comparing a run against itself, where the distance is 0
/// by construction no matter how incomplete the run is.
fn compare_hausdorff(
    a: &RunOut,
    b: &RunOut,
    bound: Value,
    identical: bool,
    dval: &mut impl FnMut(&Env, &Env) -> Result<Value, DistanceError>,
) -> Result<Cmp, CheckError> {
    if bound == Value::Inf {
        return Ok(Cmp::Fine);
    }
    if identical {
        return Ok(if Value::ZERO <= bound {
            Cmp::Fine
        } else {
            Cmp::Violation { measured: Some(Value::ZERO), elem: Env::new(), missing_from_alt: true }
        });
    }
    let h = hausdorff_by(&a.outputs, &b.outputs, &mut *dval)?;
    if h <= bound {
        return Ok(if !a.bottom && !b.bottom {
            Cmp::Fine
        } else {
            Cmp::Undecided(format!(
                "distance {h} within bound {bound}, but execution budget exhausted; sets may be incomplete"
            ))
        });
    }
    // Beyond the bound: definitive only if some uncovered element faces a
    // complete partner set.
    for (xs, ys, partner_bottom, fwd) in
        [(a, b, b.bottom, true), (b, a, a.bottom, false)]
    {
        if partner_bottom {
            continue;
        }
        for x in &xs.outputs {
            let mut best = Value::Inf;
            for y in &ys.outputs {
                best = best.min(dval(x, y)?);
            }
            if best > bound {
                return Ok(Cmp::Violation {
                    measured: Some(h),
                    elem: x.clone(),
                    missing_from_alt: fwd,
                });
            }
        }
    }
    Ok(Cmp::Undecided(format!(
        "distance {h} exceeds bound {bound}, but the uncovered side faces an incomplete set"
    )))
}

// ---------------------------------------------------------------------------
// The four checks.

struct Prep {
    params: Vec<Env>,
    inputs: Vec<Env>,
    std_mask: Vec<bool>,
    table: Table,
    stats: SeqStats,
}

fn prepare(prog: &Program, c: &Contract, opts: &CheckOpts) -> Result<Prep, CheckError> {
    c.validate()?;
    let params = param_envs(prog, c, opts)?;
    let inputs = input_envs(prog, opts)?;
    let stdin = c.stdin_plain()?;
    let std_mask = inputs
        .iter()
        .map(|env| eval_pred(stdin, env))
        .collect::<Result<Vec<_>, _>>()?;
    let mut stats = SeqStats {
        param_valuations: params.len(),
        input_valuations: inputs.len(),
        standard_inputs: std_mask.iter().filter(|m| **m).count(),
        ..SeqStats::default()
    };
    let table = eval_table(prog, &params, &inputs, opts, &mut stats)?;
    Ok(Prep { params, inputs, std_mask, table, stats })
}

fn out_dist<'c>(
    prog: &Program,
    c: &'c Contract,
) -> impl FnMut(&Env, &Env) -> Result<Value, DistanceError> + 'c {
    let d = c.d_out();
    let outs: Vec<String> = prog.outputs().map(|d| d.name.clone()).collect();
    move |o1: &Env, o2: &Env| {
        d.valuation_dist(outs.iter().map(|v| (o1[v.as_str()], o2[v.as_str()])))
    }
}

fn in_dist(c: &Contract, i1: &Env, i2: &Env) -> Result<Value, DistanceError> {
    c.d_in()
        .valuation_dist(i1.iter().map(|(k, v)| (*v, i2[k.as_str()])))
}

fn fmt_env(env: &Env) -> String {
    if env.is_empty() {
        return "(none)".into();
    }
    env.iter()
        .map(|(k, v)| format!("{k} = {v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Every pair of parameters of interest must produce identical output sets
/// on every standard input.
pub fn check_clean(prog: &Program, c: &Contract, opts: &CheckOpts) -> Result<CheckOutcome, CheckError> {
    let mut prep = prepare(prog, c, opts)?;
    let verdict = clean_scan(&mut prep)?;
    Ok(CheckOutcome { verdict, stats: prep.stats })
}

fn clean_scan(prep: &mut Prep) -> Result<Verdict<SeqWitness>, CheckError> {
    let mut undecided: Option<String> = None;
    for pi in 0..prep.params.len() {
        for qi in pi + 1..prep.params.len() {
            for ii in 0..prep.inputs.len() {
                if !prep.std_mask[ii] {
                    continue;
                }
                prep.stats.pairs_checked += 1;
                match compare_equal(prep.table.at(pi, ii), prep.table.at(qi, ii)) {
                    Cmp::Fine => {}
                    Cmp::Violation { elem, missing_from_alt, .. } => {
                        let (a, b) = (prep.table.at(pi, ii), prep.table.at(qi, ii));
                        return Ok(Verdict::Doped {
                            witness: SeqWitness {
                                params: prep.params[pi].clone(),
                                params_alt: prep.params[qi].clone(),
                                input: prep.inputs[ii].clone(),
                                input_alt: prep.inputs[ii].clone(),
                                outputs: a.outputs.clone(),
                                outputs_alt: b.outputs.clone(),
                                measured: None,
                                bound: None,
                                item: None,
                                detail: format!(
                                    "on standard input {}, output {} is produced under {} but not under {}",
                                    fmt_env(&prep.inputs[ii]),
                                    fmt_env(&elem),
                                    fmt_env(if missing_from_alt { &prep.params[pi] } else { &prep.params[qi] }),
                                    fmt_env(if missing_from_alt { &prep.params[qi] } else { &prep.params[pi] }),
                                ),
                            },
                        });
                    }
                    Cmp::Undecided(reason) => {
                        undecided.get_or_insert(reason);
                    }
                }
            }
        }
    }
    Ok(match undecided {
        Some(reason) => Verdict::Unknown { reason },
        None => Verdict::Clean,
    })
}

/// Standard inputs may be deviated by at most `kappa_in`; output sets must
/// then stay within Hausdorff distance `kappa_out`, across all parameter
/// pairs of interest.
pub fn check_robustly_clean(
    prog: &Program,
    c: &Contract,
    opts: &CheckOpts,
) -> Result<CheckOutcome, CheckError> {
    let kappa_in = c.require_kappa_in()?;
    let kappa_out = c.require_kappa_out()?;
    let mut prep = prepare(prog, c, opts)?;
    let verdict = bounded_scan(prog, c, &mut prep, |d| {
        Ok(if d <= kappa_in { Some(kappa_out) } else { None })
    })?;
    Ok(CheckOutcome { verdict, stats: prep.stats })
}

/// Like robust cleanness, but every input deviation is admitted and the
/// output bound is `f` of the input distance.
pub fn check_f_clean(
    prog: &Program,
    c: &Contract,
    opts: &CheckOpts,
) -> Result<CheckOutcome, CheckError> {
    let f = c.require_f()?.clone();
    let mut prep = prepare(prog, c, opts)?;
    let verdict = bounded_scan(prog, c, &mut prep, |d| Ok(Some(f.apply(d)?)))?;
    Ok(CheckOutcome { verdict, stats: prep.stats })
}

/// Scans all ordered parameter pairs, standard inputs and deviated inputs.
/// `bound_for` maps the input distance to the output bound, or `None` to
/// skip the pair entirely.
fn bounded_scan(
    prog: &Program,
    c: &Contract,
    prep: &mut Prep,
    mut bound_for: impl FnMut(Value) -> Result<Option<Value>, CheckError>,
) -> Result<Verdict<SeqWitness>, CheckError> {
    let mut dval = out_dist(prog, c);
    let mut undecided: Option<String> = None;
    for pi in 0..prep.params.len() {
        for qi in 0..prep.params.len() {
            for ii in 0..prep.inputs.len() {
                if !prep.std_mask[ii] {
                    continue;
                }
                for jj in 0..prep.inputs.len() {
                    let d = in_dist(c, &prep.inputs[ii], &prep.inputs[jj])?;
                    let bound = match bound_for(d)? {
                        Some(b) => b,
                        None => continue,
                    };
                    prep.stats.pairs_checked += 1;
                    let identical = pi == qi && ii == jj;
                    let cmp = compare_hausdorff(
                        prep.table.at(pi, ii),
                        prep.table.at(qi, jj),
                        bound,
                        identical,
                        &mut dval,
                    )?;
                    match cmp {
                        Cmp::Fine => {}
                        Cmp::Violation { measured, .. } => {
                            let (a, b) = (prep.table.at(pi, ii), prep.table.at(qi, jj));
                            return Ok(Verdict::Doped {
                                witness: SeqWitness {
                                    params: prep.params[pi].clone(),
                                    params_alt: prep.params[qi].clone(),
                                    input: prep.inputs[ii].clone(),
                                    input_alt: prep.inputs[jj].clone(),
                                    outputs: a.outputs.clone(),
                                    outputs_alt: b.outputs.clone(),
                                    measured,
                                    bound: Some(bound),
                                    item: None,
                                    detail: format!(
                                        "input {} deviated to {} (input distance {d}) drives the output sets {} apart, above the allowed {bound}",
                                        fmt_env(&prep.inputs[ii]),
                                        fmt_env(&prep.inputs[jj]),
                                        measured.map(|m| m.to_string()).unwrap_or_default(),
                                    ),
                                },
                            });
                        }
                        Cmp::Undecided(reason) => {
                            undecided.get_or_insert(reason);
                        }
                    }
                }
            }
        }
    }
    Ok(match undecided {
        Some(reason) => Verdict::Unknown { reason },
        None => Verdict::Clean,
    })
}

/// The three-part cleanness property: exact agreement on standard inputs,
/// `f`-bounded deviation against committed inputs, and no output jumps
/// between neighbouring inputs outside both.
///
/// The third part is checked by sampling neighbouring grid inputs; a jump
/// is a violation only against a caller-supplied `jump_bound`. Without one
/// the scan reports the largest observed jump and stays `Unknown` unless
/// there is nothing to sample.
pub fn check_general_clean(
    prog: &Program,
    c: &Contract,
    opts: &CheckOpts,
    jump_bound: Option<Value>,
) -> Result<CheckOutcome, CheckError> {
    let f = c.require_f()?.clone();
    let comm = c.require_comm()?.clone();
    let mut prep = prepare(prog, c, opts)?;

    // Standard and committed inputs must not overlap.
    let comm_mask = prep
        .inputs
        .iter()
        .map(|env| eval_pred(&comm, env))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(ii) = (0..prep.inputs.len()).find(|ii| prep.std_mask[*ii] && comm_mask[*ii]) {
        return Err(CheckError::Enumeration(format!(
            "input {} is both standard and committed; the contract must separate them",
            fmt_env(&prep.inputs[ii])
        )));
    }

    // Requirement 1: exact agreement on standard inputs.
    let item1 = clean_scan(&mut prep)?;
    if let Verdict::Doped { mut witness } = item1 {
        witness.item = Some(1);
        return Ok(CheckOutcome { verdict: Verdict::Doped { witness }, stats: prep.stats });
    }

    // Requirement 2: f-bounded deviation from standard to committed inputs.
    let comm_mask_ref = &comm_mask;
    let item2 = {
        let mut dval = out_dist(prog, c);
        let mut undecided: Option<String> = None;
        let mut verdict = Verdict::Clean;
        'outer: for pi in 0..prep.params.len() {
            for qi in 0..prep.params.len() {
                for ii in 0..prep.inputs.len() {
                    if !prep.std_mask[ii] {
                        continue;
                    }
                    for (jj, &committed) in comm_mask_ref.iter().enumerate() {
                        if !committed {
                            continue;
                        }
                        let d = in_dist(c, &prep.inputs[ii], &prep.inputs[jj])?;
                        let bound = f.apply(d)?;
                        prep.stats.pairs_checked += 1;
                        let cmp = compare_hausdorff(
                            prep.table.at(pi, ii),
                            prep.table.at(qi, jj),
                            bound,
                            false,
                            &mut dval,
                        )?;
                        match cmp {
                            Cmp::Fine => {}
                            Cmp::Violation { measured, .. } => {
                                let (a, b) = (prep.table.at(pi, ii), prep.table.at(qi, jj));
                                verdict = Verdict::Doped {
                                    witness: SeqWitness {
                                        params: prep.params[pi].clone(),
                                        params_alt: prep.params[qi].clone(),
                                        input: prep.inputs[ii].clone(),
                                        input_alt: prep.inputs[jj].clone(),
                                        outputs: a.outputs.clone(),
                                        outputs_alt: b.outputs.clone(),
                                        measured,
                                        bound: Some(bound),
                                        item: Some(2),
                                        detail: format!(
                                            "standard input {} against committed input {} exceeds the f-bound {bound}",
                                            fmt_env(&prep.inputs[ii]),
                                            fmt_env(&prep.inputs[jj]),
                                        ),
                                    },
                                };
                                break 'outer;
                            }
                            Cmp::Undecided(reason) => {
                                undecided.get_or_insert(reason);
                            }
                        }
                    }
                }
            }
        }
        if matches!(verdict, Verdict::Clean) {
            if let Some(reason) = undecided {
                verdict = Verdict::Unknown { reason };
            }
        }
        verdict
    };
    if let Verdict::Doped { witness } = item2 {
        return Ok(CheckOutcome { verdict: Verdict::Doped { witness }, stats: prep.stats });
    }

    // Requirement 3: no jumps between neighbouring inputs outside the
    // standard and committed sets.
    let outside: Vec<usize> = (0..prep.inputs.len())
        .filter(|ii| !prep.std_mask[*ii] && !comm_mask[*ii])
        .collect();
    let input_decls: Vec<&Decl> = prog.inputs().collect();
    let mut max_jump: Option<Value> = None;
    let mut sampled: u64 = 0;
    let mut unmeasured = false;
    let mut item3_witness: Option<SeqWitness> = None;
    let mut dval = out_dist(prog, c);
    'scan: for &ii in &outside {
        for d in &input_decls {
            let cur = prep.inputs[ii][d.name.as_str()];
            let next_idx = match d.grid.index_of(cur) {
                Some(k) if k + 1 < d.grid.count() => k + 1,
                _ => continue,
            };
            let mut neighbour = prep.inputs[ii].clone();
            neighbour.insert(d.name.clone(), d.grid.value_at(next_idx));
            let jj = match prep.inputs.iter().position(|e| *e == neighbour) {
                Some(j) => j,
                None => continue,
            };
            if prep.std_mask[jj] || comm_mask[jj] {
                continue;
            }
            for pi in 0..prep.params.len() {
                sampled += 1;
                let (a, b) = (prep.table.at(pi, ii), prep.table.at(pi, jj));
                if a.bottom || b.bottom {
                    unmeasured = true;
                    continue;
                }
                let h = hausdorff_by(&a.outputs, &b.outputs, &mut dval)?;
                max_jump = Some(max_jump.map_or(h, |m| m.max(h)));
                if let Some(bound) = jump_bound {
                    if h > bound {
                        item3_witness = Some(SeqWitness {
                            params: prep.params[pi].clone(),
                            params_alt: prep.params[pi].clone(),
                            input: prep.inputs[ii].clone(),
                            input_alt: prep.inputs[jj].clone(),
                            outputs: a.outputs.clone(),
                            outputs_alt: b.outputs.clone(),
                            measured: Some(h),
                            bound: Some(bound),
                            item: Some(3),
                            detail: format!(
                                "outputs jump by {h} between neighbouring non-standard, non-committed inputs {} and {}",
                                fmt_env(&prep.inputs[ii]),
                                fmt_env(&prep.inputs[jj]),
                            ),
                        });
                        break 'scan;
                    }
                }
            }
        }
    }
    if let Some(witness) = item3_witness {
        return Ok(CheckOutcome { verdict: Verdict::Doped { witness }, stats: prep.stats });
    }

    let jump_report = match max_jump {
        Some(m) => format!(
            "largest output jump between neighbouring excluded inputs: {m} over {sampled} sampled pairs"
        ),
        None => "no neighbouring input pairs outside the standard and committed sets".into(),
    };
    let verdict = match (&item1, &item2) {
        (Verdict::Unknown { reason }, _) | (_, Verdict::Unknown { reason }) => {
            Verdict::Unknown { reason: format!("{reason}; {jump_report}") }
        }
        _ if unmeasured => Verdict::Unknown {
            reason: format!("some continuity samples hit the execution budget; {jump_report}"),
        },
        _ if outside.is_empty() || jump_bound.is_some() => Verdict::Clean,
        _ => Verdict::Unknown {
            reason: format!(
                "continuity outside the standard and committed inputs is only sampled; {jump_report}"
            ),
        },
    };
    Ok(CheckOutcome { verdict, stats: prep.stats })
}
