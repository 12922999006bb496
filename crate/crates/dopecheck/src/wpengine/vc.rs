//! Verification conditions over self-composed programs.
//!
//! Each cleanness property of a deterministic program becomes a first-order
//! implication between the initial states of two copies: the original on its
//! own variables and a renamed copy on primed ones. The antecedent selects
//! the parameter and input pairs the property speaks about; the consequent
//! is a weakest precondition of the two copies run in sequence. Termination
//! guards in the antecedent keep the conditions from failing merely because
//! one copy diverges: the other composition order covers that side.

use serde::Serialize;
use thiserror::Error;

use crate::contracts::{
    BoundFnError, Contract, ContractError, Distance, DistanceError, ParamSel,
};
use crate::seqlang::{CmpOp, Decl, Env, Expr, Pred, Program};
use crate::value::Value;
use crate::Verdict;

use super::validity::{
    check_validity, Block, CheckVcOpts, DomainSpec, ValidityError, VcReport, VcVerdict,
};
use super::wp::{grid_map, primed, rename_pred, rename_program, wp, WpError, DEFAULT_UNROLL};

#[derive(Debug, Error)]
pub enum VcError {
    #[error(transparent)]
    Wp(#[from] WpError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Bound(#[from] BoundFnError),
    #[error(transparent)]
    Validity(#[from] ValidityError),
    #[error("parameter row {0}")]
    BadParamRow(String),
}

/// One verification condition: a closed formula over the self-composed
/// program's initial state, expected to hold on every state of its domain.
#[derive(Debug, Clone, Serialize)]
pub struct Vc {
    pub name: String,
    /// The deviation bound this instance fixes, for the family produced by
    /// [`vc_f_clean`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Value>,
    pub formula: Pred,
}

impl std::fmt::Display for Vc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.name, self.formula)
    }
}

fn pintrs_pred(c: &Contract) -> Pred {
    match &c.pintrs {
        ParamSel::Pred(p) => p.clone(),
        // Explicit parameter rows are enforced by the evaluation domain.
        ParamSel::Explicit(_) => Pred::Bool(true),
    }
}

/// `d(v, v'); ...` over the given variables, as an expression. Trace-level
/// distances have no sequential reading.
fn dist_term<'a>(
    label: &str,
    d: &Distance,
    vars: impl Iterator<Item = &'a Decl>,
) -> Result<Expr, VcError> {
    if d.as_dnew().is_some() {
        return Err(DistanceError::TraceLevelOnly("the three-valued trace distance").into());
    }
    Ok(Expr::Dist {
        label: label.to_string(),
        dist: Box::new(d.clone()),
        pairs: vars
            .map(|v| (Expr::Var(v.name.clone()), Expr::Var(primed(&v.name))))
            .collect(),
    })
}

fn pairs_equal<'a>(vars: impl Iterator<Item = &'a Decl>) -> Pred {
    Pred::all(vars.map(|v| {
        Pred::cmp(CmpOp::Eq, Expr::Var(v.name.clone()), Expr::Var(primed(&v.name)))
    }))
}

struct Composition {
    grids: std::collections::BTreeMap<String, crate::value::Grid>,
    fwd: Vec<crate::seqlang::Stmt>,
    rev: Vec<crate::seqlang::Stmt>,
    term_orig: Pred,
    term_primed: Pred,
}

fn compose(p: &Program, unroll: usize) -> Result<Composition, VcError> {
    let pp = rename_program(p);
    let grids = grid_map(&[p, &pp]);
    let mut fwd = p.body.clone();
    fwd.extend(pp.body.iter().cloned());
    let mut rev = pp.body.clone();
    rev.extend(p.body.iter().cloned());
    let term_orig = wp(&grids, &p.body, Pred::Bool(true), unroll)?;
    let term_primed = wp(&grids, &pp.body, Pred::Bool(true), unroll)?;
    Ok(Composition { grids, fwd, rev, term_orig, term_primed })
}

/// Both copies take the same standard input; the outputs must agree
/// wherever the first copy terminates. The symmetric quantification covers
/// the other termination order.
pub fn vc_clean(p: &Program, c: &Contract, unroll: usize) -> Result<Vc, VcError> {
    let comp = compose(p, unroll)?;
    let selected = Pred::and(pintrs_pred(c), c.stdin_plain()?.clone());
    let ante = Pred::all([
        selected.clone(),
        rename_pred(&selected),
        pairs_equal(p.inputs()),
        comp.term_orig,
    ]);
    let conseq = wp(&comp.grids, &comp.fwd, pairs_equal(p.outputs()), unroll)?;
    Ok(Vc { name: "clean".to_string(), y: None, formula: Pred::implies(ante, conseq) })
}

/// The two conditions of robust cleanness, one per composition order. The
/// unprimed copy takes the standard input, the primed copy any input within
/// `kappa_in` of it; outputs must stay within `kappa_out`.
pub fn vc_robustly_clean(
    p: &Program,
    c: &Contract,
    unroll: usize,
) -> Result<[Vc; 2], VcError> {
    let comp = compose(p, unroll)?;
    let shared = Pred::all([
        pintrs_pred(c),
        c.stdin_plain()?.clone(),
        rename_pred(&pintrs_pred(c)),
        Pred::cmp(
            CmpOp::Le,
            dist_term("d_in", &c.d_in(), p.inputs())?,
            Expr::Const(c.require_kappa_in()?),
        ),
    ]);
    let post = Pred::cmp(
        CmpOp::Le,
        dist_term("d_out", &c.d_out(), p.outputs())?,
        Expr::Const(c.require_kappa_out()?),
    );
    let fwd = Pred::implies(
        Pred::and(shared.clone(), comp.term_orig),
        wp(&comp.grids, &comp.fwd, post.clone(), unroll)?,
    );
    let rev = Pred::implies(
        Pred::and(shared, comp.term_primed),
        wp(&comp.grids, &comp.rev, post, unroll)?,
    );
    Ok([
        Vc { name: "robust forward".to_string(), y: None, formula: fwd },
        Vc { name: "robust reverse".to_string(), y: None, formula: rev },
    ])
}

/// Input distances two grid points can realize, across all input variables.
/// Zero is always realizable, so the pointwise maximum over several inputs
/// adds nothing beyond the per-variable distances.
fn realizable_input_distances(p: &Program, d: &Distance) -> Result<Vec<Value>, VcError> {
    let mut out = std::collections::BTreeSet::new();
    for decl in p.inputs() {
        let pts: Vec<Value> = decl.grid.iter().collect();
        for (i, &a) in pts.iter().enumerate() {
            for &b in &pts[i..] {
                out.insert(d.value_dist(a, b)?);
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// One condition per realizable deviation bound `Y = f(d_in)`. Each fixes
/// the bound as a constant: the antecedent selects the input pairs mapped
/// to that bound, the consequent holds the output deviation under it, in
/// both composition orders.
pub fn vc_f_clean(p: &Program, c: &Contract, unroll: usize) -> Result<Vec<Vc>, VcError> {
    let comp = compose(p, unroll)?;
    let f = c.require_f()?;
    let d_in = c.d_in();
    let ys = f.image(realizable_input_distances(p, &d_in)?)?;

    let select = Pred::all([
        pintrs_pred(c),
        c.stdin_plain()?.clone(),
        rename_pred(&pintrs_pred(c)),
    ]);
    let f_of_din = Expr::FApp {
        f: f.clone(),
        arg: Box::new(dist_term("d_in", &d_in, p.inputs())?),
    };
    let d_out = dist_term("d_out", &c.d_out(), p.outputs())?;

    let mut vcs = Vec::with_capacity(ys.len());
    for y in ys {
        let ante = Pred::and(
            select.clone(),
            Pred::cmp(CmpOp::Eq, f_of_din.clone(), Expr::Const(y)),
        );
        let post = Pred::cmp(CmpOp::Le, d_out.clone(), Expr::Const(y));
        let both = Pred::and(
            Pred::implies(
                comp.term_orig.clone(),
                wp(&comp.grids, &comp.fwd, post.clone(), unroll)?,
            ),
            Pred::implies(
                comp.term_primed.clone(),
                wp(&comp.grids, &comp.rev, post, unroll)?,
            ),
        );
        vcs.push(Vc {
            name: format!("deviation bound {y}"),
            y: Some(y),
            formula: Pred::implies(ante, both),
        });
    }
    Ok(vcs)
}

/// Evaluation domain of a self-composed program: both copies' parameters,
/// then both copies' inputs, with locals and outputs pinned to their grid
/// origin exactly as the evaluator initializes them.
pub fn vc_domains(p: &Program, c: &Contract) -> Result<DomainSpec, VcError> {
    let mut blocks = Vec::new();
    match &c.pintrs {
        ParamSel::Pred(_) => {
            for prime in [false, true] {
                for d in p.params() {
                    let var = if prime { primed(&d.name) } else { d.name.clone() };
                    blocks.push(Block::Grid { var, grid: d.grid });
                }
            }
        }
        ParamSel::Explicit(rows) => {
            let decls: Vec<&Decl> = p.params().collect();
            let mut table = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() != decls.len() {
                    return Err(VcError::BadParamRow(format!(
                        "binds {} variables, the program declares {} parameters",
                        row.len(),
                        decls.len()
                    )));
                }
                let mut tuple = Vec::with_capacity(decls.len());
                for d in &decls {
                    let v = *row.get(&d.name).ok_or_else(|| {
                        VcError::BadParamRow(format!("misses parameter {}", d.name))
                    })?;
                    if !d.grid.contains(v) {
                        return Err(VcError::BadParamRow(format!(
                            "sets {} = {v}, off its grid {}",
                            d.name, d.grid
                        )));
                    }
                    tuple.push(v);
                }
                table.push(tuple);
            }
            let vars: Vec<String> = decls.iter().map(|d| d.name.clone()).collect();
            blocks.push(Block::Rows { vars: vars.clone(), rows: table.clone() });
            blocks.push(Block::Rows {
                vars: vars.iter().map(|v| primed(v)).collect(),
                rows: table,
            });
        }
    }
    for prime in [false, true] {
        for d in p.inputs() {
            let var = if prime { primed(&d.name) } else { d.name.clone() };
            blocks.push(Block::Grid { var, grid: d.grid });
        }
    }

    let mut fixed = Vec::new();
    for d in &p.decls {
        if matches!(d.role, crate::seqlang::Role::Local | crate::seqlang::Role::Output) {
            fixed.push((d.name.clone(), d.grid.lo()));
            fixed.push((primed(&d.name), d.grid.lo()));
        }
    }
    Ok(DomainSpec { blocks, fixed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpProperty {
    Clean,
    RobustlyClean,
    FClean,
}

#[derive(Debug, Clone)]
pub struct WpOpts {
    pub unroll: usize,
    pub check: CheckVcOpts,
}

impl Default for WpOpts {
    fn default() -> Self {
        WpOpts { unroll: DEFAULT_UNROLL, check: CheckVcOpts::default() }
    }
}

/// Everything one property check produced: the merged verdict plus each
/// condition with its report, in checking order.
#[derive(Debug, Serialize)]
pub struct WpOutcome {
    pub verdict: Verdict<Env>,
    pub vcs: Vec<(Vc, VcReport)>,
}

/// Builds the conditions for the property and discharges them on the grid.
/// The first definite falsification wins; otherwise any unresolved state
/// leaves the outcome unknown.
pub fn check_wp(
    p: &Program,
    c: &Contract,
    property: WpProperty,
    opts: &WpOpts,
) -> Result<WpOutcome, VcError> {
    let vcs = match property {
        WpProperty::Clean => vec![vc_clean(p, c, opts.unroll)?],
        WpProperty::RobustlyClean => vc_robustly_clean(p, c, opts.unroll)?.into(),
        WpProperty::FClean => vc_f_clean(p, c, opts.unroll)?,
    };
    let dom = vc_domains(p, c)?;

    let mut checked = Vec::with_capacity(vcs.len());
    let mut verdict: Verdict<Env> = Verdict::Clean;
    for vc in vcs {
        let report = check_validity(&vc.formula, &dom, &opts.check)?;
        match report.verdict {
            VcVerdict::Invalid => {
                if !verdict.is_doped() {
                    verdict = Verdict::Doped {
                        witness: report.counterexamples[0].clone(),
                    };
                }
            }
            VcVerdict::Unknown => {
                if verdict.is_clean() {
                    let (at, why) = report.unresolved.clone().expect("unknown carries a state");
                    verdict = Verdict::Unknown {
                        reason: format!("{why} (first at {})", fmt_env(&at)),
                    };
                }
            }
            VcVerdict::Valid => {}
        }
        checked.push((vc, report));
    }
    Ok(WpOutcome { verdict, vcs: checked })
}

fn fmt_env(env: &Env) -> String {
    let parts: Vec<String> = env.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    parts.join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casestudy;
    use crate::seqlang::parse_program;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    #[test]
    fn copying_programs_are_clean() {
        let p = parse_program(
            "input x : [0, 3] step 1;\noutput y : [0, 3] step 1;\ny := x;\n",
        )
        .unwrap();
        let c = Contract::from_json("{}").unwrap();
        let out = check_wp(&p, &c, WpProperty::Clean, &WpOpts::default()).unwrap();
        assert!(out.verdict.is_clean());
    }

    #[test]
    fn emission_control_robust_conditions_hold() {
        let p = casestudy::build_seq_ec();
        let c = casestudy::seq_robust_contract();
        let out = check_wp(&p, &c, WpProperty::RobustlyClean, &WpOpts::default()).unwrap();
        assert!(out.verdict.is_clean(), "{:?}", out.verdict);
        assert_eq!(out.vcs.len(), 2);
        assert!(out.vcs.iter().all(|(_, r)| r.verdict == VcVerdict::Valid));
    }

    #[test]
    fn alternative_control_fails_the_forward_robust_condition() {
        let p = casestudy::build_seq_aec();
        let c = casestudy::seq_robust_contract();
        let out = check_wp(&p, &c, WpProperty::RobustlyClean, &WpOpts::default()).unwrap();
        let Verdict::Doped { witness } = &out.verdict else {
            panic!("expected a falsifying state, got {:?}", out.verdict);
        };
        // Same state the enumeration checker reports.
        assert_eq!(witness["thrtl"], v("0.1"));
        assert_eq!(witness["thrtl'"], v("1.5"));
        assert_eq!(out.vcs[0].1.verdict, VcVerdict::Invalid);
    }

    #[test]
    fn emission_control_meets_every_deviation_bound() {
        let p = casestudy::build_seq_ec();
        let c = casestudy::seq_fclean_contract();
        let out = check_wp(&p, &c, WpProperty::FClean, &WpOpts::default()).unwrap();
        assert!(out.verdict.is_clean(), "{:?}", out.verdict);
        // One condition per realizable half-distance: 0, 0.05, ..., 0.95.
        assert_eq!(out.vcs.len(), 20);
    }

    #[test]
    fn alternative_control_violates_a_deviation_bound_at_one_and_one_point_five() {
        let p = casestudy::build_seq_aec();
        let c = casestudy::seq_fclean_contract();
        let opts = WpOpts {
            check: CheckVcOpts { max_counterexamples: usize::MAX, ..Default::default() },
            ..Default::default()
        };
        let out = check_wp(&p, &c, WpProperty::FClean, &opts).unwrap();
        assert!(out.verdict.is_doped());

        let quarter = out
            .vcs
            .iter()
            .find(|(vc, _)| vc.y == Some(v("0.25")))
            .expect("the 0.25 bound is realizable");
        assert_eq!(quarter.1.verdict, VcVerdict::Invalid);
        assert!(
            quarter
                .1
                .counterexamples
                .iter()
                .any(|ce| ce["thrtl"] == v("1") && ce["thrtl'"] == v("1.5")),
            "throttle 1 against 1.5 falsifies the 0.25 bound"
        );
    }

    #[test]
    fn printer_conditions_agree_with_the_enumeration_checker() {
        for printer in [
            casestudy::Printer::General,
            casestudy::Printer::Doped,
            casestudy::Printer::Extended,
        ] {
            let p = casestudy::build_printer(printer);
            for strict in [false, true] {
                let c = casestudy::printer_contract(strict);
                let wp_out =
                    check_wp(&p, &c, WpProperty::Clean, &WpOpts::default()).unwrap();
                let enum_out = crate::seqcheck::check_clean(
                    &p,
                    &c,
                    &crate::seqcheck::CheckOpts::default(),
                )
                .unwrap();
                assert_eq!(
                    wp_out.verdict.outcome(),
                    enum_out.verdict.outcome(),
                    "{printer:?} strict_docs={strict}"
                );
            }
        }
    }

    #[test]
    fn guarded_divergence_stays_unknown_but_constant_divergence_is_vacuous() {
        let c = Contract::from_json("{}").unwrap();

        let stuck = parse_program(
            "input x : [0, 1] step 1;\noutput y : [0, 1] step 1;\n\
             while x = 0 { skip; }\ny := x;\n",
        )
        .unwrap();
        let out = check_wp(&stuck, &c, WpProperty::Clean, &WpOpts::default()).unwrap();
        assert!(out.verdict.is_unknown(), "{:?}", out.verdict);

        let always = parse_program(
            "input x : [0, 1] step 1;\noutput y : [0, 1] step 1;\n\
             while true { skip; }\n",
        )
        .unwrap();
        let out = check_wp(&always, &c, WpProperty::Clean, &WpOpts::default()).unwrap();
        assert!(out.verdict.is_clean(), "termination guard makes it vacuous");
    }

    #[test]
    fn composed_conditions_mention_only_program_variables() {
        let p = casestudy::build_seq_ec();
        let c = casestudy::seq_robust_contract();
        let [fwd, rev] = vc_robustly_clean(&p, &c, DEFAULT_UNROLL).unwrap();
        let mut allowed = std::collections::BTreeSet::new();
        for d in &p.decls {
            allowed.insert(d.name.clone());
            allowed.insert(super::primed(&d.name));
        }
        for vc in [&fwd, &rev] {
            let mut seen = std::collections::BTreeSet::new();
            collect_pred_vars(&vc.formula, &mut seen);
            assert!(seen.is_subset(&allowed), "stray variables: {:?}", {
                let mut s = seen;
                s.retain(|n| !allowed.contains(n));
                s
            });
        }
    }

    fn collect_expr_vars(e: &Expr, out: &mut std::collections::BTreeSet<String>) {
        match e {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) | Expr::Abs(a) | Expr::Pow(a, _) => collect_expr_vars(a, out),
            Expr::Bin { lhs, rhs, .. } => {
                collect_expr_vars(lhs, out);
                collect_expr_vars(rhs, out);
            }
            Expr::Snap { arg, .. } | Expr::FApp { arg, .. } => collect_expr_vars(arg, out),
            Expr::Dist { pairs, .. } => {
                for (a, b) in pairs {
                    collect_expr_vars(a, out);
                    collect_expr_vars(b, out);
                }
            }
        }
    }

    fn collect_pred_vars(p: &Pred, out: &mut std::collections::BTreeSet<String>) {
        match p {
            Pred::Bool(_) => {}
            Pred::Cmp { lhs, rhs, .. } => {
                collect_expr_vars(lhs, out);
                collect_expr_vars(rhs, out);
            }
            Pred::InInterval { expr, .. } => collect_expr_vars(expr, out),
            Pred::Not(a) => collect_pred_vars(a, out),
            Pred::And(a, b) | Pred::Or(a, b) | Pred::Implies(a, b) => {
                collect_pred_vars(a, out);
                collect_pred_vars(b, out);
            }
            Pred::LoopBound { disj, term } => {
                collect_pred_vars(disj, out);
                collect_pred_vars(term, out);
            }
        }
    }
}
