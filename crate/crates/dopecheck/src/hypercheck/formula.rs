//! Trace formulas: a quantifier prefix over runs of one model and a body
//! built from indexed state predicates, cross-run comparison atoms and
//! temporal operators.
//!
//! Comparison atoms speak about one position of several runs at once, so a
//! body is evaluated against an assignment of runs to trace variables. The
//! binding-time trick of the checkers is that every atom carries the value
//! distances and bounds it compares with, which keeps a formula
//! self-contained: checking needs the formula and the model, nothing else.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::contracts::{BoundFn, Contract, Distance};
use crate::reactive::TransitionSystem;
use crate::seqlang::{eval_pred, Env, Pred, Role, TemporalPred};
use crate::value::Value;

use super::{HyperError, Property};

/// How a trace variable is quantified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceQuant {
    ForAll,
    Exists,
}

impl fmt::Display for TraceQuant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceQuant::ForAll => write!(f, "forall"),
            TraceQuant::Exists => write!(f, "exists"),
        }
    }
}

/// An atom, true or false at one position of an assignment of runs.
///
/// Distance atoms compare the current input (output) valuations of two runs
/// under a value distance, lifted over the variables by max. `ParamsEq`
/// exists for shape fidelity with the sequential definitions; models carry
/// no parameter variables, so it always holds.
#[derive(Debug, Clone, PartialEq)]
pub enum HAtom {
    Holds { on: String, pred: Pred },
    ParamsEq { left: String, right: String },
    InputsEq { left: String, right: String },
    OutputsEq { left: String, right: String },
    InDistLe { left: String, right: String, dist: Distance, kappa: Value },
    OutDistLe { left: String, right: String, dist: Distance, kappa: Value },
    /// Output distance bounded by `f` of the input distance, with the output
    /// and input pairs possibly taken from different runs.
    OutDistLeF {
        out_left: String,
        out_right: String,
        in_left: String,
        in_right: String,
        d_out: Distance,
        d_in: Distance,
        f: BoundFn,
    },
}

impl HAtom {
    pub fn holds(on: impl Into<String>, pred: Pred) -> HAtom {
        HAtom::Holds { on: on.into(), pred }
    }

    pub fn params_eq(left: impl Into<String>, right: impl Into<String>) -> HAtom {
        HAtom::ParamsEq { left: left.into(), right: right.into() }
    }

    pub fn inputs_eq(left: impl Into<String>, right: impl Into<String>) -> HAtom {
        HAtom::InputsEq { left: left.into(), right: right.into() }
    }

    pub fn outputs_eq(left: impl Into<String>, right: impl Into<String>) -> HAtom {
        HAtom::OutputsEq { left: left.into(), right: right.into() }
    }

    pub fn in_dist_le(
        left: impl Into<String>,
        right: impl Into<String>,
        dist: Distance,
        kappa: Value,
    ) -> HAtom {
        HAtom::InDistLe { left: left.into(), right: right.into(), dist, kappa }
    }

    pub fn out_dist_le(
        left: impl Into<String>,
        right: impl Into<String>,
        dist: Distance,
        kappa: Value,
    ) -> HAtom {
        HAtom::OutDistLe { left: left.into(), right: right.into(), dist, kappa }
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        match self {
            HAtom::Holds { on, .. } => {
                out.insert(on.as_str());
            }
            HAtom::ParamsEq { left, right }
            | HAtom::InputsEq { left, right }
            | HAtom::OutputsEq { left, right }
            | HAtom::InDistLe { left, right, .. }
            | HAtom::OutDistLe { left, right, .. } => {
                out.insert(left.as_str());
                out.insert(right.as_str());
            }
            HAtom::OutDistLeF { out_left, out_right, in_left, in_right, .. } => {
                out.insert(out_left.as_str());
                out.insert(out_right.as_str());
                out.insert(in_left.as_str());
                out.insert(in_right.as_str());
            }
        }
        out
    }

    /// Truth at one position. `assign` binds trace variables to the state
    /// valuations of their runs at that position.
    pub(crate) fn eval(
        &self,
        roles: &VarRoles,
        assign: &[(&str, &Env)],
    ) -> Result<bool, HyperError> {
        match self {
            HAtom::Holds { on, pred } => Ok(eval_pred(pred, env_for(assign, on)?)?),
            HAtom::ParamsEq { .. } => Ok(true),
            HAtom::InputsEq { left, right } => {
                vals_equal(&roles.inputs, env_for(assign, left)?, env_for(assign, right)?)
            }
            HAtom::OutputsEq { left, right } => {
                vals_equal(&roles.outputs, env_for(assign, left)?, env_for(assign, right)?)
            }
            HAtom::InDistLe { left, right, dist, kappa } => {
                let d = vals_dist(dist, &roles.inputs, env_for(assign, left)?, env_for(assign, right)?)?;
                Ok(d <= *kappa)
            }
            HAtom::OutDistLe { left, right, dist, kappa } => {
                let d =
                    vals_dist(dist, &roles.outputs, env_for(assign, left)?, env_for(assign, right)?)?;
                Ok(d <= *kappa)
            }
            HAtom::OutDistLeF { out_left, out_right, in_left, in_right, d_out, d_in, f } => {
                let din = vals_dist(
                    d_in,
                    &roles.inputs,
                    env_for(assign, in_left)?,
                    env_for(assign, in_right)?,
                )?;
                let dout = vals_dist(
                    d_out,
                    &roles.outputs,
                    env_for(assign, out_left)?,
                    env_for(assign, out_right)?,
                )?;
                Ok(dout <= f.apply(din)?)
            }
        }
    }
}

fn env_for<'a>(assign: &[(&str, &'a Env)], var: &str) -> Result<&'a Env, HyperError> {
    assign
        .iter()
        .find(|(name, _)| *name == var)
        .map(|(_, env)| *env)
        .ok_or_else(|| HyperError::Formula(format!("trace variable {var} is not bound")))
}

fn value_in(env: &Env, name: &str) -> Result<Value, HyperError> {
    env.get(name)
        .copied()
        .ok_or_else(|| HyperError::Formula(format!("{name} is not a variable of the model")))
}

fn vals_equal(names: &[String], a: &Env, b: &Env) -> Result<bool, HyperError> {
    for name in names {
        if value_in(a, name)? != value_in(b, name)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn vals_dist(dist: &Distance, names: &[String], a: &Env, b: &Env) -> Result<Value, HyperError> {
    let mut pairs = Vec::with_capacity(names.len());
    for name in names {
        pairs.push((value_in(a, name)?, value_in(b, name)?));
    }
    Ok(dist.valuation_dist(pairs)?)
}

/// The model's variable names split by role, shared by every atom
/// evaluation against that model.
#[derive(Debug, Clone)]
pub(crate) struct VarRoles {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl VarRoles {
    pub(crate) fn of(ts: &TransitionSystem) -> VarRoles {
        VarRoles {
            inputs: ts
                .vars()
                .iter()
                .filter(|v| v.role == Role::Input)
                .map(|v| v.name.clone())
                .collect(),
            outputs: ts
                .vars()
                .iter()
                .filter(|v| v.role == Role::Output)
                .map(|v| v.name.clone())
                .collect(),
        }
    }
}

/// Body of a trace formula.
#[derive(Debug, Clone, PartialEq)]
pub enum HForm {
    Bool(bool),
    Atom(HAtom),
    Not(Box<HForm>),
    And(Box<HForm>, Box<HForm>),
    Or(Box<HForm>, Box<HForm>),
    Implies(Box<HForm>, Box<HForm>),
    Next(Box<HForm>),
    Globally(Box<HForm>),
    Finally(Box<HForm>),
    Until(Box<HForm>, Box<HForm>),
    WeakUntil(Box<HForm>, Box<HForm>),
}

impl HForm {
    pub const TRUE: HForm = HForm::Bool(true);
    pub const FALSE: HForm = HForm::Bool(false);

    pub fn atom(a: HAtom) -> HForm {
        HForm::Atom(a)
    }

    pub fn negate(f: HForm) -> HForm {
        match f {
            HForm::Bool(b) => HForm::Bool(!b),
            HForm::Not(inner) => *inner,
            f => HForm::Not(Box::new(f)),
        }
    }

    pub fn and(a: HForm, b: HForm) -> HForm {
        match (a, b) {
            (HForm::Bool(true), b) => b,
            (a, HForm::Bool(true)) => a,
            (HForm::Bool(false), _) | (_, HForm::Bool(false)) => HForm::FALSE,
            (a, b) if a == b => a,
            (a, b) => HForm::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn or(a: HForm, b: HForm) -> HForm {
        match (a, b) {
            (HForm::Bool(false), b) => b,
            (a, HForm::Bool(false)) => a,
            (HForm::Bool(true), _) | (_, HForm::Bool(true)) => HForm::TRUE,
            (a, b) if a == b => a,
            (a, b) => HForm::Or(Box::new(a), Box::new(b)),
        }
    }

    pub fn implies(a: HForm, b: HForm) -> HForm {
        match (a, b) {
            (HForm::Bool(true), b) => b,
            (HForm::Bool(false), _) => HForm::TRUE,
            (_, HForm::Bool(true)) => HForm::TRUE,
            (a, HForm::Bool(false)) => HForm::negate(a),
            (a, b) => HForm::Implies(Box::new(a), Box::new(b)),
        }
    }

    pub fn next(f: HForm) -> HForm {
        HForm::Next(Box::new(f))
    }

    pub fn globally(f: HForm) -> HForm {
        match f {
            HForm::Bool(b) => HForm::Bool(b),
            f => HForm::Globally(Box::new(f)),
        }
    }

    pub fn finally(f: HForm) -> HForm {
        match f {
            HForm::Bool(b) => HForm::Bool(b),
            f => HForm::Finally(Box::new(f)),
        }
    }

    pub fn until(a: HForm, b: HForm) -> HForm {
        HForm::Until(Box::new(a), Box::new(b))
    }

    pub fn weak_until(a: HForm, b: HForm) -> HForm {
        HForm::WeakUntil(Box::new(a), Box::new(b))
    }

    pub fn all(forms: impl IntoIterator<Item = HForm>) -> HForm {
        forms.into_iter().fold(HForm::TRUE, HForm::and)
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            HForm::Bool(_) => {}
            HForm::Atom(a) => out.extend(a.vars()),
            HForm::Not(f) | HForm::Next(f) | HForm::Globally(f) | HForm::Finally(f) => {
                f.collect_vars(out)
            }
            HForm::And(a, b)
            | HForm::Or(a, b)
            | HForm::Implies(a, b)
            | HForm::Until(a, b)
            | HForm::WeakUntil(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// No temporal operators: the formula speaks about one position only.
    pub fn is_instantaneous(&self) -> bool {
        match self {
            HForm::Bool(_) | HForm::Atom(_) => true,
            HForm::Not(f) => f.is_instantaneous(),
            HForm::And(a, b) | HForm::Or(a, b) | HForm::Implies(a, b) => {
                a.is_instantaneous() && b.is_instantaneous()
            }
            HForm::Next(_)
            | HForm::Globally(_)
            | HForm::Finally(_)
            | HForm::Until(..)
            | HForm::WeakUntil(..) => false,
        }
    }

    /// Truth of an instantaneous formula at one position.
    pub(crate) fn eval_inst(
        &self,
        roles: &VarRoles,
        assign: &[(&str, &Env)],
    ) -> Result<bool, HyperError> {
        match self {
            HForm::Bool(b) => Ok(*b),
            HForm::Atom(a) => a.eval(roles, assign),
            HForm::Not(f) => Ok(!f.eval_inst(roles, assign)?),
            HForm::And(a, b) => Ok(a.eval_inst(roles, assign)? && b.eval_inst(roles, assign)?),
            HForm::Or(a, b) => Ok(a.eval_inst(roles, assign)? || b.eval_inst(roles, assign)?),
            HForm::Implies(a, b) => {
                Ok(!a.eval_inst(roles, assign)? || b.eval_inst(roles, assign)?)
            }
            _ => Err(HyperError::Formula(format!(
                "{self} is temporal and has no single-position truth value"
            ))),
        }
    }

    /// Checks that the formula stays in the fragment whose violations are
    /// finite-prefix events: negation only under instantaneous formulas,
    /// weak until with an instantaneous trigger, and no until or finally.
    /// Those two live in the bounded oracle and the lasso evaluator, where
    /// liveness can be decided.
    pub(crate) fn safety_fragment(&self) -> Result<(), HyperError> {
        match self {
            HForm::Bool(_) | HForm::Atom(_) => Ok(()),
            HForm::Not(f) => {
                if f.is_instantaneous() {
                    Ok(())
                } else {
                    Err(HyperError::Unsupported(format!(
                        "negation of the temporal formula {f} is not a safety obligation"
                    )))
                }
            }
            HForm::And(a, b) | HForm::Or(a, b) => {
                a.safety_fragment()?;
                b.safety_fragment()
            }
            HForm::Implies(a, b) => {
                if !a.is_instantaneous() {
                    return Err(HyperError::Unsupported(format!(
                        "the implication guard {a} must be instantaneous"
                    )));
                }
                b.safety_fragment()
            }
            HForm::Next(f) | HForm::Globally(f) => f.safety_fragment(),
            HForm::WeakUntil(a, b) => {
                if !b.is_instantaneous() {
                    return Err(HyperError::Unsupported(format!(
                        "the release trigger {b} of a weak until must be instantaneous"
                    )));
                }
                a.safety_fragment()
            }
            HForm::Finally(_) | HForm::Until(..) => Err(HyperError::Unsupported(format!(
                "{self} promises an event; only the bounded oracle and the lasso evaluator \
                 handle liveness"
            ))),
        }
    }
}

fn prec(f: &HForm) -> u8 {
    match f {
        HForm::Until(..) | HForm::WeakUntil(..) => 0,
        HForm::Implies(..) => 1,
        HForm::Or(..) => 2,
        HForm::And(..) => 3,
        _ => 5,
    }
}

fn fmt_hform(f: &HForm, min_prec: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(f);
    let parens = p < min_prec;
    if parens {
        write!(out, "(")?;
    }
    match f {
        HForm::Bool(b) => write!(out, "{b}")?,
        HForm::Atom(a) => write!(out, "{a}")?,
        HForm::Not(inner) => write!(out, "!({inner})")?,
        HForm::Next(inner) => write!(out, "X({inner})")?,
        HForm::Globally(inner) => write!(out, "G({inner})")?,
        HForm::Finally(inner) => write!(out, "F({inner})")?,
        HForm::And(a, b) => {
            fmt_hform(a, p, out)?;
            write!(out, " && ")?;
            fmt_hform(b, p + 1, out)?;
        }
        HForm::Or(a, b) => {
            fmt_hform(a, p, out)?;
            write!(out, " || ")?;
            fmt_hform(b, p + 1, out)?;
        }
        HForm::Implies(a, b) => {
            fmt_hform(a, p + 1, out)?;
            write!(out, " -> ")?;
            fmt_hform(b, p, out)?;
        }
        HForm::Until(a, b) => write!(out, "({a}) U ({b})")?,
        HForm::WeakUntil(a, b) => write!(out, "({a}) W ({b})")?,
    }
    if parens {
        write!(out, ")")?;
    }
    Ok(())
}

impl fmt::Display for HForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_hform(self, 0, f)
    }
}

impl fmt::Display for HAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HAtom::Holds { on, pred } => write!(f, "({pred})@{on}"),
            HAtom::ParamsEq { left, right } => write!(f, "param[{left}] = param[{right}]"),
            HAtom::InputsEq { left, right } => write!(f, "in[{left}] = in[{right}]"),
            HAtom::OutputsEq { left, right } => write!(f, "out[{left}] = out[{right}]"),
            HAtom::InDistLe { left, right, kappa, .. } => {
                write!(f, "dIn[{left}, {right}] <= {kappa}")
            }
            HAtom::OutDistLe { left, right, kappa, .. } => {
                write!(f, "dOut[{left}, {right}] <= {kappa}")
            }
            HAtom::OutDistLeF { out_left, out_right, in_left, in_right, .. } => {
                write!(f, "dOut[{out_left}, {out_right}] <= f(dIn[{in_left}, {in_right}])")
            }
        }
    }
}

/// A quantifier prefix over runs and a body relating them. At most three
/// trace variables, and the body may only mention bound ones.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperFormula {
    prefix: Vec<(TraceQuant, String)>,
    body: HForm,
}

impl HyperFormula {
    pub fn new(
        prefix: Vec<(TraceQuant, impl Into<String>)>,
        body: HForm,
    ) -> Result<HyperFormula, HyperError> {
        let prefix: Vec<(TraceQuant, String)> =
            prefix.into_iter().map(|(q, n)| (q, n.into())).collect();
        if prefix.is_empty() || prefix.len() > 3 {
            return Err(HyperError::Formula(format!(
                "a prefix of {} trace variables is out of the supported range 1 to 3",
                prefix.len()
            )));
        }
        let mut names = BTreeSet::new();
        for (_, name) in &prefix {
            if !names.insert(name.as_str()) {
                return Err(HyperError::Formula(format!(
                    "trace variable {name} is quantified twice"
                )));
            }
        }
        if let Some(free) = body.vars().iter().find(|v| !names.contains(*v)) {
            return Err(HyperError::Formula(format!(
                "the body mentions {free}, which the prefix does not bind"
            )));
        }
        Ok(HyperFormula { prefix, body })
    }

    pub fn prefix(&self) -> &[(TraceQuant, String)] {
        &self.prefix
    }

    pub fn body(&self) -> &HForm {
        &self.body
    }

    pub fn var(&self, i: usize) -> &str {
        &self.prefix[i].1
    }
}

impl fmt::Display for HyperFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (q, name) in &self.prefix {
            write!(f, "{q} {name}. ")?;
        }
        write!(f, "{}", self.body)
    }
}

impl Serialize for HyperFormula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

// ---------------------------------------------------------------------------
// Conversions between single-run temporal predicates and bodies.

/// Lifts a temporal input predicate to a body speaking about one run.
pub(crate) fn temporal_to_hform(t: &TemporalPred, var: &str) -> HForm {
    fn lift(p: &Pred, var: &str) -> HForm {
        match p {
            Pred::Bool(b) => HForm::Bool(*b),
            p => HForm::Atom(HAtom::holds(var, p.clone())),
        }
    }
    match t {
        TemporalPred::Lift(p) => lift(p, var),
        TemporalPred::Globally(p) => HForm::globally(lift(p, var)),
        TemporalPred::Next(inner) => HForm::next(temporal_to_hform(inner, var)),
        TemporalPred::WeakUntil(p, q) => HForm::weak_until(lift(p, var), lift(q, var)),
        TemporalPred::And(a, b) => {
            HForm::and(temporal_to_hform(a, var), temporal_to_hform(b, var))
        }
    }
}

/// Reads a body back as a temporal predicate on a single run, if it has
/// that shape. Inverse of [`temporal_to_hform`] on its image.
pub(crate) fn hform_to_temporal(f: &HForm, var: &str) -> Option<TemporalPred> {
    fn plain(f: &HForm, var: &str) -> Option<Pred> {
        match f {
            HForm::Bool(b) => Some(Pred::Bool(*b)),
            HForm::Atom(HAtom::Holds { on, pred }) if on == var => Some(pred.clone()),
            _ => None,
        }
    }
    match f {
        HForm::Bool(b) => Some(TemporalPred::Lift(Pred::Bool(*b))),
        HForm::Atom(HAtom::Holds { on, pred }) if on == var => {
            Some(TemporalPred::Lift(pred.clone()))
        }
        HForm::Globally(inner) => plain(inner, var).map(TemporalPred::Globally),
        HForm::Next(inner) => hform_to_temporal(inner, var).map(|t| TemporalPred::Next(Box::new(t))),
        HForm::WeakUntil(a, b) => match (plain(a, var), plain(b, var)) {
            (Some(p), Some(q)) => Some(TemporalPred::WeakUntil(p, q)),
            _ => None,
        },
        HForm::And(a, b) => match (hform_to_temporal(a, var), hform_to_temporal(b, var)) {
            (Some(x), Some(y)) => Some(TemporalPred::And(Box::new(x), Box::new(y))),
            _ => None,
        },
        _ => None,
    }
}


// ---------------------------------------------------------------------------
// Builders for the formula shapes the checkers work with.

/// The per-event value distance inside a past-forgetful trace distance.
/// Reactive checks compare one position at a time, so that is the only
/// trace structure the pairwise and exact checkers accept.
pub(crate) fn event_base(d: &Distance, what: &str) -> Result<Distance, HyperError> {
    match d {
        Distance::PastForgetful { base } => match base.as_ref() {
            b @ (Distance::AbsDiff | Distance::Discrete { .. } | Distance::Table { .. }) => {
                Ok(b.clone())
            }
            other => Err(HyperError::Unsupported(format!(
                "the {what} distance nests further trace structure under its past-forgetful \
                 lift ({other:?})"
            ))),
        },
        Distance::DNew { .. } => Err(HyperError::Unsupported(format!(
            "the three-valued {what} distance is only supported by the bounded oracle"
        ))),
        other => Err(HyperError::Unsupported(format!(
            "the {what} distance must be past-forgetful for reactive checking, got {other:?}"
        ))),
    }
}

fn robust_pieces(c: &Contract) -> Result<(Distance, Value, Distance, Value), HyperError> {
    Ok((
        event_base(&c.d_in(), "input")?,
        c.require_kappa_in()?,
        event_base(&c.d_out(), "output")?,
        c.require_kappa_out()?,
    ))
}

fn fclean_pieces(c: &Contract) -> Result<(Distance, Distance, BoundFn), HyperError> {
    Ok((event_base(&c.d_in(), "input")?, event_base(&c.d_out(), "output")?, c.require_f()?.clone()))
}

/// The tracking obligation placed on a pair of runs: `left`'s outputs stay
/// close to `right`'s in the sense of the property, with closeness released
/// once the inputs drift too far apart (for robust cleanness) or rebounded
/// by `f` of the input distance at every position (for f-cleanness). For
/// plain cleanness the outputs must agree until the inputs first differ.
/// The release and the bound compare the inputs of `in_left` and `in_right`,
/// which may differ from the tracked pair when a partner run is locked to
/// another run's inputs.
fn tracking_body(
    c: &Contract,
    prop: Property,
    left: &str,
    right: &str,
    in_left: &str,
    in_right: &str,
) -> Result<HForm, HyperError> {
    Ok(match prop {
        Property::Clean => HForm::weak_until(
            HForm::atom(HAtom::outputs_eq(left, right)),
            HForm::negate(HForm::atom(HAtom::inputs_eq(in_left, in_right))),
        ),
        Property::Robust => {
            let (d_in, kappa_in, d_out, kappa_out) = robust_pieces(c)?;
            HForm::weak_until(
                HForm::atom(HAtom::out_dist_le(left, right, d_out, kappa_out)),
                HForm::negate(HForm::atom(HAtom::in_dist_le(in_left, in_right, d_in, kappa_in))),
            )
        }
        Property::FClean => {
            let (d_in, d_out, f) = fclean_pieces(c)?;
            HForm::globally(HForm::atom(HAtom::OutDistLeF {
                out_left: left.into(),
                out_right: right.into(),
                in_left: in_left.into(),
                in_right: in_right.into(),
                d_out,
                d_in,
                f,
            }))
        }
    })
}

/// The strengthened pairwise formula: every comparison run must track every
/// standard run directly, with no partner to mediate. Satisfaction implies
/// the property; violation alone does not witness doping.
pub fn strengthened_formula(c: &Contract, prop: Property) -> Result<HyperFormula, HyperError> {
    let body = HForm::implies(
        temporal_to_hform(&c.stdin, "t1"),
        tracking_body(c, prop, "t1", "t2", "t1", "t2")?,
    );
    HyperFormula::new(vec![(TraceQuant::ForAll, "t1"), (TraceQuant::ForAll, "t2")], body)
}

/// The exact characterisations with one trace alternation. Robust and
/// f-cleanness need a pair of formulas, one per direction: a partner locked
/// to the comparison run's inputs must track the standard run, and a partner
/// locked to the standard run's inputs must be tracked by the comparison
/// run. Plain cleanness is self-symmetric and needs one formula.
pub fn exact_formulas(c: &Contract, prop: Property) -> Result<Vec<HyperFormula>, HyperError> {
    let stdin = temporal_to_hform(&c.stdin, "t1");
    if prop == Property::Clean {
        let body = HForm::implies(
            stdin,
            HForm::all([
                HForm::atom(HAtom::params_eq("t2", "t2'")),
                HForm::globally(HForm::atom(HAtom::inputs_eq("t1", "t2'"))),
                HForm::globally(HForm::atom(HAtom::outputs_eq("t1", "t2'"))),
            ]),
        );
        return Ok(vec![HyperFormula::new(
            vec![
                (TraceQuant::ForAll, "t1"),
                (TraceQuant::ForAll, "t2"),
                (TraceQuant::Exists, "t2'"),
            ],
            body,
        )?]);
    }
    let deviant_side = HForm::implies(
        stdin.clone(),
        HForm::all([
            HForm::atom(HAtom::params_eq("t2", "t2'")),
            HForm::globally(HForm::atom(HAtom::inputs_eq("t2", "t2'"))),
            tracking_body(c, prop, "t1", "t2'", "t1", "t2'")?,
        ]),
    );
    let standard_side = HForm::implies(
        stdin,
        HForm::all([
            HForm::atom(HAtom::params_eq("t1", "t1'")),
            HForm::globally(HForm::atom(HAtom::inputs_eq("t1", "t1'"))),
            tracking_body(c, prop, "t1'", "t2", "t1'", "t2")?,
        ]),
    );
    Ok(vec![
        HyperFormula::new(
            vec![
                (TraceQuant::ForAll, "t1"),
                (TraceQuant::ForAll, "t2"),
                (TraceQuant::Exists, "t2'"),
            ],
            deviant_side,
        )?,
        HyperFormula::new(
            vec![
                (TraceQuant::ForAll, "t1"),
                (TraceQuant::ForAll, "t2"),
                (TraceQuant::Exists, "t1'"),
            ],
            standard_side,
        )?,
    ])
}

fn const_input_pred(input: &Env) -> Pred {
    Pred::all(
        input
            .iter()
            .map(|(name, v)| Pred::cmp(crate::seqlang::ast::CmpOp::Eq, crate::seqlang::ast::Expr::var(name.clone()), crate::seqlang::ast::Expr::Const(*v))),
    )
}

/// The formulas behind one negated two-trace instance at constant inputs
/// `a` and `b`: two universal formulas saying that no partner can mediate
/// between the constant runs, one per tracking direction, and the
/// existential guarantee that such a pair of runs exists at all. All three
/// satisfied together witness a violation of the property.
pub struct NegationFormulas {
    pub deviant_side: HyperFormula,
    pub standard_side: HyperFormula,
    pub guarantee: HyperFormula,
}

pub fn negation_formulas(
    c: &Contract,
    prop: Property,
    a: &Env,
    b: &Env,
) -> Result<NegationFormulas, HyperError> {
    let on_a = HForm::atom(HAtom::holds("t1", const_input_pred(a)));
    let on_b = HForm::atom(HAtom::holds("t2", const_input_pred(b)));
    let pinned = HForm::globally(HForm::and(on_a.clone(), on_b.clone()));
    let stdin = temporal_to_hform(&c.stdin, "t1");
    let deviant = HForm::implies(
        pinned.clone(),
        HForm::negate(HForm::implies(
            stdin.clone(),
            HForm::and(
                HForm::globally(HForm::atom(HAtom::inputs_eq("t2", "t2'"))),
                tracking_body(c, prop, "t1", "t2'", "t1", "t2'")?,
            ),
        )),
    );
    let standard = HForm::implies(
        pinned,
        HForm::negate(HForm::implies(
            stdin,
            HForm::and(
                HForm::globally(HForm::atom(HAtom::inputs_eq("t1", "t1'"))),
                tracking_body(c, prop, "t1'", "t2", "t1'", "t2")?,
            ),
        )),
    );
    Ok(NegationFormulas {
        deviant_side: HyperFormula::new(
            vec![
                (TraceQuant::ForAll, "t1"),
                (TraceQuant::ForAll, "t2"),
                (TraceQuant::ForAll, "t2'"),
            ],
            deviant,
        )?,
        standard_side: HyperFormula::new(
            vec![
                (TraceQuant::ForAll, "t1"),
                (TraceQuant::ForAll, "t2"),
                (TraceQuant::ForAll, "t1'"),
            ],
            standard,
        )?,
        guarantee: HyperFormula::new(
            vec![(TraceQuant::Exists, "t1"), (TraceQuant::Exists, "t2")],
            HForm::globally(HForm::and(on_a, on_b)),
        )?,
    })
}

// ---------------------------------------------------------------------------
// Expansion of comparison atoms into plain boolean combinations.

fn grid_valuations(specs: &[&crate::reactive::VarSpec]) -> Vec<Env> {
    let mut envs = vec![Env::new()];
    for spec in specs {
        let mut next = Vec::with_capacity(envs.len() * spec.grid.count());
        for v in spec.grid.iter() {
            for env in &envs {
                let mut env = env.clone();
                env.insert(spec.name.clone(), v);
                next.push(env);
            }
        }
        envs = next;
    }
    envs
}

fn env_conj(env: &Env) -> Pred {
    Pred::all(env.iter().map(|(name, v)| {
        Pred::cmp(
            crate::seqlang::ast::CmpOp::Eq,
            crate::seqlang::ast::Expr::var(name.clone()),
            crate::seqlang::ast::Expr::Const(*v),
        )
    }))
}

const MAX_EXPANSION: usize = 65_536;

/// Rewrites a comparison atom into a disjunction over the finite variable
/// grids: one disjunct per tuple of valuations within the compared bound,
/// each pinning the runs to their valuations with plain state predicates.
/// Agrees with direct evaluation of the atom on every state tuple, which is
/// what makes the comparison atoms mere abbreviations.
pub fn expand_comparison(atom: &HAtom, ts: &TransitionSystem) -> Result<HForm, HyperError> {
    let ins: Vec<&crate::reactive::VarSpec> =
        ts.vars().iter().filter(|v| v.role == Role::Input).collect();
    let outs: Vec<&crate::reactive::VarSpec> =
        ts.vars().iter().filter(|v| v.role == Role::Output).collect();
    let pair_expansion = |specs: &[&crate::reactive::VarSpec],
                          left: &str,
                          right: &str,
                          within: &mut dyn FnMut(&Env, &Env) -> Result<bool, HyperError>|
     -> Result<HForm, HyperError> {
        let vals = grid_valuations(specs);
        if vals.len() * vals.len() > MAX_EXPANSION {
            return Err(HyperError::Unsupported(format!(
                "expanding over {} valuation pairs is past the limit of {MAX_EXPANSION}",
                vals.len() * vals.len()
            )));
        }
        let mut disjuncts = Vec::new();
        for u in &vals {
            for v in &vals {
                if within(u, v)? {
                    disjuncts.push(HForm::and(
                        HForm::atom(HAtom::holds(left, env_conj(u))),
                        HForm::atom(HAtom::holds(right, env_conj(v))),
                    ));
                }
            }
        }
        Ok(disjuncts.into_iter().fold(HForm::FALSE, HForm::or))
    };
    match atom {
        HAtom::InDistLe { left, right, dist, kappa } => {
            let names: Vec<String> = ins.iter().map(|v| v.name.clone()).collect();
            pair_expansion(&ins, left, right, &mut |u, v| {
                Ok(vals_dist(dist, &names, u, v)? <= *kappa)
            })
        }
        HAtom::OutDistLe { left, right, dist, kappa } => {
            let names: Vec<String> = outs.iter().map(|v| v.name.clone()).collect();
            pair_expansion(&outs, left, right, &mut |u, v| {
                Ok(vals_dist(dist, &names, u, v)? <= *kappa)
            })
        }
        HAtom::OutDistLeF { out_left, out_right, in_left, in_right, d_out, d_in, f } => {
            let in_names: Vec<String> = ins.iter().map(|v| v.name.clone()).collect();
            let out_names: Vec<String> = outs.iter().map(|v| v.name.clone()).collect();
            let in_vals = grid_valuations(&ins);
            let out_vals = grid_valuations(&outs);
            let combos = in_vals.len() * in_vals.len() * out_vals.len() * out_vals.len();
            if combos > MAX_EXPANSION {
                return Err(HyperError::Unsupported(format!(
                    "expanding over {combos} valuation tuples is past the limit of {MAX_EXPANSION}"
                )));
            }
            let mut disjuncts = Vec::new();
            for i in &in_vals {
                for j in &in_vals {
                    let bound = f.apply(vals_dist(d_in, &in_names, i, j)?)?;
                    for u in &out_vals {
                        for v in &out_vals {
                            if vals_dist(d_out, &out_names, u, v)? <= bound {
                                disjuncts.push(HForm::all([
                                    HForm::atom(HAtom::holds(in_left.clone(), env_conj(i))),
                                    HForm::atom(HAtom::holds(in_right.clone(), env_conj(j))),
                                    HForm::atom(HAtom::holds(out_left.clone(), env_conj(u))),
                                    HForm::atom(HAtom::holds(out_right.clone(), env_conj(v))),
                                ]));
                            }
                        }
                    }
                }
            }
            Ok(disjuncts.into_iter().fold(HForm::FALSE, HForm::or))
        }
        other => Err(HyperError::Unsupported(format!(
            "{other} is not a comparison atom and has no grid expansion"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reactive::{ModelBuilder, VarSpec};
    use crate::value::Grid;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    fn tiny_model() -> TransitionSystem {
        let mut b = ModelBuilder::new(
            "tiny",
            vec![
                VarSpec::new("i", Role::Input, Grid::new(v("0"), v("2"), v("1")).unwrap()),
                VarSpec::new("o", Role::Output, Grid::new(v("0"), v("20"), v("10")).unwrap()),
            ],
        )
        .unwrap();
        let states: Vec<_> = [("0", "0"), ("1", "10"), ("2", "20"), ("1", "0")]
            .iter()
            .map(|(i, o)| b.state(&[("i", v(i)), ("o", v(o))]).unwrap())
            .collect();
        for &s in &states {
            b.mark_initial(s);
            for &t in &states {
                b.edge(s, t);
            }
        }
        b.finish().unwrap()
    }

    fn robust_contract() -> Contract {
        Contract {
            d_in: Some(Distance::PastForgetful { base: Box::new(Distance::AbsDiff) }),
            d_out: Some(Distance::PastForgetful { base: Box::new(Distance::AbsDiff) }),
            kappa_in: Some(v("1")),
            kappa_out: Some(v("10")),
            ..Contract::default()
        }
    }

    #[test]
    fn prefix_validation() {
        let body = HForm::atom(HAtom::inputs_eq("a", "b"));
        assert!(HyperFormula::new(vec![(TraceQuant::ForAll, "a")], body.clone()).is_err());
        assert!(HyperFormula::new(
            vec![(TraceQuant::ForAll, "a"), (TraceQuant::ForAll, "a")],
            body.clone()
        )
        .is_err());
        let four = vec![
            (TraceQuant::ForAll, "a"),
            (TraceQuant::ForAll, "b"),
            (TraceQuant::ForAll, "c"),
            (TraceQuant::ForAll, "d"),
        ];
        assert!(HyperFormula::new(four, HForm::TRUE).is_err());
        assert!(HyperFormula::new(
            vec![(TraceQuant::ForAll, "a"), (TraceQuant::ForAll, "b")],
            body
        )
        .is_ok());
    }

    #[test]
    fn display_is_parenthesized_unambiguously() {
        let a = HForm::atom(HAtom::inputs_eq("x", "y"));
        let b = HForm::atom(HAtom::outputs_eq("x", "y"));
        let c = HForm::atom(HAtom::params_eq("x", "y"));
        let left = HForm::and(a.clone(), HForm::or(b.clone(), c.clone()));
        let right = HForm::or(HForm::and(a, b), c);
        assert_ne!(left.to_string(), right.to_string());
    }

    #[test]
    fn temporal_round_trip() {
        let t = crate::seqlang::parse_temporal("G(t in (0, 1])").unwrap();
        let f = temporal_to_hform(&t, "t1");
        assert_eq!(hform_to_temporal(&f, "t1"), Some(t.clone()));
        assert_eq!(hform_to_temporal(&f, "t2"), None);
        let w = crate::seqlang::parse_temporal("(x = 1) W (x = 0)").unwrap();
        let fw = temporal_to_hform(&w, "p");
        assert_eq!(hform_to_temporal(&fw, "p"), Some(w));
    }

    #[test]
    fn safety_fragment_lines() {
        let atom = HForm::atom(HAtom::inputs_eq("a", "b"));
        assert!(HForm::globally(atom.clone()).safety_fragment().is_ok());
        assert!(HForm::weak_until(atom.clone(), HForm::negate(atom.clone()))
            .safety_fragment()
            .is_ok());
        assert!(HForm::finally(atom.clone()).safety_fragment().is_err());
        assert!(HForm::until(atom.clone(), atom.clone()).safety_fragment().is_err());
        assert!(HForm::negate(HForm::globally(atom.clone())).safety_fragment().is_err());
        assert!(HForm::weak_until(atom.clone(), HForm::globally(atom.clone()))
            .safety_fragment()
            .is_err());
        assert!(HForm::implies(HForm::globally(atom.clone()), atom).safety_fragment().is_err());
    }

    #[test]
    fn strengthened_shape_per_property() {
        let c = Contract {
            stdin: crate::seqlang::parse_temporal("G(i in (0, 1])").unwrap(),
            f: Some(BoundFn::Affine { slope: v("0.5"), offset: v("0.3") }),
            ..robust_contract()
        };
        let robust = strengthened_formula(&c, Property::Robust).unwrap();
        assert_eq!(
            robust.to_string(),
            "forall t1. forall t2. G((i in (0, 1])@t1) -> \
             ((dOut[t1, t2] <= 10) W (!(dIn[t1, t2] <= 1)))"
        );
        let fclean = strengthened_formula(&c, Property::FClean).unwrap();
        assert_eq!(
            fclean.to_string(),
            "forall t1. forall t2. G((i in (0, 1])@t1) -> G(dOut[t1, t2] <= f(dIn[t1, t2]))"
        );
        let clean = strengthened_formula(&c, Property::Clean).unwrap();
        assert_eq!(
            clean.to_string(),
            "forall t1. forall t2. G((i in (0, 1])@t1) -> \
             ((out[t1] = out[t2]) W (!(in[t1] = in[t2])))"
        );
    }

    #[test]
    fn exact_shapes_come_in_pairs() {
        let c = robust_contract();
        let fs = exact_formulas(&c, Property::Robust).unwrap();
        assert_eq!(fs.len(), 2);
        assert_eq!(
            fs[0].to_string(),
            "forall t1. forall t2. exists t2'. param[t2] = param[t2'] && \
             G(in[t2] = in[t2']) && ((dOut[t1, t2'] <= 10) W (!(dIn[t1, t2'] <= 1)))"
        );
        assert_eq!(
            fs[1].to_string(),
            "forall t1. forall t2. exists t1'. param[t1] = param[t1'] && \
             G(in[t1] = in[t1']) && ((dOut[t1', t2] <= 10) W (!(dIn[t1', t2] <= 1)))"
        );
        let clean = exact_formulas(&c, Property::Clean).unwrap();
        assert_eq!(clean.len(), 1);
        assert_eq!(
            clean[0].to_string(),
            "forall t1. forall t2. exists t2'. param[t2] = param[t2'] && \
             G(in[t1] = in[t2']) && G(out[t1] = out[t2'])"
        );
    }

    #[test]
    fn negation_instance_shapes() {
        let c = robust_contract();
        let a: Env = [("i".to_string(), v("1"))].into_iter().collect();
        let b: Env = [("i".to_string(), v("2"))].into_iter().collect();
        let fs = negation_formulas(&c, Property::Robust, &a, &b).unwrap();
        assert_eq!(
            fs.guarantee.to_string(),
            "exists t1. exists t2. G((i = 1)@t1 && (i = 2)@t2)"
        );
        let d = fs.deviant_side.to_string();
        assert!(d.starts_with("forall t1. forall t2. forall t2'. G((i = 1)@t1 && (i = 2)@t2) -> "));
        assert!(d.contains("!(G(in[t2] = in[t2']) && ((dOut[t1, t2'] <= 10) W"));
        let s = fs.standard_side.to_string();
        assert!(s.contains("G(in[t1] = in[t1'])"));
    }

    #[test]
    fn expansion_agrees_with_direct_evaluation() {
        let ts = tiny_model();
        let roles = VarRoles::of(&ts);
        let atoms = vec![
            HAtom::in_dist_le("t1", "t2", Distance::AbsDiff, v("1")),
            HAtom::out_dist_le("t1", "t2", Distance::Discrete { unequal: Value::Inf }, v("0")),
            HAtom::OutDistLeF {
                out_left: "t1".into(),
                out_right: "t2".into(),
                in_left: "t1".into(),
                in_right: "t2".into(),
                d_out: Distance::AbsDiff,
                d_in: Distance::AbsDiff,
                f: BoundFn::Affine { slope: v("10"), offset: v("0") },
            },
        ];
        for atom in atoms {
            let expanded = expand_comparison(&atom, &ts).unwrap();
            for s1 in 0..ts.states() as u32 {
                for s2 in 0..ts.states() as u32 {
                    let e1 = ts.state_env(s1);
                    let e2 = ts.state_env(s2);
                    let assign = [("t1", &e1), ("t2", &e2)];
                    assert_eq!(
                        atom.eval(&roles, &assign).unwrap(),
                        expanded.eval_inst(&roles, &assign).unwrap(),
                        "atom {atom} disagrees with its expansion at ({s1}, {s2})"
                    );
                }
            }
        }
    }

    #[test]
    fn expansion_rejects_non_comparison_atoms() {
        let ts = tiny_model();
        let atom = HAtom::inputs_eq("t1", "t2");
        assert!(matches!(expand_comparison(&atom, &ts), Err(HyperError::Unsupported(_))));
    }

    #[test]
    fn event_base_unwraps_only_past_forgetful() {
        assert!(event_base(
            &Distance::PastForgetful { base: Box::new(Distance::AbsDiff) },
            "input"
        )
        .is_ok());
        assert!(event_base(&Distance::AbsDiff, "input").is_err());
        let dnew = Distance::DNew {
            base: Box::new(Distance::AbsDiff),
            kappa_in: v("1"),
            stdin: Box::new(TemporalPred::TRUE),
        };
        assert!(event_base(&dnew, "input").is_err());
    }
}
