//! Syntax trees for programs, expressions and predicates, with printers
//! that round-trip through the parser.

use crate::contracts::{BoundFn, Distance};
use crate::value::{Grid, Value};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// What a declared variable is for. Params select the family member,
/// inputs are chosen by the environment, outputs are observable, locals
/// are neither chosen nor observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Param,
    Input,
    Output,
    Local,
}

impl Role {
    pub fn keyword(&self) -> &'static str {
        match self {
            Role::Param => "param",
            Role::Input => "input",
            Role::Output => "output",
            Role::Local => "var",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub name: String,
    pub role: Role,
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub body: Vec<Stmt>,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn vars_with_role(&self, role: Role) -> impl Iterator<Item = &Decl> {
        self.decls.iter().filter(move |d| d.role == role)
    }

    pub fn params(&self) -> impl Iterator<Item = &Decl> {
        self.vars_with_role(Role::Param)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Decl> {
        self.vars_with_role(Role::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Decl> {
        self.vars_with_role(Role::Output)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// `x := e;` with the result snapped onto `x`'s grid.
    Assign { var: String, expr: Expr },
    /// `x :in [lo, hi];` chooses any grid point of `x` in the closed
    /// interval; an interval missing the grid is rescued outward.
    Choose { var: String, lo: Expr, hi: Expr },
    Skip,
    If { cond: Pred, then_branch: Vec<Stmt>, else_branch: Vec<Stmt> },
    While { cond: Pred, body: Vec<Stmt> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Value),
    Var(String),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Bin { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// `e ^ n` with a literal non-negative exponent.
    Pow(Box<Expr>, u32),
    /// Coercion onto a grid. Produced by the verification-condition
    /// builder to mirror assignment snapping; the parser never emits it.
    Snap { grid: Grid, arg: Box<Expr> },
    /// Distance between two expression tuples under a fixed base distance,
    /// lifted by max over the pairs. Verification-layer node.
    Dist { label: String, dist: Box<Distance>, pairs: Vec<(Expr, Expr)> },
    /// A deviation-bound function applied to an argument. Verification-layer
    /// node.
    FApp { f: BoundFn, arg: Box<Expr> },
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    /// Every variable the expression mentions.
    pub fn vars(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(e) | Expr::Abs(e) | Expr::Pow(e, _) => e.collect_vars(out),
            Expr::Bin { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::Snap { arg, .. } => arg.collect_vars(out),
            Expr::Dist { pairs, .. } => {
                for (a, b) in pairs {
                    a.collect_vars(out);
                    b.collect_vars(out);
                }
            }
            Expr::FApp { arg, .. } => arg.collect_vars(out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn eval(&self, a: Value, b: Value) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Le => a <= b,
            CmpOp::Lt => a < b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    Bool(bool),
    Cmp { op: CmpOp, lhs: Expr, rhs: Expr },
    /// `e in [lo, hi]` with independently open or closed endpoints.
    InInterval { expr: Expr, lo: Value, lo_open: bool, hi: Value, hi_open: bool },
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Implies(Box<Pred>, Box<Pred>),
    /// Loop summary from bounded weakest-precondition unrolling: `disj`
    /// underapproximates the states from which the loop establishes the
    /// postcondition, `term` those from which it terminates at all within
    /// the unrolling depth. Three-valued; never produced by the parser.
    LoopBound { disj: Box<Pred>, term: Box<Pred> },
}

impl Pred {
    pub fn negate(p: Pred) -> Pred {
        match p {
            Pred::Bool(b) => Pred::Bool(!b),
            Pred::Not(inner) => *inner,
            p => Pred::Not(Box::new(p)),
        }
    }

    pub fn and(a: Pred, b: Pred) -> Pred {
        match (a, b) {
            (Pred::Bool(true), b) => b,
            (a, Pred::Bool(true)) => a,
            (Pred::Bool(false), _) | (_, Pred::Bool(false)) => Pred::Bool(false),
            (a, b) if a == b => a,
            (a, b) => Pred::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn or(a: Pred, b: Pred) -> Pred {
        match (a, b) {
            (Pred::Bool(false), b) => b,
            (a, Pred::Bool(false)) => a,
            (Pred::Bool(true), _) | (_, Pred::Bool(true)) => Pred::Bool(true),
            (a, b) if a == b => a,
            (a, b) => Pred::Or(Box::new(a), Box::new(b)),
        }
    }

    pub fn implies(a: Pred, b: Pred) -> Pred {
        match (a, b) {
            (Pred::Bool(true), b) => b,
            (Pred::Bool(false), _) => Pred::Bool(true),
            (a, Pred::Bool(false)) => Pred::negate(a),
            (_, Pred::Bool(true)) => Pred::Bool(true),
            (a, b) => Pred::Implies(Box::new(a), Box::new(b)),
        }
    }

    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Pred {
        Pred::Cmp { op, lhs, rhs }
    }

    /// Conjunction of many predicates, dropping `true` units.
    pub fn all(preds: impl IntoIterator<Item = Pred>) -> Pred {
        preds
            .into_iter()
            .fold(Pred::Bool(true), Pred::and)
    }

    /// Every variable the predicate mentions.
    pub fn vars(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            Pred::Bool(_) => {}
            Pred::Cmp { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Pred::InInterval { expr, .. } => expr.collect_vars(out),
            Pred::Not(p) => p.collect_vars(out),
            Pred::And(a, b) | Pred::Or(a, b) | Pred::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Pred::LoopBound { disj, term } => {
                disj.collect_vars(out);
                term.collect_vars(out);
            }
        }
    }
}

/// Temporal layer over predicates, for standard-input specifications on
/// reactive traces. A bare predicate speaks about the current event.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalPred {
    Lift(Pred),
    Globally(Pred),
    Next(Box<TemporalPred>),
    /// `(p) W (q)`: p holds until the first event satisfying q, which need
    /// never come.
    WeakUntil(Pred, Pred),
    And(Box<TemporalPred>, Box<TemporalPred>),
}

impl TemporalPred {
    pub const TRUE: TemporalPred = TemporalPred::Lift(Pred::Bool(true));

    pub fn is_trivially_true(&self) -> bool {
        matches!(self, TemporalPred::Lift(Pred::Bool(true)))
    }

    /// The plain predicate, if this is not genuinely temporal.
    pub fn as_plain(&self) -> Option<&Pred> {
        match self {
            TemporalPred::Lift(p) => Some(p),
            _ => None,
        }
    }

    /// Every variable the predicate mentions.
    pub fn vars(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            TemporalPred::Lift(p) | TemporalPred::Globally(p) => p.collect_vars(out),
            TemporalPred::Next(t) => t.collect_vars(out),
            TemporalPred::WeakUntil(p, q) => {
                p.collect_vars(out);
                q.collect_vars(out);
            }
            TemporalPred::And(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing. Binary operators parenthesize right-nested children of equal
// precedence, so parsing the printed form reproduces the tree exactly.

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin { op: BinOp::Add | BinOp::Sub, .. } => 1,
        Expr::Bin { op: BinOp::Mul | BinOp::Div, .. } => 2,
        Expr::Pow(..) => 3,
        Expr::Neg(_) => 4,
        _ => 5,
    }
}

fn fmt_expr(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let prec = expr_prec(e);
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    match e {
        Expr::Const(v) => write!(f, "{v}")?,
        Expr::Var(name) => write!(f, "{name}")?,
        Expr::Neg(inner) => {
            write!(f, "-")?;
            fmt_expr(inner, 4, f)?;
        }
        Expr::Abs(inner) => {
            write!(f, "abs(")?;
            fmt_expr(inner, 0, f)?;
            write!(f, ")")?;
        }
        Expr::Bin { op, lhs, rhs } => {
            fmt_expr(lhs, prec, f)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(rhs, prec + 1, f)?;
        }
        Expr::Pow(base, exp) => {
            fmt_expr(base, 4, f)?;
            write!(f, " ^ {exp}")?;
        }
        Expr::Snap { grid, arg } => {
            write!(f, "snap(")?;
            fmt_expr(arg, 0, f)?;
            write!(f, ", {grid})")?;
        }
        Expr::Dist { label, pairs, .. } => {
            write!(f, "{label}(")?;
            for (i, (a, b)) in pairs.iter().enumerate() {
                if i > 0 {
                    write!(f, "; ")?;
                }
                fmt_expr(a, 0, f)?;
                write!(f, ", ")?;
                fmt_expr(b, 0, f)?;
            }
            write!(f, ")")?;
        }
        Expr::FApp { arg, .. } => {
            write!(f, "f(")?;
            fmt_expr(arg, 0, f)?;
            write!(f, ")")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, 0, f)
    }
}

fn pred_prec(p: &Pred) -> u8 {
    match p {
        Pred::Implies(..) => 1,
        Pred::Or(..) => 2,
        Pred::And(..) => 3,
        Pred::Not(_) => 4,
        _ => 5,
    }
}

fn fmt_pred(p: &Pred, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let prec = pred_prec(p);
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    match p {
        Pred::Bool(b) => write!(f, "{b}")?,
        Pred::Cmp { op, lhs, rhs } => {
            fmt_expr(lhs, 0, f)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(rhs, 0, f)?;
        }
        Pred::InInterval { expr, lo, lo_open, hi, hi_open } => {
            fmt_expr(expr, 0, f)?;
            write!(
                f,
                " in {}{lo}, {hi}{}",
                if *lo_open { "(" } else { "[" },
                if *hi_open { ")" } else { "]" }
            )?;
        }
        Pred::Not(inner) => {
            write!(f, "!")?;
            fmt_pred(inner, 4, f)?;
        }
        Pred::And(a, b) => {
            fmt_pred(a, prec, f)?;
            write!(f, " && ")?;
            fmt_pred(b, prec + 1, f)?;
        }
        Pred::Or(a, b) => {
            fmt_pred(a, prec, f)?;
            write!(f, " || ")?;
            fmt_pred(b, prec + 1, f)?;
        }
        Pred::Implies(a, b) => {
            // Right-associative.
            fmt_pred(a, prec + 1, f)?;
            write!(f, " => ")?;
            fmt_pred(b, prec, f)?;
        }
        Pred::LoopBound { disj, term } => {
            write!(f, "loopbound(")?;
            fmt_pred(disj, 0, f)?;
            write!(f, ", ")?;
            fmt_pred(term, 0, f)?;
            write!(f, ")")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_pred(self, 0, f)
    }
}

impl fmt::Display for TemporalPred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemporalPred::Lift(p) => write!(f, "{p}"),
            TemporalPred::Globally(p) => write!(f, "G({p})"),
            TemporalPred::Next(t) => write!(f, "X({t})"),
            TemporalPred::WeakUntil(p, q) => write!(f, "({p}) W ({q})"),
            TemporalPred::And(a, b) => write!(f, "{a} && {b}"),
        }
    }
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} : {};",
            self.role.keyword(),
            self.name,
            self.grid
        )
    }
}

fn fmt_block(stmts: &[Stmt], indent: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for s in stmts {
        fmt_stmt(s, indent, f)?;
    }
    Ok(())
}

fn fmt_stmt(s: &Stmt, indent: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let pad = "    ".repeat(indent);
    match s {
        Stmt::Assign { var, expr } => writeln!(f, "{pad}{var} := {expr};"),
        Stmt::Choose { var, lo, hi } => writeln!(f, "{pad}{var} :in [{lo}, {hi}];"),
        Stmt::Skip => writeln!(f, "{pad}skip;"),
        Stmt::If { cond, then_branch, else_branch } => {
            writeln!(f, "{pad}if {cond} {{")?;
            fmt_block(then_branch, indent + 1, f)?;
            if else_branch.is_empty() {
                writeln!(f, "{pad}}}")
            } else {
                writeln!(f, "{pad}}} else {{")?;
                fmt_block(else_branch, indent + 1, f)?;
                writeln!(f, "{pad}}}")
            }
        }
        Stmt::While { cond, body } => {
            writeln!(f, "{pad}while {cond} {{")?;
            fmt_block(body, indent + 1, f)?;
            writeln!(f, "{pad}}}")
        }
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_stmt(self, 0, f)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            writeln!(f, "{d}")?;
        }
        if !self.decls.is_empty() && !self.body.is_empty() {
            writeln!(f)?;
        }
        fmt_block(&self.body, 0, f)
    }
}

// Predicates serialize as their concrete syntax, so contracts stay readable.

impl Serialize for Pred {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Pred {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Pred, D::Error> {
        let s = String::deserialize(d)?;
        crate::seqlang::parse_pred(&s).map_err(de::Error::custom)
    }
}

impl Serialize for TemporalPred {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TemporalPred {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<TemporalPred, D::Error> {
        let s = String::deserialize(d)?;
        crate::seqlang::parse_temporal(&s).map_err(de::Error::custom)
    }
}
