//! Predicate transformers: substitution, renaming, and weakest preconditions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::seqlang::{Expr, Pred, Program, Stmt};
use crate::value::Grid;

/// Default unrolling depth for loops.
pub const DEFAULT_UNROLL: usize = 64;

/// Ceiling on the node count of an unrolled loop summary. Once an iterate
/// grows past this, unrolling stops early; the result is still sound, it
/// just resolves fewer states.
const MAX_FORMULA_NODES: usize = 200_000;

#[derive(Debug, Error)]
pub enum WpError {
    /// Weakest preconditions cover the deterministic fragment only.
    #[error("nondeterministic choice on {0} has no weakest precondition; remove it or use the enumeration checker")]
    Nondet(String),
    #[error("assigned variable {0} has no declared grid")]
    UndeclaredVar(String),
}

/// Capture is impossible because predicates have no binders, so substitution
/// is a plain tree rewrite.
pub fn substitute_expr(x: &Expr, var: &str, e: &Expr) -> Expr {
    match x {
        Expr::Const(_) => x.clone(),
        Expr::Var(v) => {
            if v == var {
                e.clone()
            } else {
                x.clone()
            }
        }
        Expr::Neg(a) => Expr::Neg(Box::new(substitute_expr(a, var, e))),
        Expr::Abs(a) => Expr::Abs(Box::new(substitute_expr(a, var, e))),
        Expr::Bin { op, lhs, rhs } => Expr::Bin {
            op: *op,
            lhs: Box::new(substitute_expr(lhs, var, e)),
            rhs: Box::new(substitute_expr(rhs, var, e)),
        },
        Expr::Pow(a, n) => Expr::Pow(Box::new(substitute_expr(a, var, e)), *n),
        Expr::Snap { grid, arg } => Expr::Snap {
            grid: *grid,
            arg: Box::new(substitute_expr(arg, var, e)),
        },
        Expr::Dist { label, dist, pairs } => Expr::Dist {
            label: label.clone(),
            dist: dist.clone(),
            pairs: pairs
                .iter()
                .map(|(a, b)| (substitute_expr(a, var, e), substitute_expr(b, var, e)))
                .collect(),
        },
        Expr::FApp { f, arg } => Expr::FApp {
            f: f.clone(),
            arg: Box::new(substitute_expr(arg, var, e)),
        },
    }
}

/// `q[e/var]`.
pub fn substitute(q: &Pred, var: &str, e: &Expr) -> Pred {
    match q {
        Pred::Bool(_) => q.clone(),
        Pred::Cmp { op, lhs, rhs } => Pred::Cmp {
            op: *op,
            lhs: substitute_expr(lhs, var, e),
            rhs: substitute_expr(rhs, var, e),
        },
        Pred::InInterval { expr, lo, lo_open, hi, hi_open } => Pred::InInterval {
            expr: substitute_expr(expr, var, e),
            lo: *lo,
            lo_open: *lo_open,
            hi: *hi,
            hi_open: *hi_open,
        },
        Pred::Not(a) => Pred::Not(Box::new(substitute(a, var, e))),
        Pred::And(a, b) => {
            Pred::And(Box::new(substitute(a, var, e)), Box::new(substitute(b, var, e)))
        }
        Pred::Or(a, b) => {
            Pred::Or(Box::new(substitute(a, var, e)), Box::new(substitute(b, var, e)))
        }
        Pred::Implies(a, b) => {
            Pred::Implies(Box::new(substitute(a, var, e)), Box::new(substitute(b, var, e)))
        }
        Pred::LoopBound { disj, term } => Pred::LoopBound {
            disj: Box::new(substitute(disj, var, e)),
            term: Box::new(substitute(term, var, e)),
        },
    }
}

/// The second copy of a variable in a self-composition.
pub fn primed(name: &str) -> String {
    format!("{name}'")
}

/// Renames every variable occurrence to its primed copy.
pub fn rename_expr(x: &Expr) -> Expr {
    match x {
        Expr::Const(_) => x.clone(),
        Expr::Var(v) => Expr::Var(primed(v)),
        Expr::Neg(a) => Expr::Neg(Box::new(rename_expr(a))),
        Expr::Abs(a) => Expr::Abs(Box::new(rename_expr(a))),
        Expr::Bin { op, lhs, rhs } => Expr::Bin {
            op: *op,
            lhs: Box::new(rename_expr(lhs)),
            rhs: Box::new(rename_expr(rhs)),
        },
        Expr::Pow(a, n) => Expr::Pow(Box::new(rename_expr(a)), *n),
        Expr::Snap { grid, arg } => {
            Expr::Snap { grid: *grid, arg: Box::new(rename_expr(arg)) }
        }
        Expr::Dist { label, dist, pairs } => Expr::Dist {
            label: label.clone(),
            dist: dist.clone(),
            pairs: pairs.iter().map(|(a, b)| (rename_expr(a), rename_expr(b))).collect(),
        },
        Expr::FApp { f, arg } => Expr::FApp { f: f.clone(), arg: Box::new(rename_expr(arg)) },
    }
}

pub fn rename_pred(q: &Pred) -> Pred {
    match q {
        Pred::Bool(_) => q.clone(),
        Pred::Cmp { op, lhs, rhs } => {
            Pred::Cmp { op: *op, lhs: rename_expr(lhs), rhs: rename_expr(rhs) }
        }
        Pred::InInterval { expr, lo, lo_open, hi, hi_open } => Pred::InInterval {
            expr: rename_expr(expr),
            lo: *lo,
            lo_open: *lo_open,
            hi: *hi,
            hi_open: *hi_open,
        },
        Pred::Not(a) => Pred::Not(Box::new(rename_pred(a))),
        Pred::And(a, b) => Pred::And(Box::new(rename_pred(a)), Box::new(rename_pred(b))),
        Pred::Or(a, b) => Pred::Or(Box::new(rename_pred(a)), Box::new(rename_pred(b))),
        Pred::Implies(a, b) => Pred::Implies(Box::new(rename_pred(a)), Box::new(rename_pred(b))),
        Pred::LoopBound { disj, term } => Pred::LoopBound {
            disj: Box::new(rename_pred(disj)),
            term: Box::new(rename_pred(term)),
        },
    }
}

fn rename_stmt(s: &Stmt) -> Stmt {
    match s {
        Stmt::Assign { var, expr } => Stmt::Assign { var: primed(var), expr: rename_expr(expr) },
        Stmt::Choose { var, lo, hi } => {
            Stmt::Choose { var: primed(var), lo: rename_expr(lo), hi: rename_expr(hi) }
        }
        Stmt::Skip => Stmt::Skip,
        Stmt::If { cond, then_branch, else_branch } => Stmt::If {
            cond: rename_pred(cond),
            then_branch: then_branch.iter().map(rename_stmt).collect(),
            else_branch: else_branch.iter().map(rename_stmt).collect(),
        },
        Stmt::While { cond, body } => Stmt::While {
            cond: rename_pred(cond),
            body: body.iter().map(rename_stmt).collect(),
        },
    }
}

/// The primed copy of a program, with disjoint variables.
pub fn rename_program(p: &Program) -> Program {
    Program {
        decls: p
            .decls
            .iter()
            .map(|d| crate::seqlang::Decl {
                name: primed(&d.name),
                role: d.role,
                grid: d.grid,
            })
            .collect(),
        body: p.body.iter().map(rename_stmt).collect(),
    }
}

/// Grid of every variable across the given programs, by name.
pub fn grid_map(progs: &[&Program]) -> BTreeMap<String, Grid> {
    progs
        .iter()
        .flat_map(|p| p.decls.iter())
        .map(|d| (d.name.clone(), d.grid))
        .collect()
}

/// Assignment snaps onto the target grid, so the transformer substitutes the
/// snapped expression. Constants already on the grid stay bare, and an
/// existing snap onto the same grid is not wrapped again.
fn snap_expr(grid: &Grid, e: Expr) -> Expr {
    match &e {
        Expr::Const(c) => {
            if grid.contains(*c) {
                return e;
            }
        }
        Expr::Snap { grid: g, .. }
            if g == grid => {
                return e;
            }
        _ => {}
    }
    Expr::Snap { grid: *grid, arg: Box::new(e) }
}

fn pred_nodes(q: &Pred) -> usize {
    match q {
        Pred::Bool(_) => 1,
        Pred::Cmp { .. } | Pred::InInterval { .. } => 2,
        Pred::Not(a) => 1 + pred_nodes(a),
        Pred::And(a, b) | Pred::Or(a, b) | Pred::Implies(a, b) => 1 + pred_nodes(a) + pred_nodes(b),
        Pred::LoopBound { disj, term } => 1 + pred_nodes(disj) + pred_nodes(term),
    }
}

/// Weakest precondition of a statement sequence for a postcondition, total
/// correctness. Loops unroll up to `unroll` iterations; if the iterates
/// reach a syntactic fixed point the result is exact, otherwise it is a
/// three-valued loop summary that evaluation may report as unresolved.
pub fn wp(
    grids: &BTreeMap<String, Grid>,
    stmts: &[Stmt],
    q: Pred,
    unroll: usize,
) -> Result<Pred, WpError> {
    let mut q = q;
    for s in stmts.iter().rev() {
        q = wp_stmt(grids, s, q, unroll)?;
    }
    Ok(q)
}

fn wp_stmt(
    grids: &BTreeMap<String, Grid>,
    s: &Stmt,
    q: Pred,
    unroll: usize,
) -> Result<Pred, WpError> {
    match s {
        Stmt::Skip => Ok(q),
        Stmt::Assign { var, expr } => {
            let grid = grids.get(var).ok_or_else(|| WpError::UndeclaredVar(var.clone()))?;
            let e = snap_expr(grid, expr.clone());
            Ok(substitute(&q, var, &e))
        }
        Stmt::Choose { var, .. } => Err(WpError::Nondet(var.clone())),
        Stmt::If { cond, then_branch, else_branch } => {
            let wt = wp(grids, then_branch, q.clone(), unroll)?;
            let we = wp(grids, else_branch, q, unroll)?;
            Ok(Pred::and(
                Pred::implies(cond.clone(), wt),
                Pred::implies(Pred::negate(cond.clone()), we),
            ))
        }
        Stmt::While { cond, body } => wp_while(grids, cond, body, q, unroll),
    }
}

/// Iterates `next = (b && wp(body, cur)) || (!b && q)` from `!b && q`. The
/// k-th iterate holds exactly on states from which the loop exits within k
/// iterations in a state satisfying `q`, and the iterates only grow, so the
/// last one carries all of them.
fn unroll_iterates(
    grids: &BTreeMap<String, Grid>,
    b: &Pred,
    body: &[Stmt],
    q: Pred,
    unroll: usize,
) -> Result<(Pred, bool), WpError> {
    let base = Pred::and(Pred::negate(b.clone()), q);
    let mut cur = base.clone();
    for _ in 0..unroll {
        let next = Pred::or(
            Pred::and(b.clone(), wp(grids, body, cur.clone(), unroll)?),
            base.clone(),
        );
        if next == cur {
            return Ok((cur, true));
        }
        cur = next;
        if pred_nodes(&cur) > MAX_FORMULA_NODES {
            break;
        }
    }
    Ok((cur, false))
}

fn wp_while(
    grids: &BTreeMap<String, Grid>,
    b: &Pred,
    body: &[Stmt],
    q: Pred,
    unroll: usize,
) -> Result<Pred, WpError> {
    let (establishes, fixed) = unroll_iterates(grids, b, body, q, unroll)?;
    if fixed {
        return Ok(establishes);
    }
    let (terminates, _) = unroll_iterates(grids, b, body, Pred::Bool(true), unroll)?;
    Ok(Pred::LoopBound { disj: Box::new(establishes), term: Box::new(terminates) })
}
