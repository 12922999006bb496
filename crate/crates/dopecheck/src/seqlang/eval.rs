//! Exact execution of programs over their grid semantics.
//!
//! Execution explores every nondeterministic resolution. Each resolution
//! carries its own fuel; a resolution that runs out is reported through the
//! `bottom` flag instead of an output, so callers can reason soundly about
//! possible divergence.

use super::ast::*;
use crate::value::{Value, ValueError};
use std::collections::{BTreeMap, BTreeSet};

pub type Env = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("in {at}: {source}")]
    Arith {
        at: String,
        #[source]
        source: ValueError,
    },
    #[error("variable {0} not bound")]
    Unbound(String),
    #[error("verification-only construct {0} cannot be executed")]
    NotExecutable(String),
    #[error("nondeterministic choice fanned out past {max} simultaneous resolutions")]
    PathExplosion { max: usize },
    #[error("{role} {name} expects a value from {expected}, got {got}")]
    BadBinding { role: &'static str, name: String, expected: String, got: Value },
}

#[derive(Debug, Clone)]
pub struct EvalOpts {
    /// Steps available to each resolution; statements and guard
    /// evaluations cost one each.
    pub fuel: u64,
    /// Upper bound on simultaneously live resolutions.
    pub max_paths: usize,
}

impl Default for EvalOpts {
    fn default() -> Self {
        EvalOpts { fuel: 100_000, max_paths: 10_000 }
    }
}

/// One occasion where an assigned value had to be moved onto the grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SnapEvent {
    pub var: String,
    pub from: Value,
    pub to: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Final output valuations of the terminating resolutions.
    pub outputs: BTreeSet<Env>,
    /// Whether some resolution exhausted its fuel.
    pub bottom: bool,
    /// How many resolutions exhausted their fuel.
    pub bottom_count: u64,
    pub snap_count: u64,
    pub snap_sample: Vec<SnapEvent>,
}

struct Path {
    env: Env,
    fuel: u64,
}

struct Ctx<'a> {
    prog: &'a Program,
    opts: &'a EvalOpts,
    bottom_count: u64,
    snap_count: u64,
    snap_sample: Vec<SnapEvent>,
}

impl Ctx<'_> {
    fn note_snap(&mut self, var: &str, from: Value, to: Value) {
        self.snap_count += 1;
        if self.snap_sample.len() < 8 {
            self.snap_sample.push(SnapEvent { var: var.to_string(), from, to });
        }
    }
}

/// Evaluates an expression in an environment. Verification-layer nodes
/// (snap, distances, bound functions) evaluate too, since the validity
/// checker shares this code.
pub fn eval_expr(e: &Expr, env: &Env) -> Result<Value, EvalError> {
    let arith = |source: ValueError| EvalError::Arith { at: e.to_string(), source };
    match e {
        Expr::Const(v) => Ok(*v),
        Expr::Var(name) => env
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Neg(a) => eval_expr(a, env)?.checked_neg().map_err(arith),
        Expr::Abs(a) => Ok(eval_expr(a, env)?.abs()),
        Expr::Bin { op, lhs, rhs } => {
            let a = eval_expr(lhs, env)?;
            let b = eval_expr(rhs, env)?;
            match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div => a.checked_div(b),
            }
            .map_err(arith)
        }
        Expr::Pow(base, exp) => eval_expr(base, env)?.checked_pow(*exp).map_err(arith),
        Expr::Snap { grid, arg } => {
            let v = eval_expr(arg, env)?;
            let (snapped, _) = grid
                .snap(v)
                .map_err(|e| EvalError::Arith { at: e.to_string(), source: ValueError::InfiniteOperand("snap") })?;
            Ok(snapped)
        }
        Expr::Dist { dist, pairs, .. } => {
            let mut worst = Value::ZERO;
            for (a, b) in pairs {
                let va = eval_expr(a, env)?;
                let vb = eval_expr(b, env)?;
                let d = dist
                    .value_dist(va, vb)
                    .map_err(|e| EvalError::NotExecutable(e.to_string()))?;
                worst = worst.max(d);
            }
            Ok(worst)
        }
        Expr::FApp { f, arg } => {
            let x = eval_expr(arg, env)?;
            f.apply(x).map_err(|e| EvalError::NotExecutable(e.to_string()))
        }
    }
}

/// Two-valued predicate evaluation, for program guards and plain filters.
pub fn eval_pred(p: &Pred, env: &Env) -> Result<bool, EvalError> {
    match p {
        Pred::Bool(b) => Ok(*b),
        Pred::Cmp { op, lhs, rhs } => {
            Ok(op.eval(eval_expr(lhs, env)?, eval_expr(rhs, env)?))
        }
        Pred::InInterval { expr, lo, lo_open, hi, hi_open } => {
            let v = eval_expr(expr, env)?;
            let above = if *lo_open { v > *lo } else { v >= *lo };
            let below = if *hi_open { v < *hi } else { v <= *hi };
            Ok(above && below)
        }
        Pred::Not(a) => Ok(!eval_pred(a, env)?),
        Pred::And(a, b) => Ok(eval_pred(a, env)? && eval_pred(b, env)?),
        Pred::Or(a, b) => Ok(eval_pred(a, env)? || eval_pred(b, env)?),
        Pred::Implies(a, b) => Ok(!eval_pred(a, env)? || eval_pred(b, env)?),
        Pred::LoopBound { .. } => Err(EvalError::NotExecutable("loopbound".into())),
    }
}

/// Runs the program on one parameter and input valuation.
///
/// Params and inputs must lie on their declared grids. Locals and outputs
/// start at the low end of their grids.
pub fn run(
    prog: &Program,
    params: &Env,
    inputs: &Env,
    opts: &EvalOpts,
) -> Result<EvalResult, EvalError> {
    let mut env = Env::new();
    for d in &prog.decls {
        let bound = match d.role {
            Role::Param => params.get(&d.name),
            Role::Input => inputs.get(&d.name),
            Role::Local | Role::Output => None,
        };
        let v = match (d.role, bound) {
            (Role::Param, Some(v)) | (Role::Input, Some(v)) => {
                if !d.grid.contains(*v) {
                    return Err(EvalError::BadBinding {
                        role: d.role.keyword(),
                        name: d.name.clone(),
                        expected: d.grid.to_string(),
                        got: *v,
                    });
                }
                *v
            }
            (Role::Param | Role::Input, None) => {
                return Err(EvalError::Unbound(d.name.clone()))
            }
            _ => d.grid.lo(),
        };
        env.insert(d.name.clone(), v);
    }

    let mut ctx = Ctx {
        prog,
        opts,
        bottom_count: 0,
        snap_count: 0,
        snap_sample: Vec::new(),
    };
    let start = vec![Path { env, fuel: opts.fuel }];
    let finished = exec_block(&prog.body, start, &mut ctx)?;

    let out_vars: Vec<&str> = prog.outputs().map(|d| d.name.as_str()).collect();
    let outputs = finished
        .into_iter()
        .map(|p| {
            out_vars
                .iter()
                .map(|v| (v.to_string(), p.env[*v]))
                .collect::<Env>()
        })
        .collect();
    Ok(EvalResult {
        outputs,
        bottom: ctx.bottom_count > 0,
        bottom_count: ctx.bottom_count,
        snap_count: ctx.snap_count,
        snap_sample: ctx.snap_sample,
    })
}

fn tick(path: &mut Path) -> bool {
    if path.fuel == 0 {
        return false;
    }
    path.fuel -= 1;
    true
}

fn exec_block(stmts: &[Stmt], mut paths: Vec<Path>, ctx: &mut Ctx) -> Result<Vec<Path>, EvalError> {
    for s in stmts {
        paths = exec_stmt(s, paths, ctx)?;
    }
    Ok(paths)
}

fn exec_stmt(stmt: &Stmt, paths: Vec<Path>, ctx: &mut Ctx) -> Result<Vec<Path>, EvalError> {
    let mut out = Vec::new();
    match stmt {
        Stmt::Assign { var, expr } => {
            for mut p in paths {
                if !tick(&mut p) {
                    ctx.bottom_count += 1;
                    continue;
                }
                let raw = eval_expr(expr, &p.env)?;
                let grid = ctx.prog.decl(var).expect("validated").grid;
                let (snapped, moved) = grid.snap(raw).map_err(|_| EvalError::Arith {
                    at: stmt.to_string().trim_end().to_string(),
                    source: ValueError::InfiniteOperand("snap onto grid"),
                })?;
                if moved {
                    ctx.note_snap(var, raw, snapped);
                }
                p.env.insert(var.clone(), snapped);
                out.push(p);
            }
        }
        Stmt::Choose { var, lo, hi } => {
            for mut p in paths {
                if !tick(&mut p) {
                    ctx.bottom_count += 1;
                    continue;
                }
                let lo_v = eval_expr(lo, &p.env)?;
                let hi_v = eval_expr(hi, &p.env)?;
                let grid = ctx.prog.decl(var).expect("validated").grid;
                let choices = grid.points_within(lo_v, hi_v).map_err(|e| {
                    EvalError::NotExecutable(format!("{stmt}: {e}"))
                })?;
                if out.len() + choices.len() > ctx.opts.max_paths {
                    return Err(EvalError::PathExplosion { max: ctx.opts.max_paths });
                }
                for c in choices {
                    let mut q = Path { env: p.env.clone(), fuel: p.fuel };
                    q.env.insert(var.clone(), c);
                    out.push(q);
                }
            }
        }
        Stmt::Skip => {
            for mut p in paths {
                if !tick(&mut p) {
                    ctx.bottom_count += 1;
                    continue;
                }
                out.push(p);
            }
        }
        Stmt::If { cond, then_branch, else_branch } => {
            let mut taken = Vec::new();
            let mut not_taken = Vec::new();
            for mut p in paths {
                if !tick(&mut p) {
                    ctx.bottom_count += 1;
                    continue;
                }
                if eval_pred(cond, &p.env)? {
                    taken.push(p);
                } else {
                    not_taken.push(p);
                }
            }
            out.extend(exec_block(then_branch, taken, ctx)?);
            out.extend(exec_block(else_branch, not_taken, ctx)?);
        }
        Stmt::While { cond, body } => {
            let mut live = paths;
            while !live.is_empty() {
                let mut continuing = Vec::new();
                for mut p in live {
                    if !tick(&mut p) {
                        ctx.bottom_count += 1;
                        continue;
                    }
                    if eval_pred(cond, &p.env)? {
                        continuing.push(p);
                    } else {
                        out.push(p);
                    }
                }
                if out.len() + continuing.len() > ctx.opts.max_paths {
                    return Err(EvalError::PathExplosion { max: ctx.opts.max_paths });
                }
                live = exec_block(body, continuing, ctx)?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqlang::parse_program;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    fn env(pairs: &[(&str, &str)]) -> Env {
        pairs
            .iter()
            .map(|(k, val)| (k.to_string(), v(val)))
            .collect()
    }

    fn single_output(r: &EvalResult, var: &str) -> Vec<Value> {
        r.outputs.iter().map(|o| o[var]).collect()
    }

    #[test]
    fn deterministic_run() {
        let prog = parse_program(
            "input x : [0, 2] step 0.5;\noutput y : [0, 4] step 0.25;\ny := x ^ 2;",
        )
        .unwrap();
        let r = run(&prog, &env(&[]), &env(&[("x", "1.5")]), &EvalOpts::default()).unwrap();
        assert_eq!(single_output(&r, "y"), vec![v("2.25")]);
        assert!(!r.bottom);
        assert_eq!(r.snap_count, 0);
    }

    #[test]
    fn nondeterministic_choice_enumerates_grid_points() {
        let prog = parse_program(
            "output y : [0, 1] step 0.1;\ny :in [0.35, 0.65];",
        )
        .unwrap();
        let r = run(&prog, &env(&[]), &env(&[]), &EvalOpts::default()).unwrap();
        assert_eq!(single_output(&r, "y"), vec![v("0.4"), v("0.5"), v("0.6")]);
    }

    #[test]
    fn assignment_snaps_and_warns() {
        let prog = parse_program(
            "input x : [0, 1] step 0.5;\noutput y : [0, 1] step 0.5;\ny := x / 3;",
        )
        .unwrap();
        let r = run(&prog, &env(&[]), &env(&[("x", "1")]), &EvalOpts::default()).unwrap();
        assert_eq!(single_output(&r, "y"), vec![v("0.5")]);
        assert_eq!(r.snap_count, 1);
        assert_eq!(r.snap_sample[0].from, v("0.333333"));
    }

    #[test]
    fn diverging_loop_reports_bottom() {
        let prog = parse_program(
            "output y : [0, 1] step 1;\nwhile true {\n skip;\n}",
        )
        .unwrap();
        let r = run(
            &prog,
            &env(&[]),
            &env(&[]),
            &EvalOpts { fuel: 100, max_paths: 10 },
        )
        .unwrap();
        assert!(r.outputs.is_empty());
        assert!(r.bottom);
    }

    #[test]
    fn guard_only_loop_still_burns_fuel() {
        let prog = parse_program("output y : [0, 1] step 1;\nwhile y <= 1 {\n}").unwrap();
        let r = run(
            &prog,
            &env(&[]),
            &env(&[]),
            &EvalOpts { fuel: 50, max_paths: 10 },
        )
        .unwrap();
        assert!(r.bottom);
    }

    #[test]
    fn loop_terminates_normally() {
        let prog = parse_program(
            "input n : [0, 3] step 1;\noutput acc : [0, 10] step 1;\nvar i : [0, 3] step 1;\n\
             i := n;\nwhile i > 0 {\n acc := acc + i;\n i := i - 1;\n}",
        )
        .unwrap();
        let r = run(&prog, &env(&[]), &env(&[("n", "3")]), &EvalOpts::default()).unwrap();
        assert_eq!(single_output(&r, "acc"), vec![v("6")]);
        assert!(!r.bottom);
    }

    #[test]
    fn division_by_zero_names_the_expression() {
        let prog = parse_program(
            "input x : [0, 1] step 1;\noutput y : [0, 1] step 1;\ny := 1 / x;",
        )
        .unwrap();
        let e = run(&prog, &env(&[]), &env(&[("x", "0")]), &EvalOpts::default()).unwrap_err();
        match e {
            EvalError::Arith { at, source } => {
                assert!(at.contains("1 / x"));
                assert_eq!(source, ValueError::DivByZero);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn off_grid_input_rejected() {
        let prog = parse_program(
            "input x : [0, 1] step 0.5;\noutput y : [0, 1] step 0.5;\ny := x;",
        )
        .unwrap();
        let e = run(&prog, &env(&[]), &env(&[("x", "0.3")]), &EvalOpts::default()).unwrap_err();
        assert!(matches!(e, EvalError::BadBinding { .. }));
    }

    #[test]
    fn rejects_too_many_paths() {
        let prog = parse_program(
            "output y : [0, 1] step 0.001;\ny :in [0, 1];\ny :in [0, 1];",
        )
        .unwrap();
        let e = run(
            &prog,
            &env(&[]),
            &env(&[]),
            &EvalOpts { fuel: 1000, max_paths: 500 },
        )
        .unwrap_err();
        assert!(matches!(e, EvalError::PathExplosion { .. }));
    }
}
