//! The small imperative language the sequential checks operate on.
//!
//! Programs declare grid-valued variables in four roles (param, input,
//! output, local) and manipulate them with assignments, nondeterministic
//! interval choice, conditionals and loops. Every assignment snaps its
//! result onto the target variable's grid, so the state space stays finite
//! and exact.

pub mod ast;
pub mod eval;
mod lexer;
mod parser;

pub use ast::{
    BinOp, CmpOp, Decl, Expr, Pred, Program, Role, Stmt, TemporalPred,
};
pub use eval::{eval_expr, eval_pred, Env, EvalError, EvalOpts, EvalResult, SnapEvent};
pub use parser::{parse_pred, parse_program, parse_temporal, ParseError};
