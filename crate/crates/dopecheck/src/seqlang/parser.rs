//! Recursive-descent parser for programs, predicates and temporal
//! predicates, with token-index backtracking where the grammar needs it.

use super::ast::*;
use super::lexer::{lex, LexError, Spanned, Tok};
use crate::value::{Grid, Value};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("line {line}, col {col}: {msg}")]
    At { line: u32, col: u32, msg: String },
    #[error("unexpected end of input: {0}")]
    Eof(String),
    #[error("{0}")]
    Invalid(String),
}

struct P {
    toks: Vec<Spanned>,
    pos: usize,
}

impl P {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        match self.toks.get(self.pos.min(self.toks.len().saturating_sub(1))) {
            Some(s) if self.pos < self.toks.len() => ParseError::At {
                line: s.line,
                col: s.col,
                msg: msg.into(),
            },
            _ => ParseError::Eof(msg.into()),
        }
    }

    fn expect(&mut self, want: &Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.err_here(format!("expected {want}, found {t}"))),
            None => Err(ParseError::Eof(format!("expected {want}"))),
        }
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek() == Some(want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    // ---- expressions ----

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(&Tok::Caret) {
            let exp = match self.next() {
                Some(Tok::Num(v)) => {
                    let m = v.mantissa().filter(|m| *m >= 0 && m % crate::value::SCALE == 0);
                    match m {
                        Some(m) if m / crate::value::SCALE <= u32::MAX as i64 => {
                            (m / crate::value::SCALE) as u32
                        }
                        _ => {
                            return Err(self.err_here(
                                "exponent must be a non-negative integer literal",
                            ))
                        }
                    }
                }
                _ => return Err(self.err_here("expected integer exponent after ^")),
            };
            return Ok(Expr::Pow(Box::new(base), exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(Expr::Var(name))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.atom()?)))
            }
            Some(Tok::KwAbs) => {
                self.pos += 1;
                self.expect(&Tok::LParen)?;
                let inner = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(Expr::Abs(Box::new(inner)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            Some(t) => Err(self.err_here(format!("expected expression, found {t}"))),
            None => Err(ParseError::Eof("expected expression".into())),
        }
    }

    // ---- predicates ----

    fn pred(&mut self) -> Result<Pred, ParseError> {
        let lhs = self.pred_or()?;
        if self.eat(&Tok::FatArrow) {
            let rhs = self.pred()?;
            return Ok(Pred::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn pred_or(&mut self) -> Result<Pred, ParseError> {
        let mut lhs = self.pred_and()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.pred_and()?;
            lhs = Pred::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn pred_and(&mut self) -> Result<Pred, ParseError> {
        let mut lhs = self.pred_not()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.pred_not()?;
            lhs = Pred::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn pred_not(&mut self) -> Result<Pred, ParseError> {
        if self.eat(&Tok::Bang) {
            return Ok(Pred::Not(Box::new(self.pred_not()?)));
        }
        self.pred_atom()
    }

    fn pred_atom(&mut self) -> Result<Pred, ParseError> {
        match self.peek() {
            Some(Tok::KwTrue) => {
                self.pos += 1;
                return Ok(Pred::Bool(true));
            }
            Some(Tok::KwFalse) => {
                self.pos += 1;
                return Ok(Pred::Bool(false));
            }
            Some(Tok::LParen) => {
                // Either a parenthesized predicate or an expression starting
                // a comparison; try the comparison first and backtrack.
                let save = self.pos;
                if let Ok(p) = self.comparison() {
                    return Ok(p);
                }
                self.pos = save;
                self.expect(&Tok::LParen)?;
                let inner = self.pred()?;
                self.expect(&Tok::RParen)?;
                return Ok(inner);
            }
            _ => {}
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Pred, ParseError> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Some(Tok::Eq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Ge) => CmpOp::Ge,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::KwIn) => {
                self.pos += 1;
                return self.interval_tail(lhs);
            }
            _ => return Err(self.err_here("expected comparison operator")),
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(Pred::Cmp { op, lhs, rhs })
    }

    fn interval_tail(&mut self, expr: Expr) -> Result<Pred, ParseError> {
        let lo_open = match self.next() {
            Some(Tok::LBracket) => false,
            Some(Tok::LParen) => true,
            _ => return Err(self.err_here("expected [ or ( to open interval")),
        };
        let lo = self.signed_value()?;
        self.expect(&Tok::Comma)?;
        let hi = self.signed_value()?;
        let hi_open = match self.next() {
            Some(Tok::RBracket) => false,
            Some(Tok::RParen) => true,
            _ => return Err(self.err_here("expected ] or ) to close interval")),
        };
        Ok(Pred::InInterval { expr, lo, lo_open, hi, hi_open })
    }

    fn signed_value(&mut self) -> Result<Value, ParseError> {
        let neg = self.eat(&Tok::Minus);
        match self.next() {
            Some(Tok::Num(v)) => {
                if neg {
                    v.checked_neg().map_err(|e| self.err_here(e.to_string()))
                } else {
                    Ok(v)
                }
            }
            _ => Err(self.err_here("expected numeric literal")),
        }
    }

    // ---- temporal predicates ----

    fn temporal(&mut self) -> Result<TemporalPred, ParseError> {
        // Split the remaining tokens at top-level `&&`; segments that are
        // all plain predicates collapse back into one lifted predicate.
        let mut parts = vec![self.temporal_part()?];
        while self.eat(&Tok::AndAnd) {
            parts.push(self.temporal_part()?);
        }
        if parts.iter().all(|p| matches!(p, TemporalPred::Lift(_))) && parts.len() > 1 {
            let combined = parts
                .into_iter()
                .map(|p| match p {
                    TemporalPred::Lift(p) => p,
                    _ => unreachable!(),
                })
                .reduce(|a, b| Pred::And(Box::new(a), Box::new(b)))
                .unwrap();
            return Ok(TemporalPred::Lift(combined));
        }
        Ok(parts
            .into_iter()
            .reduce(|a, b| TemporalPred::And(Box::new(a), Box::new(b)))
            .unwrap())
    }

    fn temporal_part(&mut self) -> Result<TemporalPred, ParseError> {
        if let Some(Tok::Ident(name)) = self.peek() {
            match name.as_str() {
                "G" => {
                    self.pos += 1;
                    self.expect(&Tok::LParen)?;
                    let p = self.pred()?;
                    self.expect(&Tok::RParen)?;
                    return Ok(TemporalPred::Globally(p));
                }
                "X" => {
                    self.pos += 1;
                    self.expect(&Tok::LParen)?;
                    let t = self.temporal()?;
                    self.expect(&Tok::RParen)?;
                    return Ok(TemporalPred::Next(Box::new(t)));
                }
                _ => {}
            }
        }
        // `(p) W (q)` needs lookahead past the closing paren.
        if self.peek() == Some(&Tok::LParen) {
            let save = self.pos;
            self.pos += 1;
            if let Ok(p) = self.pred() {
                if self.eat(&Tok::RParen) {
                    if let Some(Tok::Ident(w)) = self.peek() {
                        if w == "W" {
                            self.pos += 1;
                            self.expect(&Tok::LParen)?;
                            let q = self.pred()?;
                            self.expect(&Tok::RParen)?;
                            return Ok(TemporalPred::WeakUntil(p, q));
                        }
                    }
                }
            }
            self.pos = save;
        }
        // Plain predicate, stopping at a top-level `&&` so the caller can
        // decide how to combine. `pred_not` parses exactly one conjunct.
        let mut lhs = self.pred_not()?;
        // Inside a part, `||` and `=>` still bind.
        while self.eat(&Tok::OrOr) {
            let rhs = self.pred_and()?;
            lhs = Pred::Or(Box::new(lhs), Box::new(rhs));
        }
        if self.eat(&Tok::FatArrow) {
            let rhs = self.pred()?;
            lhs = Pred::Implies(Box::new(lhs), Box::new(rhs));
        }
        Ok(TemporalPred::Lift(lhs))
    }

    // ---- programs ----

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut decls = Vec::new();
        while matches!(
            self.peek(),
            Some(Tok::KwParam | Tok::KwInput | Tok::KwOutput | Tok::KwVar)
        ) {
            decls.push(self.decl()?);
        }
        let mut body = Vec::new();
        while !self.at_end() {
            body.push(self.stmt()?);
        }
        Ok(Program { decls, body })
    }

    fn decl(&mut self) -> Result<Decl, ParseError> {
        let role = match self.next() {
            Some(Tok::KwParam) => Role::Param,
            Some(Tok::KwInput) => Role::Input,
            Some(Tok::KwOutput) => Role::Output,
            Some(Tok::KwVar) => Role::Local,
            _ => return Err(self.err_here("expected declaration keyword")),
        };
        let name = self.ident()?;
        self.expect(&Tok::Colon)?;
        self.expect(&Tok::LBracket)?;
        let lo = self.signed_value()?;
        self.expect(&Tok::Comma)?;
        let hi = self.signed_value()?;
        self.expect(&Tok::RBracket)?;
        self.expect(&Tok::KwStep)?;
        let step = self.signed_value()?;
        self.expect(&Tok::Semi)?;
        let grid = Grid::new(lo, hi, step)
            .map_err(|e| ParseError::Invalid(format!("declaration of {name}: {e}")))?;
        Ok(Decl { name, role, grid })
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            Some(t) => Err(ParseError::Invalid(format!("expected identifier, found {t}"))),
            None => Err(ParseError::Eof("expected identifier".into())),
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        match self.peek().cloned() {
            Some(Tok::KwSkip) => {
                self.pos += 1;
                self.expect(&Tok::Semi)?;
                Ok(Stmt::Skip)
            }
            Some(Tok::KwIf) => {
                self.pos += 1;
                let cond = self.pred()?;
                let then_branch = self.block()?;
                let else_branch = if self.eat(&Tok::KwElse) {
                    self.block()?
                } else {
                    Vec::new()
                };
                Ok(Stmt::If { cond, then_branch, else_branch })
            }
            Some(Tok::KwWhile) => {
                self.pos += 1;
                let cond = self.pred()?;
                let body = self.block()?;
                Ok(Stmt::While { cond, body })
            }
            Some(Tok::Ident(var)) => {
                self.pos += 1;
                match self.next() {
                    Some(Tok::ColonEq) => {
                        let expr = self.expr()?;
                        self.expect(&Tok::Semi)?;
                        Ok(Stmt::Assign { var, expr })
                    }
                    Some(Tok::ColonIn) => {
                        self.expect(&Tok::LBracket)?;
                        let lo = self.expr()?;
                        self.expect(&Tok::Comma)?;
                        let hi = self.expr()?;
                        self.expect(&Tok::RBracket)?;
                        self.expect(&Tok::Semi)?;
                        Ok(Stmt::Choose { var, lo, hi })
                    }
                    _ => Err(self.err_here("expected := or :in after variable")),
                }
            }
            Some(t) => Err(self.err_here(format!("expected statement, found {t}"))),
            None => Err(ParseError::Eof("expected statement".into())),
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(&Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.at_end() {
                return Err(ParseError::Eof("unclosed block".into()));
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }
}

fn finish<T>(p: &P, out: T, what: &str) -> Result<T, ParseError> {
    if p.at_end() {
        Ok(out)
    } else {
        Err(p.err_here(format!("trailing tokens after {what}")))
    }
}

/// Parses a complete program and checks its static rules: unique names,
/// declared variables only, and no writes to params or inputs.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = P { toks: lex(src)?, pos: 0 };
    let prog = p.program()?;
    let prog = finish(&p, prog, "program")?;
    validate(&prog)?;
    Ok(prog)
}

pub fn parse_pred(src: &str) -> Result<Pred, ParseError> {
    let mut p = P { toks: lex(src)?, pos: 0 };
    let pred = p.pred()?;
    finish(&p, pred, "predicate")
}

pub fn parse_temporal(src: &str) -> Result<TemporalPred, ParseError> {
    let mut p = P { toks: lex(src)?, pos: 0 };
    let t = p.temporal()?;
    finish(&p, t, "temporal predicate")
}

fn validate(prog: &Program) -> Result<(), ParseError> {
    let mut names = BTreeSet::new();
    for d in &prog.decls {
        if !names.insert(d.name.as_str()) {
            return Err(ParseError::Invalid(format!("duplicate declaration of {}", d.name)));
        }
    }
    fn check_expr(e: &Expr, names: &BTreeSet<&str>) -> Result<(), ParseError> {
        match e {
            Expr::Const(_) => Ok(()),
            Expr::Var(v) => {
                if names.contains(v.as_str()) {
                    Ok(())
                } else {
                    Err(ParseError::Invalid(format!("undeclared variable {v}")))
                }
            }
            Expr::Neg(a) | Expr::Abs(a) | Expr::Pow(a, _) => check_expr(a, names),
            Expr::Bin { lhs, rhs, .. } => {
                check_expr(lhs, names)?;
                check_expr(rhs, names)
            }
            Expr::Snap { arg, .. } | Expr::FApp { arg, .. } => check_expr(arg, names),
            Expr::Dist { pairs, .. } => {
                for (a, b) in pairs {
                    check_expr(a, names)?;
                    check_expr(b, names)?;
                }
                Ok(())
            }
        }
    }
    fn check_pred(p: &Pred, names: &BTreeSet<&str>) -> Result<(), ParseError> {
        match p {
            Pred::Bool(_) => Ok(()),
            Pred::Cmp { lhs, rhs, .. } => {
                check_expr(lhs, names)?;
                check_expr(rhs, names)
            }
            Pred::InInterval { expr, .. } => check_expr(expr, names),
            Pred::Not(a) => check_pred(a, names),
            Pred::And(a, b) | Pred::Or(a, b) | Pred::Implies(a, b)
            | Pred::LoopBound { disj: a, term: b } => {
                check_pred(a, names)?;
                check_pred(b, names)
            }
        }
    }
    fn check_stmts(
        stmts: &[Stmt],
        prog: &Program,
        names: &BTreeSet<&str>,
    ) -> Result<(), ParseError> {
        for s in stmts {
            match s {
                Stmt::Assign { var, expr } => {
                    check_writable(var, prog)?;
                    check_expr(expr, names)?;
                }
                Stmt::Choose { var, lo, hi } => {
                    check_writable(var, prog)?;
                    check_expr(lo, names)?;
                    check_expr(hi, names)?;
                }
                Stmt::Skip => {}
                Stmt::If { cond, then_branch, else_branch } => {
                    check_pred(cond, names)?;
                    check_stmts(then_branch, prog, names)?;
                    check_stmts(else_branch, prog, names)?;
                }
                Stmt::While { cond, body } => {
                    check_pred(cond, names)?;
                    check_stmts(body, prog, names)?;
                }
            }
        }
        Ok(())
    }
    fn check_writable(var: &str, prog: &Program) -> Result<(), ParseError> {
        match prog.decl(var) {
            None => Err(ParseError::Invalid(format!("assignment to undeclared variable {var}"))),
            Some(d) if matches!(d.role, Role::Param | Role::Input) => Err(ParseError::Invalid(
                format!("cannot assign to {} {}", d.role.keyword(), var),
            )),
            Some(_) => Ok(()),
        }
    }
    check_stmts(&prog.body, prog, &names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    #[test]
    fn parses_declarations_and_statements() {
        let src = "\
param p : [0, 2] step 1;
input thrtl : [0.1, 2] step 0.1;
output NOx : [0, 2] step 0.005;
var dose : [0, 4] step 0.01;

if thrtl in (0, 1] {
    dose := thrtl ^ 2;
} else {
    dose := thrtl;
}
NOx := thrtl ^ 3 / (2 * dose);
";
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.decls.len(), 4);
        assert_eq!(prog.body.len(), 2);
        assert_eq!(prog.decl("thrtl").unwrap().grid.count(), 20);
    }

    #[test]
    fn pretty_print_round_trips() {
        let src = "\
input x : [0, 1] step 0.5;
output y : [0, 4] step 0.5;
var t : [0, 4] step 0.5;

t :in [x, x + 1];
while t > 0 && y < 3 {
    y := y + t - (t - 1);
    t := t - 1;
}
if !(y = 2) || x in [0, 0.5) {
    skip;
} else {
    y := abs(x - 2) ^ 2;
}
";
        let prog = parse_program(src).unwrap();
        let printed = prog.to_string();
        let reparsed = parse_program(&printed).unwrap();
        assert_eq!(prog, reparsed, "printed form:\n{printed}");
    }

    #[test]
    fn rejects_static_errors() {
        assert!(parse_program("input x : [0, 1] step 0.5;\nx := 1;").is_err());
        assert!(parse_program("output y : [0, 1] step 0.5;\ny := z;").is_err());
        assert!(parse_program("output y : [0, 1] step 0.3;").is_err());
        assert!(parse_program("param p : [0,1] step 1; param p : [0,1] step 1;").is_err());
    }

    #[test]
    fn predicate_precedence_and_intervals() {
        let p = parse_pred("a <= 1 && b > 2 || !(c = 3) => d in (0, 1]").unwrap();
        match &p {
            Pred::Implies(lhs, _) => match lhs.as_ref() {
                Pred::Or(l, _) => assert!(matches!(l.as_ref(), Pred::And(..))),
                other => panic!("expected or, got {other}"),
            },
            other => panic!("expected implication, got {other}"),
        }
        let printed = p.to_string();
        assert_eq!(parse_pred(&printed).unwrap(), p);
    }

    #[test]
    fn parenthesized_predicates_vs_expressions() {
        let p = parse_pred("(a + 1) * 2 <= 4").unwrap();
        assert!(matches!(p, Pred::Cmp { op: CmpOp::Le, .. }));
        let q = parse_pred("(a <= 1) && (2 < b)").unwrap();
        assert!(matches!(q, Pred::And(..)));
        let r = parse_pred("((a <= 1))").unwrap();
        assert!(matches!(r, Pred::Cmp { .. }));
    }

    #[test]
    fn temporal_forms() {
        let g = parse_temporal("G(throttle in (0, 1])").unwrap();
        assert!(matches!(g, TemporalPred::Globally(_)));
        let w = parse_temporal("(mode = 0) W (mode = 1)").unwrap();
        assert!(matches!(w, TemporalPred::WeakUntil(..)));
        let x = parse_temporal("X(G(a <= 1))").unwrap();
        assert!(matches!(x, TemporalPred::Next(_)));
        let plain = parse_temporal("a <= 1 && b <= 2").unwrap();
        assert!(matches!(plain, TemporalPred::Lift(Pred::And(..))));
        let mixed = parse_temporal("a <= 1 && G(b <= 2)").unwrap();
        assert!(matches!(mixed, TemporalPred::And(..)));
        for t in [&g, &w, &x, &plain, &mixed] {
            assert_eq!(&parse_temporal(&t.to_string()).unwrap(), t);
        }
    }

    #[test]
    fn negative_interval_bounds() {
        let p = parse_pred("x in [-1, 1)").unwrap();
        match p {
            Pred::InInterval { lo, lo_open, hi_open, .. } => {
                assert_eq!(lo, v("-1"));
                assert!(!lo_open);
                assert!(hi_open);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
