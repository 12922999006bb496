//! Tokenizer shared by the program, predicate and temporal parsers.

use crate::value::Value;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(Value),
    KwParam,
    KwInput,
    KwOutput,
    KwVar,
    KwIf,
    KwElse,
    KwWhile,
    KwSkip,
    KwIn,
    KwStep,
    KwAbs,
    KwTrue,
    KwFalse,
    ColonEq,
    ColonIn,
    Colon,
    Semi,
    Comma,
    LBracket,
    RBracket,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
    AndAnd,
    OrOr,
    Bang,
    FatArrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::KwParam => write!(f, "param"),
            Tok::KwInput => write!(f, "input"),
            Tok::KwOutput => write!(f, "output"),
            Tok::KwVar => write!(f, "var"),
            Tok::KwIf => write!(f, "if"),
            Tok::KwElse => write!(f, "else"),
            Tok::KwWhile => write!(f, "while"),
            Tok::KwSkip => write!(f, "skip"),
            Tok::KwIn => write!(f, "in"),
            Tok::KwStep => write!(f, "step"),
            Tok::KwAbs => write!(f, "abs"),
            Tok::KwTrue => write!(f, "true"),
            Tok::KwFalse => write!(f, "false"),
            Tok::ColonEq => write!(f, ":="),
            Tok::ColonIn => write!(f, ":in"),
            Tok::Colon => write!(f, ":"),
            Tok::Semi => write!(f, ";"),
            Tok::Comma => write!(f, ","),
            Tok::LBracket => write!(f, "["),
            Tok::RBracket => write!(f, "]"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::LBrace => write!(f, "{{"),
            Tok::RBrace => write!(f, "}}"),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::Star => write!(f, "*"),
            Tok::Slash => write!(f, "/"),
            Tok::Caret => write!(f, "^"),
            Tok::Eq => write!(f, "="),
            Tok::Ne => write!(f, "!="),
            Tok::Le => write!(f, "<="),
            Tok::Lt => write!(f, "<"),
            Tok::Ge => write!(f, ">="),
            Tok::Gt => write!(f, ">"),
            Tok::AndAnd => write!(f, "&&"),
            Tok::OrOr => write!(f, "||"),
            Tok::Bang => write!(f, "!"),
            Tok::FatArrow => write!(f, "=>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, col {col}: {msg}")]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

pub fn lex(src: &str) -> Result<Vec<Spanned>, LexError> {
    let mut toks = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    loop {
        let (tline, tcol) = (line, col);
        let c = match chars.peek().copied() {
            Some(c) => c,
            None => break,
        };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' {
            // Lookahead for a line comment without consuming a lone slash.
            let mut ahead = chars.clone();
            ahead.next();
            if ahead.peek() == Some(&'/') {
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    bump!();
                }
                continue;
            }
        }
        let err = |msg: String| LexError { line: tline, col: tcol, msg };
        if c.is_ascii_digit() || c == '.' {
            let mut text = String::new();
            let mut seen_dot = false;
            while let Some(&n) = chars.peek() {
                if n.is_ascii_digit() || (n == '.' && !seen_dot) {
                    seen_dot |= n == '.';
                    text.push(n);
                    bump!();
                } else {
                    break;
                }
            }
            let v: Value = text
                .parse()
                .map_err(|e| err(format!("bad number literal {text:?}: {e}")))?;
            toks.push(Spanned { tok: Tok::Num(v), line: tline, col: tcol });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut name = String::new();
            while let Some(&n) = chars.peek() {
                if n.is_ascii_alphanumeric() || n == '_' {
                    name.push(n);
                    bump!();
                } else {
                    break;
                }
            }
            // Trailing apostrophes mark the renamed copy of a variable in
            // self-composed formulas.
            while let Some(&'\'') = chars.peek() {
                name.push('\'');
                bump!();
            }
            let tok = match name.as_str() {
                "param" => Tok::KwParam,
                "input" => Tok::KwInput,
                "output" => Tok::KwOutput,
                "var" => Tok::KwVar,
                "if" => Tok::KwIf,
                "else" => Tok::KwElse,
                "while" => Tok::KwWhile,
                "skip" => Tok::KwSkip,
                "in" => Tok::KwIn,
                "step" => Tok::KwStep,
                "abs" => Tok::KwAbs,
                "true" => Tok::KwTrue,
                "false" => Tok::KwFalse,
                "inf" => Tok::Num(Value::Inf),
                _ => Tok::Ident(name),
            };
            toks.push(Spanned { tok, line: tline, col: tcol });
            continue;
        }
        bump!();
        let next = chars.peek().copied();
        let tok = match (c, next) {
            (':', Some('=')) => {
                bump!();
                Tok::ColonEq
            }
            (':', Some('i')) => {
                // ":in" only when followed by the full keyword.
                let mut probe = chars.clone();
                probe.next();
                let word_ends = probe.next() == Some('n')
                    && !matches!(probe.peek(), Some(&b) if b.is_ascii_alphanumeric() || b == '_');
                if word_ends {
                    bump!();
                    bump!();
                    Tok::ColonIn
                } else {
                    Tok::Colon
                }
            }
            (':', _) => Tok::Colon,
            (';', _) => Tok::Semi,
            (',', _) => Tok::Comma,
            ('[', _) => Tok::LBracket,
            (']', _) => Tok::RBracket,
            ('(', _) => Tok::LParen,
            (')', _) => Tok::RParen,
            ('{', _) => Tok::LBrace,
            ('}', _) => Tok::RBrace,
            ('+', _) => Tok::Plus,
            ('-', _) => Tok::Minus,
            ('*', _) => Tok::Star,
            ('/', _) => Tok::Slash,
            ('^', _) => Tok::Caret,
            ('=', Some('>')) => {
                bump!();
                Tok::FatArrow
            }
            ('=', _) => Tok::Eq,
            ('!', Some('=')) => {
                bump!();
                Tok::Ne
            }
            ('!', _) => Tok::Bang,
            ('<', Some('=')) => {
                bump!();
                Tok::Le
            }
            ('<', _) => Tok::Lt,
            ('>', Some('=')) => {
                bump!();
                Tok::Ge
            }
            ('>', _) => Tok::Gt,
            ('&', Some('&')) => {
                bump!();
                Tok::AndAnd
            }
            ('|', Some('|')) => {
                bump!();
                Tok::OrOr
            }
            other => {
                return Err(err(format!("unexpected character {:?}", other.0)));
            }
        };
        toks.push(Spanned { tok, line: tline, col: tcol });
    }
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_statements_and_operators() {
        let toks = lex("x := 1.5; // set\nif x <= 2 && !done { y :in [0, x]; }").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|s| &s.tok).collect();
        assert!(kinds.contains(&&Tok::ColonEq));
        assert!(kinds.contains(&&Tok::ColonIn));
        assert!(kinds.contains(&&Tok::AndAnd));
        assert!(kinds.contains(&&Tok::Num("1.5".parse().unwrap())));
        assert!(!kinds.iter().any(|t| matches!(t, Tok::Slash)));
    }

    #[test]
    fn colon_in_needs_word_boundary() {
        let toks = lex("x :int").unwrap();
        assert_eq!(toks[1].tok, Tok::Colon);
        assert_eq!(toks[2].tok, Tok::Ident("int".into()));
    }

    #[test]
    fn tracks_positions() {
        let toks = lex("x\n  y").unwrap();
        assert_eq!((toks[0].line, toks[0].col), (1, 1));
        assert_eq!((toks[1].line, toks[1].col), (2, 3));
    }

    #[test]
    fn rejects_stray_characters() {
        let e = lex("x @ y").unwrap_err();
        assert_eq!(e.col, 3);
    }
}
