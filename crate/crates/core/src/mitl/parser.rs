//! Concrete syntax:
//!
//! ```text
//! or    := and ('|' and)*
//! and   := until ('&' until)*
//! until := unary ('U' interval? until)?
//! unary := '!' unary | ('X' | 'F' | 'G') interval? unary | atom | 'true' | 'false' | '(' or ')'
//! interval := ('[' | '(') number ',' (number | 'inf') (']' | ')')
//! ```
//!
//! Numbers are integers, decimals or `p/q`. A missing interval means `[0,inf)`.

use thiserror::Error;

use super::ast::{Formula, Interval};
use crate::rational::{parse_rational, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at position {pos}: {message}")]
pub struct SyntaxError {
    pub pos: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Sym(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

fn lex(text: &str) -> Result<Lexer, SyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == '/') {
                i += 1;
            }
            toks.push((Tok::Number(chars[start..i].iter().collect()), start));
        } else if "!&|()[],".contains(c) {
            toks.push((Tok::Sym(c), i));
            i += 1;
        } else {
            return Err(SyntaxError { pos: i, message: format!("unexpected character {c:?}") });
        }
    }
    toks.push((Tok::End, chars.len()));
    Ok(Lexer { toks })
}

const KEYWORDS: [&str; 7] = ["X", "F", "G", "U", "true", "false", "inf"];

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { pos: self.pos(), message: message.into() })
    }

    fn expect_sym(&mut self, c: char) -> Result<(), SyntaxError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name)
    }

    fn or(&mut self) -> Result<Formula, SyntaxError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Sym('|') {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, SyntaxError> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::Sym('&') {
            self.bump();
            let rhs = self.until()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, SyntaxError> {
        let lhs = self.unary()?;
        if self.is_ident("U") {
            self.bump();
            let i = self.opt_interval()?;
            let rhs = self.until()?;
            return Ok(Formula::until(i, lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, SyntaxError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Sym('!') => Ok(Formula::not(self.unary()?)),
            Tok::Sym('(') => {
                let f = self.or()?;
                self.expect_sym(')')?;
                Ok(f)
            }
            Tok::Ident(s) => match s.as_str() {
                "X" => {
                    let i = self.opt_interval()?;
                    Ok(Formula::next(i, self.unary()?))
                }
                "F" => {
                    let i = self.opt_interval()?;
                    Ok(Formula::eventually(i, self.unary()?))
                }
                "G" => {
                    let i = self.opt_interval()?;
                    Ok(Formula::always(i, self.unary()?))
                }
                "true" => Ok(Formula::True),
                "false" => Ok(Formula::False),
                k if KEYWORDS.contains(&k) => Err(SyntaxError { pos, message: format!("unexpected keyword {k:?}") }),
                _ => Ok(Formula::Atom(s)),
            },
            Tok::End => Err(SyntaxError { pos, message: "unexpected end of input".into() }),
            t => Err(SyntaxError { pos, message: format!("unexpected token {t:?}") }),
        }
    }

    fn number(&mut self) -> Result<Rational, SyntaxError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Number(s) => parse_rational(&s).map_err(|e| SyntaxError { pos, message: e.to_string() }),
            _ => Err(SyntaxError { pos, message: "expected a number".into() }),
        }
    }

    fn opt_interval(&mut self) -> Result<Interval, SyntaxError> {
        let lower_closed = match self.peek() {
            Tok::Sym('[') => true,
            // `(` after an operator opens an interval only if a number follows
            Tok::Sym('(') if matches!(self.toks.get(self.at + 1), Some((Tok::Number(_), _))) => false,
            _ => return Ok(Interval::unbounded()),
        };
        let pos = self.pos();
        self.bump();
        let lower = self.number()?;
        self.expect_sym(',')?;
        let upper = if self.is_ident("inf") {
            self.bump();
            None
        } else {
            Some(self.number()?)
        };
        let upper_closed = match self.bump() {
            Tok::Sym(']') => true,
            Tok::Sym(')') => false,
            _ => return Err(SyntaxError { pos: self.toks[self.at.saturating_sub(1)].1, message: "expected ']' or ')'".into() }),
        };
        Interval::new(lower, upper, lower_closed, upper_closed)
            .ok_or_else(|| SyntaxError { pos, message: "empty interval".into() })
    }
}

/// Parses a formula; unknown atoms are accepted here and checked when the
/// formula is bound to a scenario.
pub fn parse(text: &str) -> Result<Formula, SyntaxError> {
    let lexer = lex(text)?;
    let mut p = Parser { toks: lexer.toks, at: 0 };
    let f = p.or()?;
    if *p.peek() != Tok::End {
        return p.err("trailing input");
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_and_keywords() {
        assert_eq!(parse("p").unwrap(), Formula::atom("p"));
        assert_eq!(parse("true").unwrap(), Formula::True);
        assert!(parse("inf").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn precedence() {
        let f = parse("a | b & c U d").unwrap();
        let expect = Formula::or(
            Formula::atom("a"),
            Formula::and(Formula::atom("b"), Formula::until(Interval::unbounded(), Formula::atom("c"), Formula::atom("d"))),
        );
        assert_eq!(f, expect);
        let f = parse("a U b U c").unwrap();
        assert_eq!(f.to_string(), "(a U[0,inf) (b U[0,inf) c))");
        assert_eq!(parse("!F p").unwrap(), Formula::not(Formula::eventually(Interval::unbounded(), Formula::atom("p"))));
    }

    #[test]
    fn intervals() {
        let f = parse("F(0,3) p").unwrap();
        assert_eq!(f.to_string(), "F(0,3)(p)");
        assert_eq!(parse("F[17.3, 173/10] p").unwrap().to_string(), "F[173/10,173/10](p)");
        assert_eq!(parse("G[0,inf](p)").unwrap().to_string(), "G[0,inf)(p)");
        // `(` followed by a formula is grouping, not an interval
        assert_eq!(parse("F (p)").unwrap(), parse("F p").unwrap());
        let e = parse("F[3,2] p").unwrap_err();
        assert_eq!(e.pos, 1);
        assert!(parse("F(2,2) p").is_err());
        assert!(parse("F[2,2] p").is_ok());
    }

    #[test]
    fn error_positions() {
        let e = parse("p & ").unwrap_err();
        assert_eq!(e.pos, 4);
        let e = parse("p $ q").unwrap_err();
        assert_eq!(e.pos, 2);
        let e = parse("(p & q").unwrap_err();
        assert_eq!(e.pos, 6);
    }

    #[test]
    fn paper_task_formula() {
        let f = parse("G[0,inf](!obs1 & !obs2 & !obs3 & !obs4) & F[30,50] mission2 & F[80,110] mission1").unwrap();
        assert_eq!(f.atoms().len(), 6);
        assert_eq!(f.max_constant(), Rational::from_integer(110));
        assert_eq!(
            f.to_string(),
            "((G[0,inf)((((!(obs1) & !(obs2)) & !(obs3)) & !(obs4))) & F[30,50](mission2)) & F[80,110](mission1))"
        );
        assert_eq!(parse(&f.to_string()).unwrap(), f);
    }
}
