//! Text syntax:
//!
//! ```text
//! formula  := or
//! or       := and ('|' and)*
//! and      := until ('&' until)*
//! until    := unary ('U' interval? unary)?
//! unary    := '!' unary | ('G' | 'F') interval? unary | '(' formula ')'
//!           | 'true' | 'false' | predicate
//! interval := '[' number ',' (number | 'inf') ']'
//! predicate:= expr ('<=' | '>=') number
//! expr     := 'abs' '(' ident ')' | term (('+' | '-') term)*
//! term     := '-'? (number '*'?)? ident
//! ```
//!
//! A missing interval means `[0, inf]`.

use crate::scalar::Scalar;

use super::{Cmp, Formula, Interval, SignalExpr, StlError};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, StlError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'.'
                    || ((bytes[i] == b'-' || bytes[i] == b'+')
                        && matches!(bytes[i - 1], b'e' | b'E')))
            {
                i += 1;
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| StlError::Parse {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        let two = src.get(i..i + 2).unwrap_or("");
        let sym: &'static str = match two {
            "<=" => "<=",
            ">=" => ">=",
            _ => match c {
                '(' => "(",
                ')' => ")",
                '[' => "[",
                ']' => "]",
                ',' => ",",
                '!' => "!",
                '&' => "&",
                '|' => "|",
                '+' => "+",
                '-' => "-",
                '*' => "*",
                _ => {
                    return Err(StlError::Parse {
                        pos: start,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            },
        };
        i += sym.len();
        out.push((start, Tok::Sym(sym)));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn err<R>(&self, msg: impl Into<String>) -> Result<R, StlError> {
        Err(StlError::Parse {
            pos: self.offset(),
            msg: msg.into(),
        })
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), StlError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == k)
    }

    fn number(&mut self) -> Result<f64, StlError> {
        let neg = self.eat_sym("-");
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(if neg { -v } else { v })
            }
            Some(Tok::Ident(k)) if k == "inf" => {
                self.pos += 1;
                Ok(if neg { f64::NEG_INFINITY } else { f64::INFINITY })
            }
            _ => self.err("expected a number"),
        }
    }

    fn interval(&mut self) -> Result<Interval, StlError> {
        if !matches!(self.peek(), Some(Tok::Sym("["))) {
            return Ok(Interval::unbounded());
        }
        let at = self.offset();
        self.pos += 1;
        let a = self.number()?;
        self.expect_sym(",")?;
        let b = self.number()?;
        self.expect_sym("]")?;
        Interval::new(a, b).map_err(|e| StlError::Parse {
            pos: at,
            msg: e.to_string(),
        })
    }

    fn formula<T: Scalar>(&mut self) -> Result<Formula<T>, StlError> {
        let mut f = self.and()?;
        while self.eat_sym("|") {
            f = Formula::or(f, self.and()?);
        }
        Ok(f)
    }

    fn and<T: Scalar>(&mut self) -> Result<Formula<T>, StlError> {
        let mut f = self.until()?;
        while self.eat_sym("&") {
            f = Formula::and(f, self.until()?);
        }
        Ok(f)
    }

    fn until<T: Scalar>(&mut self) -> Result<Formula<T>, StlError> {
        let lhs = self.unary()?;
        if self.is_keyword("U") {
            self.pos += 1;
            let i = self.interval()?;
            let rhs = self.unary()?;
            return Ok(Formula::until(lhs, i, rhs));
        }
        Ok(lhs)
    }

    fn unary<T: Scalar>(&mut self) -> Result<Formula<T>, StlError> {
        if self.eat_sym("!") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.eat_sym("(") {
            let f = self.formula()?;
            self.expect_sym(")")?;
            return Ok(f);
        }
        match self.peek() {
            Some(Tok::Ident(k)) if k == "G" || k == "F" => {
                let always = k == "G";
                self.pos += 1;
                let i = self.interval()?;
                let body = self.unary()?;
                Ok(if always {
                    Formula::always(i, body)
                } else {
                    Formula::eventually(i, body)
                })
            }
            Some(Tok::Ident(k)) if k == "true" => {
                self.pos += 1;
                Ok(Formula::True)
            }
            Some(Tok::Ident(k)) if k == "false" => {
                self.pos += 1;
                Ok(Formula::not(Formula::True))
            }
            Some(_) => self.predicate(),
            None => self.err("unexpected end of input"),
        }
    }

    fn ident(&mut self) -> Result<String, StlError> {
        match self.peek().cloned() {
            Some(Tok::Ident(name)) if !["G", "F", "U", "true", "false", "inf", "abs"].contains(&name.as_str()) => {
                self.pos += 1;
                Ok(name)
            }
            _ => self.err("expected a signal name"),
        }
    }

    fn term<T: Scalar>(&mut self, negate: bool) -> Result<(String, T), StlError> {
        let mut sign = if negate { -1.0 } else { 1.0 };
        if self.eat_sym("-") {
            sign = -sign;
        }
        let mut coef = 1.0;
        if let Some(Tok::Num(v)) = self.peek().cloned() {
            self.pos += 1;
            coef = v;
            self.eat_sym("*");
        }
        let name = self.ident()?;
        Ok((name, T::of(sign * coef)))
    }

    fn predicate<T: Scalar>(&mut self) -> Result<Formula<T>, StlError> {
        let expr = if self.is_keyword("abs") {
            self.pos += 1;
            self.expect_sym("(")?;
            let name = self.ident()?;
            self.expect_sym(")")?;
            SignalExpr::Abs(name)
        } else {
            let mut terms = vec![self.term(false)?];
            loop {
                if self.eat_sym("+") {
                    terms.push(self.term(false)?);
                } else if self.eat_sym("-") {
                    terms.push(self.term(true)?);
                } else {
                    break;
                }
            }
            SignalExpr::Linear(terms)
        };
        let cmp = if self.eat_sym("<=") {
            Cmp::Le
        } else if self.eat_sym(">=") {
            Cmp::Ge
        } else {
            return self.err("expected `<=` or `>=`");
        };
        let at = self.offset();
        let v = self.number()?;
        if !v.is_finite() {
            return Err(StlError::Parse {
                pos: at,
                msg: "threshold must be finite".into(),
            });
        }
        Ok(Formula::pred(expr, cmp, T::of(v)))
    }
}

/// Parses the text syntax described in the module docs.
pub fn parse_formula<T: Scalar>(src: &str) -> Result<Formula<T>, StlError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
        end: src.len(),
    };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(f)
}
