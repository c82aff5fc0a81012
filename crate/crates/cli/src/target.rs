//! Text form of multilinear targets: `2*x1 - x2 + 0.5 * x1*x2*x3 + 1`.
//!
//! ```text
//! expr := ["+" | "-"] term (("+" | "-") term)*
//! term := number | [number "*"] var ("*" var)*
//! var  := "x" digits          (1-based)
//! ```
//!
//! Whitespace is ignored between tokens. A variable may appear only once per
//! term since targets are multilinear.

use irkm_core::orthopoly::FourierPolynomial;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TargetError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("variable x{var} repeated within one term (byte {offset})")]
    DuplicateVariable { var: usize, offset: usize },
    #[error("variable x{var} exceeds the dimension d = {dim}")]
    OutOfRange { var: usize, dim: usize },
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> TargetError {
        TargetError::Parse {
            offset,
            message: message.into(),
        }
    }

    fn number(&mut self) -> Result<f64, TargetError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        let mut seen_exp = false;
        while end < bytes.len() {
            let b = bytes[end];
            let ok = b.is_ascii_digit()
                || b == b'.'
                || (!seen_exp && (b == b'e' || b == b'E') && end > start)
                || ((b == b'+' || b == b'-') && end > start && matches!(bytes[end - 1], b'e' | b'E'));
            if !ok {
                break;
            }
            if b == b'e' || b == b'E' {
                seen_exp = true;
            }
            end += 1;
        }
        let text = &self.src[start..end];
        let v = text.parse::<f64>().map_err(|_| self.err(start, format!("invalid number {text:?}")))?;
        self.pos = end;
        Ok(v)
    }

    fn var(&mut self) -> Result<(usize, usize), TargetError> {
        self.skip_ws();
        let start = self.pos;
        if self.bump() != Some('x') {
            return Err(self.err(start, "expected a variable such as x1"));
        }
        let digits_start = self.pos;
        let digits: String = self.src[digits_start..].chars().take_while(char::is_ascii_digit).collect();
        if digits.is_empty() {
            return Err(self.err(digits_start, "expected digits after 'x'"));
        }
        self.pos += digits.len();
        let idx: usize = digits.parse().map_err(|_| self.err(digits_start, "variable index too large"))?;
        if idx == 0 {
            return Err(self.err(start, "variables are numbered from x1"));
        }
        Ok((idx, start))
    }
}

/// A parsed term: coefficient and 1-based variables.
type Term = (f64, Vec<usize>);

fn parse_terms(text: &str) -> Result<Vec<Term>, TargetError> {
    let mut lx = Lexer { src: text, pos: 0 };
    let mut terms = Vec::new();
    let mut first = true;
    loop {
        let mut sign = 1.0;
        match lx.peek() {
            None if first => return Err(lx.err(lx.pos, "empty expression")),
            None => return Err(lx.err(lx.pos, "expected a term after the operator")),
            Some('+') => {
                lx.bump();
            }
            Some('-') | Some('−') => {
                lx.bump();
                sign = -1.0;
            }
            Some(_) if !first => unreachable!(),
            Some(_) => {}
        }
        first = false;

        let mut coef = 1.0;
        let mut vars: Vec<usize> = Vec::new();
        match lx.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => {
                coef = lx.number()?;
                if lx.peek() == Some('*') {
                    lx.bump();
                    let (v, _) = lx.var()?;
                    vars.push(v);
                }
            }
            Some('x') => {
                let (v, _) = lx.var()?;
                vars.push(v);
            }
            Some(_) => return Err(lx.err(lx.pos, "expected a coefficient or a variable")),
            None => return Err(lx.err(lx.pos, "expected a term")),
        }
        if !vars.is_empty() {
            while lx.peek() == Some('*') {
                lx.bump();
                let (v, at) = lx.var()?;
                if vars.contains(&v) {
                    return Err(TargetError::DuplicateVariable { var: v, offset: at });
                }
                vars.push(v);
            }
        }
        terms.push((sign * coef, vars));

        match lx.peek() {
            None => return Ok(terms),
            Some('+') | Some('-') | Some('−') => {}
            Some(c) => return Err(lx.err(lx.pos, format!("unexpected character {c:?}"))),
        }
    }
}

/// Parses `text` into a polynomial on `R^dim`.
pub fn parse_target(text: &str, dim: usize) -> Result<FourierPolynomial, TargetError> {
    let terms = parse_terms(text)?;
    let mut f = FourierPolynomial::zero(dim);
    for (coef, vars) in terms {
        if let Some(&var) = vars.iter().find(|&&v| v > dim) {
            return Err(TargetError::OutOfRange { var, dim });
        }
        let set: Vec<usize> = vars.iter().map(|v| v - 1).collect();
        f.add_term(&set, coef).expect("indices validated");
    }
    Ok(f)
}

/// Parses `text` with the dimension set to the largest variable index.
pub fn parse_target_auto(text: &str) -> Result<FourierPolynomial, TargetError> {
    let dim = parse_terms(text)?
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .max()
        .unwrap_or(0);
    parse_target(text, dim)
}
