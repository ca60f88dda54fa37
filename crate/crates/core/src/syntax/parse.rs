//! Lexer and s-expression reader.
//!
//! Produces a `Datum` tree with source spans; lowering to interned core
//! expressions happens in [`super::lower`].

use num::bigint::BigInt;
use num::rational::Ratio;
use num::BigRational;

use super::types::Span;
use crate::error::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum DatumKind {
    Bool(bool),
    Num(BigRational),
    Sym(String),
    Str(String),
    List(Vec<Datum>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    pub kind: DatumKind,
    pub span: Span,
}

/// Line/column (1-based) of a byte offset in `text`.
pub fn line_col(text: &str, offset: usize) -> (u32, u32) {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in text.char_indices() {
        if i >= offset {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

struct Reader<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    source: u16,
}

impl<'a> Reader<'a> {
    fn err(&self, at: usize, msg: impl Into<String>) -> SyntaxError {
        let (line, col) = line_col(self.text, at);
        SyntaxError {
            message: msg.into(),
            line,
            col,
        }
    }

    fn skip_atmosphere(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b';' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_datum(&mut self) -> Result<Datum, SyntaxError> {
        self.skip_atmosphere();
        let start = self.pos;
        if self.pos >= self.bytes.len() {
            return Err(self.err(start, "unexpected end of input"));
        }
        match self.bytes[self.pos] {
            b'(' | b'[' => self.read_list(),
            b')' | b']' => Err(self.err(start, "unexpected closing delimiter")),
            b'\'' => {
                self.pos += 1;
                let inner = self.read_datum()?;
                let span = Span::new(self.source, start, inner.span.end as usize);
                Ok(Datum {
                    kind: DatumKind::List(vec![
                        Datum {
                            kind: DatumKind::Sym("quote".to_owned()),
                            span: Span::new(self.source, start, start + 1),
                        },
                        inner,
                    ]),
                    span,
                })
            }
            b'"' => self.read_string(),
            _ => self.read_atom(),
        }
    }

    fn read_list(&mut self) -> Result<Datum, SyntaxError> {
        let start = self.pos;
        let open = self.bytes[self.pos];
        let close = if open == b'(' { b')' } else { b']' };
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_atmosphere();
            if self.pos >= self.bytes.len() {
                return Err(self.err(start, "unbalanced parenthesis: no matching close"));
            }
            let c = self.bytes[self.pos];
            if c == b')' || c == b']' {
                if c != close {
                    return Err(self.err(self.pos, "mismatched bracket kind"));
                }
                self.pos += 1;
                return Ok(Datum {
                    kind: DatumKind::List(items),
                    span: Span::new(self.source, start, self.pos),
                });
            }
            items.push(self.read_datum()?);
        }
    }

    fn read_string(&mut self) -> Result<Datum, SyntaxError> {
        let start = self.pos;
        self.pos += 1;
        let mut s = String::new();
        loop {
            if self.pos >= self.bytes.len() {
                return Err(self.err(start, "unterminated string literal"));
            }
            match self.bytes[self.pos] {
                b'"' => {
                    self.pos += 1;
                    return Ok(Datum {
                        kind: DatumKind::Str(s),
                        span: Span::new(self.source, start, self.pos),
                    });
                }
                b'\\' => {
                    self.pos += 1;
                    if self.pos >= self.bytes.len() {
                        return Err(self.err(start, "unterminated string escape"));
                    }
                    match self.bytes[self.pos] {
                        b'"' => s.push('"'),
                        b'\\' => s.push('\\'),
                        b'n' => s.push('\n'),
                        b't' => s.push('\t'),
                        other => {
                            return Err(
                                self.err(self.pos, format!("bad escape \\{}", other as char))
                            )
                        }
                    }
                    self.pos += 1;
                }
                _ => {
                    // advance one full char
                    let rest = &self.text[self.pos..];
                    let c = rest.chars().next().unwrap();
                    s.push(c);
                    self.pos += c.len_utf8();
                }
            }
        }
    }

    fn read_atom(&mut self) -> Result<Datum, SyntaxError> {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' | b'(' | b')' | b'[' | b']' | b';' | b'"' | b'\'' => {
                    break
                }
                _ => self.pos += 1,
            }
        }
        let text = &self.text[start..self.pos];
        let span = Span::new(self.source, start, self.pos);
        let kind = classify_atom(text)
            .ok_or_else(|| self.err(start, format!("cannot read atom `{text}`")))?;
        Ok(Datum { kind, span })
    }
}

fn classify_atom(text: &str) -> Option<DatumKind> {
    match text {
        "#t" => return Some(DatumKind::Bool(true)),
        "#f" => return Some(DatumKind::Bool(false)),
        "true" => return Some(DatumKind::Bool(true)),
        "false" => return Some(DatumKind::Bool(false)),
        _ => {}
    }
    if let Some(n) = parse_number(text) {
        return Some(DatumKind::Num(n));
    }
    // '#' is reserved for booleans; a symbol may not contain it
    if text.contains('#') || text.is_empty() {
        return None;
    }
    Some(DatumKind::Sym(text.to_owned()))
}

/// Exact-rational number syntax: `5`, `-3`, `0.25`, `.6`, `1/3`.
pub fn parse_number(text: &str) -> Option<BigRational> {
    let (sign, rest) = match text.as_bytes().first()? {
        b'+' => (1, &text[1..]),
        b'-' => (-1, &text[1..]),
        _ => (1, text),
    };
    if rest.is_empty() {
        return None;
    }
    let apply = |r: BigRational| if sign < 0 { -r } else { r };
    if let Some((num, den)) = rest.split_once('/') {
        if num.is_empty() || den.is_empty() {
            return None;
        }
        if !num.bytes().all(|b| b.is_ascii_digit()) || !den.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let n: BigInt = num.parse().ok()?;
        let d: BigInt = den.parse().ok()?;
        if d == BigInt::from(0) {
            return None;
        }
        return Some(apply(Ratio::new(n, d)));
    }
    if let Some((int, frac)) = rest.split_once('.') {
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let int_part: BigInt = if int.is_empty() {
            BigInt::from(0)
        } else {
            int.parse().ok()?
        };
        let frac_part: BigInt = if frac.is_empty() {
            BigInt::from(0)
        } else {
            frac.parse().ok()?
        };
        let scale = BigInt::from(10).pow(frac.len() as u32);
        return Some(apply(Ratio::new(int_part * &scale + frac_part, scale)));
    }
    if !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: BigInt = rest.parse().ok()?;
    Some(apply(Ratio::from_integer(n)))
}

/// Read every datum in `text`. `source` tags the spans for error reporting.
pub fn read_forms(text: &str, source: u16) -> Result<Vec<Datum>, SyntaxError> {
    let mut r = Reader {
        text,
        bytes: text.as_bytes(),
        pos: 0,
        source,
    };
    let mut forms = Vec::new();
    loop {
        r.skip_atmosphere();
        if r.pos >= r.bytes.len() {
            return Ok(forms);
        }
        forms.push(r.read_datum()?);
    }
}
