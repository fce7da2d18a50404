//! Command-line literals and CSV output.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

/// A complex number written `a+bi`, `a`, `bi`, or `-i`; no whitespace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cx(pub Complex64);

impl FromStr for Cx {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        parse_complex(text).map(Cx)
    }
}

impl fmt::Display for Cx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_complex(self.0))
    }
}

impl Serialize for Cx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_complex(self.0))
    }
}

pub fn parse_complex(text: &str) -> Result<Complex64, String> {
    let bad = || format!("cannot read {text:?} as a complex number of the form a+bi");
    if text.is_empty() || text.chars().any(char::is_whitespace) {
        return Err(bad());
    }
    let real = |t: &str| -> Result<f64, String> {
        let x: f64 = t.parse().map_err(|_| bad())?;
        if x.is_finite() { Ok(x) } else { Err(bad()) }
    };
    let Some(body) = text.strip_suffix('i') else {
        return Ok(Complex64::new(real(text)?, 0.0));
    };
    let imag = |t: &str| -> Result<f64, String> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => real(t),
        }
    };
    // The real/imaginary split is the last sign not opening an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    match split {
        Some(i) => Ok(Complex64::new(real(&body[..i])?, imag(&body[i..])?)),
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

/// Shortest round-trip form, parseable by [`parse_complex`].
pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        return format!("{}", z.re);
    }
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", z.re, sign, z.im.abs())
}

/// `a..b` with integer or real ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span<T>(pub T, pub T);

impl<T: FromStr + PartialOrd + Copy> FromStr for Span<T> {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let bad = || format!("cannot read {text:?} as a range a..b");
        let (a, b) = text.split_once("..").ok_or_else(bad)?;
        let a: T = a.parse().map_err(|_| bad())?;
        let b: T = b.parse().map_err(|_| bad())?;
        if a > b {
            return Err(format!("empty range {text:?}"));
        }
        Ok(Span(a, b))
    }
}

impl<T: fmt::Display> fmt::Display for Span<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.0, self.1)
    }
}

impl<T: fmt::Display> Serialize for Span<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// C-style `%.6e`: `-1.234560e-03`.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // Negative zero prints as zero.
    let x = if x == 0.0 { 0.0 } else { x };
    let text = format!("{x:.6e}");
    let (mantissa, exp) = text.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

/// One CSV cell.
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<i64> for Cell {
    fn from(n: i64) -> Self {
        Cell::I(n)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::I(n as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::S(s)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::F(x) => f.write_str(&sci(*x)),
            Cell::I(n) => write!(f, "{n}"),
            Cell::S(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

/// A CSV document: config comment line, header, rows; LF line ends.
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(config: &str, columns: &[&str]) -> Self {
        let mut text = format!("# {config}\n");
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text, width: columns.len() }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.width);
        let line: Vec<String> = cells.iter().map(ToString::to_string).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals() {
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(parse_complex("1+0.2i").unwrap(), c(1.0, 0.2));
        assert_eq!(parse_complex("-0.502881648-0.650433326i").unwrap(), c(-0.502881648, -0.650433326));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("2.5").unwrap(), c(2.5, 0.0));
        assert_eq!(parse_complex("1e-3-2E+1i").unwrap(), c(1e-3, -20.0));
        assert_eq!(parse_complex("3i").unwrap(), c(0.0, 3.0));
        assert!(parse_complex("1 + 2i").is_err());
        assert!(parse_complex("1+2j").is_err());
        assert!(parse_complex("").is_err());
    }

    #[test]
    fn scientific() {
        assert_eq!(sci(-0.0436412), "-4.364120e-02");
        assert_eq!(sci(1.0), "1.000000e+00");
        assert_eq!(sci(6.02e123), "6.020000e+123");
    }
}
