//! CSV output with fixed float formatting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Significant digits of every emitted float.
pub const SIG_DIGITS: usize = 12;

/// Formats `x` with [`SIG_DIGITS`] significant digits, dropping trailing
/// zeros but keeping one decimal. Values with a decimal exponent outside
/// `[-5, 15)` use scientific notation.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.0".to_string();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.push('0');
        }
    } else {
        s.push_str(".0");
    }
    s
}

/// A cell of a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Float(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt_float(*x),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Writes a header and rows. Cells never contain commas, so no quoting is
/// needed.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<Cell>]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}

/// Ordered `key,value` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    rows: Vec<(String, Cell)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<Cell>) {
        self.rows.push((key.into(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.rows.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let rows: Vec<Vec<Cell>> = self
            .rows
            .iter()
            .map(|(k, v)| vec![Cell::Text(k.clone()), v.clone()])
            .collect();
        write_table(path, &["key".to_string(), "value".to_string()], &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formatting() {
        assert_eq!(fmt_float(2.0), "2.0");
        assert_eq!(fmt_float(0.0), "0.0");
        assert_eq!(fmt_float(4.0 / 3.0), "1.33333333333");
        assert_eq!(fmt_float(-0.125), "-0.125");
        assert_eq!(fmt_float(1.999_999_999_999_9), "2.0");
        assert_eq!(fmt_float(123456.0), "123456.0");
        assert_eq!(fmt_float(1e-7), "1.0e-7");
        assert_eq!(fmt_float(2.5e20), "2.5e20");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
    }

    proptest! {
        #[test]
        fn twelve_digits_round_trip(x in -1e12f64..1e12) {
            let y: f64 = fmt_float(x).parse().unwrap();
            prop_assert!((x - y).abs() <= 1e-11 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn report_writes_rows_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new();
        r.push("gamma_l1", 2.0);
        r.push("stable", true);
        r.push("modes", 1usize);
        let path = dir.path().join("report.csv");
        r.write(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "key,value\ngamma_l1,2.0\nstable,true\nmodes,1\n");
    }
}
