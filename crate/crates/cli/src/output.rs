//! Deterministic CSV emission.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// `%g`-style rendering with `digits` significant digits.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Cell of a CSV row.
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u8> for Cell {
    fn from(v: u8) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &'static [&'static str]) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self, digits: usize) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => fmt_sig(*v, digits),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path, name: &str, digits: usize) -> anyhow::Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, self.render(digits)).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0, 9), "0");
        assert_eq!(fmt_sig(-365.736668088, 9), "-365.736668");
        assert_eq!(fmt_sig(1.0, 9), "1");
        assert_eq!(fmt_sig(200.0, 9), "200");
        assert_eq!(fmt_sig(0.00123456789123, 9), "0.00123456789");
        assert_eq!(fmt_sig(7.5606759e11, 9), "7.5606759e11");
        assert_eq!(fmt_sig(1.5e-7, 9), "1.5e-7");
        assert_eq!(fmt_sig(123456789.4, 9), "123456789");
        assert_eq!(fmt_sig(999999999.7, 9), "1e9");
    }

    #[test]
    fn table_renders_header_and_rows() {
        let mut t = Table::new(&["a", "b"]);
        assert_eq!(t.render(9), "a,b\n");
        t.push(vec![1usize.into(), 0.5.into()]);
        assert_eq!(t.render(9), "a,b\n1,0.5\n");
    }
}
