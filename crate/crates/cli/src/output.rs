//! Deterministic CSV and JSON emission.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

/// Column-labelled table.
#[derive(Debug, Clone, Default)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Series {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Provenance stamped into every file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

/// 17 significant digits, so every value parses back exactly.
pub fn format_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_csv(series: &Series, stamp: &Stamp) -> Result<String> {
    if series.is_empty() {
        bail!("refusing to write an empty series");
    }
    let mut out = String::new();
    writeln!(out, "# config_hash={} seed={}", stamp.config_hash, stamp.seed)?;
    writeln!(out, "{}", series.columns.join(","))?;
    for row in &series.rows {
        if row.len() != series.columns.len() {
            bail!("row has {} cells, header has {}", row.len(), series.columns.len());
        }
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => format_num(*v),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s.clone(),
            })
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(out)
}

/// Writes `series` as CSV with a provenance comment line and a header row.
pub fn emit_plot_data(series: &Series, path: &Path, stamp: &Stamp) -> Result<()> {
    let text = render_csv(series, stamp)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of `body` with `config_hash` and `seed` fields added.
pub fn render_json<T: Serialize>(body: &T, stamp: &Stamp) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Stamped {
        config_hash: &stamp.config_hash,
        seed: stamp.seed,
        body,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn emit_json<T: Serialize>(body: &T, path: &Path, stamp: &Stamp) -> Result<()> {
    std::fs::write(path, render_json(body, stamp)?).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp() -> Stamp {
        Stamp {
            config_hash: "abc".into(),
            seed: 9,
        }
    }

    #[test]
    fn csv_round_trips() {
        let mut s = Series::new(&["x", "y"]);
        let values = [(0.1, 1.0 / 3.0), (2.5e-300, -7.0e12), (f64::MIN_POSITIVE, 0.0)];
        for (x, y) in values {
            s.push(vec![x.into(), y.into()]);
        }
        let text = render_csv(&s, &stamp()).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# config_hash=abc seed=9"));
        assert_eq!(lines.next(), Some("x,y"));
        for ((x, y), line) in values.iter().zip(lines) {
            let parsed: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(parsed, vec![*x, *y]);
        }
    }

    #[test]
    fn empty_series_rejected() {
        assert!(render_csv(&Series::new(&["x"]), &stamp()).is_err());
    }

    #[test]
    fn json_carries_stamp() {
        #[derive(Serialize)]
        struct Body {
            value: f64,
        }
        let v: serde_json::Value = serde_json::from_str(&render_json(&Body { value: 1.5 }, &stamp()).unwrap()).unwrap();
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["seed"], 9);
        assert_eq!(v["value"], 1.5);
    }
}
