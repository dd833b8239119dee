//! Long-format CSV tables for plotting.

use crate::scenario::read;
use crate::CliError;
use hjbv_core::grid::GridFunction;
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File stem suffix: `<scenario>.<name>.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| fmt_cell(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// `(t, x..., value)` rows of a field whose axis 0 is time.
    pub fn field(name: &str, f: &GridFunction) -> Result<Self, CliError> {
        let g = f.grid();
        if g.dim() < 2 {
            return Err(CliError::Validation(
                "a field needs a time axis and a space axis".into(),
            ));
        }
        let mut header = vec!["t".to_string()];
        header.extend(if g.dim() == 2 {
            vec!["x".to_string()]
        } else {
            (1..g.dim()).map(|k| format!("x{k}")).collect()
        });
        header.push("value".into());
        let rows = g
            .nodes()
            .zip(f.values())
            .map(|(mut p, v)| {
                p.push(*v);
                p
            })
            .collect();
        Ok(Self {
            name: name.into(),
            header,
            rows,
        })
    }

    /// `(a, b)` pairs stored as a JSON array of two-element arrays.
    fn from_pairs(name: &str, header: &[&str], pairs: &Value) -> Result<Self, CliError> {
        let bad = || CliError::Validation(format!("report metric for `{name}` is not a list of rows"));
        let mut t = Self::new(name, header);
        for row in pairs.as_array().ok_or_else(bad)? {
            let cells = row.as_array().ok_or_else(bad)?;
            let vals: Vec<f64> = cells.iter().map(cell_value).collect::<Option<_>>().ok_or_else(bad)?;
            if vals.len() != header.len() {
                return Err(bad());
            }
            t.rows.push(vals);
        }
        Ok(t)
    }
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

fn cell_value(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            _ => None,
        },
        _ => None,
    }
}

/// Tables derivable from a report JSON or a gridfn field, written to `out_dir`.
pub fn emit_plot_tables(input: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let text = read(input)?;
    let stem = input
        .file_name()
        .map_or("input".into(), |s| s.to_string_lossy().into_owned());
    let stem = stem
        .trim_end_matches(".json")
        .trim_end_matches(".report")
        .trim_end_matches(".gridfn")
        .to_string();
    let tables = if let Ok(report) = serde_json::from_str::<Value>(&text) {
        report_tables(&report, input.parent().unwrap_or(Path::new(".")))?
    } else if text.trim_start().starts_with("gridfn") {
        let (f, _) = GridFunction::parse(&text)?;
        vec![Table::field("field", &f)?]
    } else {
        return Err(CliError::Validation(format!("unknown input kind: {}", input.display())));
    };
    std::fs::create_dir_all(out_dir)?;
    let mut out = Vec::new();
    for t in tables {
        let path = out_dir.join(format!("{stem}.{}.csv", t.name));
        t.write(&path)?;
        out.push(path);
    }
    Ok(out)
}

fn report_tables(report: &Value, dir: &Path) -> Result<Vec<Table>, CliError> {
    let unknown = || CliError::Validation("unknown input kind: JSON is not a report with plot data".into());
    let pipeline = report.get("pipeline").and_then(Value::as_str).ok_or_else(unknown)?;
    let metrics = report.get("metrics").ok_or_else(unknown)?;
    match pipeline {
        "nft" => Ok(vec![Table::from_pairs(
            "margins",
            &["t", "margin", "signed_distance"],
            metrics.get("margins").ok_or_else(unknown)?,
        )?]),
        "lbv" => Ok(vec![Table::from_pairs(
            "lbv",
            &["depth", "variation"],
            metrics.get("curve").ok_or_else(unknown)?,
        )?]),
        "value" => {
            let name = metrics.get("field").and_then(Value::as_str).ok_or_else(unknown)?;
            let (f, _) = GridFunction::load(&dir.join(name))?;
            Ok(vec![Table::field("field", &f)?])
        }
        _ => Err(unknown()),
    }
}
