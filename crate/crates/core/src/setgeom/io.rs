//! Text forms of sets: vertex CSV and the block form used inside tube files.

use super::CompactSetRep;
use crate::error::{Error, Result};
use crate::grid::{parse_header, GridFunction};
use std::fmt::Write as _;

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad coordinate `{}`", t.trim()),
            })
        })
        .collect()
}

/// Vertex hull from CSV, one vertex per row; a non-numeric first row is a header.
pub fn read_vertex_csv(text: &str) -> Result<CompactSetRep> {
    let mut points = Vec::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_row(line, i + 1) {
            Ok(p) => points.push(p),
            Err(_) if first => {}
            Err(e) => return Err(e),
        }
        first = false;
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no vertices".into(),
        });
    }
    CompactSetRep::vertex_hull(points)
}

impl CompactSetRep {
    /// Block text form: `vertices n=<k> dim=<d>` followed by `k` CSV rows, or a
    /// gridfn block describing a sublevel set (oracles are written rasterised).
    pub fn to_text(&self) -> String {
        match self {
            Self::VertexHull(b) => {
                let mut s = format!("vertices n={} dim={}\n", b.len(), b.dim());
                for v in b.vertices() {
                    let row: Vec<String> = v.iter().map(|c| c.to_string()).collect();
                    let _ = writeln!(s, "{}", row.join(","));
                }
                s
            }
            Self::SublevelGrid(sl) => sl.func.to_text(None),
            Self::Oracle(o) => {
                let grid = o.raster().grid().clone();
                let f =
                    GridFunction::from_fn(grid, |x| if (o.pred)(x) { -1.0 } else { 1.0 }).expect("oracle has members");
                f.to_text(None)
            }
        }
    }

    /// Parse one block from `lines`, which yields `(line number, text)`.
    pub fn parse_block<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<Self> {
        let (hline, header) = lines
            .find(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .ok_or(Error::Parse {
                line: 0,
                msg: "missing set block".into(),
            })?;
        let header = header.trim();
        let perr = |msg: String| Error::Parse { line: hline, msg };
        if let Some(rest) = header.strip_prefix("vertices") {
            let mut n = None;
            let mut dim = None;
            for f in rest.split_whitespace() {
                match f.split_once('=') {
                    Some(("n", v)) => n = v.parse::<usize>().ok(),
                    Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                    _ => return Err(perr(format!("bad vertices field `{f}`"))),
                }
            }
            let (n, dim) = n
                .zip(dim)
                .ok_or_else(|| perr("vertices header needs n= and dim=".into()))?;
            let mut points = Vec::with_capacity(n);
            for _ in 0..n {
                let (i, l) = lines.next().ok_or_else(|| perr("truncated vertex block".into()))?;
                let p = parse_row(l.trim(), i)?;
                if p.len() != dim {
                    return Err(Error::Parse {
                        line: i,
                        msg: format!("expected {dim} coordinates"),
                    });
                }
                points.push(p);
            }
            Self::vertex_hull(points)
        } else if header.starts_with("gridfn") {
            let grid = parse_header(header).map_err(perr)?;
            let mut text = format!("{header}\n");
            let mut count = 0;
            while count < grid.len() {
                let (_, l) = lines.next().ok_or_else(|| perr("truncated gridfn block".into()))?;
                let l = l.trim();
                if l.is_empty() || l.starts_with('#') {
                    continue;
                }
                count += l.split_whitespace().count();
                text.push_str(l);
                text.push('\n');
            }
            let (f, _) = GridFunction::parse(&text)?;
            Self::sublevel(f)
        } else {
            Err(perr(format!("unknown set block `{header}`")))
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        Self::parse_block(&mut lines)
    }
}
