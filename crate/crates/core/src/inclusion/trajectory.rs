use crate::error::{invalid, Error, Result};
use crate::linalg::{dist, lerp, norm, scale, sub};
use std::path::Path;

/// Polygonal arc: states at strictly increasing times, linear in between.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(invalid("trajectory needs one state per time and at least one node"));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(invalid(format!(
                "trajectory times not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        let d = states[0].len();
        if d == 0 || states.iter().any(|s| s.len() != d || s.iter().any(|v| !v.is_finite())) {
            return Err(invalid("trajectory states must be finite and of equal dimension"));
        }
        Ok(Self { times, states })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> (f64, &[f64]) {
        (self.times[0], &self.states[0])
    }

    pub fn end(&self) -> (f64, &[f64]) {
        let n = self.len() - 1;
        (self.times[n], &self.states[n])
    }

    /// Constant derivative on interval `i` (between nodes `i` and `i+1`).
    pub fn derivative(&self, i: usize) -> Vec<f64> {
        scale(
            &sub(&self.states[i + 1], &self.states[i]),
            1.0 / (self.times[i + 1] - self.times[i]),
        )
    }

    pub fn step(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// Linear interpolation, clamped to the time range.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return self.states[0].clone();
        }
        if i == self.len() {
            return self.states[self.len() - 1].clone();
        }
        let s = (t - self.times[i - 1]) / (self.times[i] - self.times[i - 1]);
        lerp(&self.states[i - 1], &self.states[i], s)
    }

    /// `|x(t0)| + sum |x(t_{i+1}) - x(t_i)|`.
    pub fn w11_norm(&self) -> f64 {
        norm(&self.states[0]) + self.states.windows(2).map(|w| dist(&w[1], &w[0])).sum::<f64>()
    }

    /// W^{1,1} norm of the difference, node by node; `upto` limits the last node.
    pub fn w11_distance_upto(&self, other: &Trajectory, upto: usize) -> Result<f64> {
        self.check_same_times(other)?;
        let diff: Vec<Vec<f64>> = self.states[..=upto]
            .iter()
            .zip(&other.states)
            .map(|(a, b)| sub(a, b))
            .collect();
        Ok(norm(&diff[0]) + diff.windows(2).map(|w| dist(&w[1], &w[0])).sum::<f64>())
    }

    pub fn w11_distance(&self, other: &Trajectory) -> Result<f64> {
        self.w11_distance_upto(other, self.len() - 1)
    }

    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        self.check_same_times(other)?;
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| dist(a, b))
            .fold(0.0, f64::max))
    }

    fn check_same_times(&self, other: &Trajectory) -> Result<()> {
        if self.times.len() != other.times.len()
            || self
                .times
                .iter()
                .zip(&other.times)
                .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
        {
            return Err(invalid("trajectories are sampled at different times"));
        }
        Ok(())
    }

    /// CSV with header `t,x1,...,xd`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("x{k}")));
        w.write_record(&header).expect("in-memory write");
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(s.iter().map(|v| v.to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let d = header.len().saturating_sub(1);
        let expected: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|k| format!("x{k}")))
            .collect();
        if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{}`", expected.join(",")),
            });
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        msg: format!("`{s}`: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            times.push(vals[0]);
            states.push(vals[1..].to_vec());
        }
        Self::new(times, states)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}
