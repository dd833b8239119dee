//! Machine-readable run reports. Wall-clock timings live in a separate file so
//! reports of identical runs are byte-identical.

use crate::CliError;
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::path::Path;
use std::time::Instant;

/// JSON number, or a string for non-finite values.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().copied().map(num).collect())
}

/// Location and message of a failed invariant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub invariant: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
}

impl Witness {
    pub fn new(invariant: &str, message: impl Into<String>) -> Self {
        Self {
            invariant: invariant.into(),
            message: message.into(),
            t: None,
            x: None,
        }
    }

    pub fn at(self, t: f64, x: &[f64]) -> Self {
        Self {
            t: Some(t).filter(|t| t.is_finite()),
            ..self.point(x)
        }
    }

    pub fn point(mut self, x: &[f64]) -> Self {
        self.x = Some(x.to_vec()).filter(|x| x.iter().all(|v| v.is_finite()));
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub pipeline: String,
    pub pass: bool,
    pub metrics: Map<String, Value>,
    pub witnesses: Vec<Witness>,
    /// File name of the timings written next to the report.
    pub timings: String,
}

impl Report {
    pub fn new(scenario: &str, pipeline: &str, timings: &str) -> Self {
        let mut metrics = Map::new();
        metrics.insert("invariants".into(), Value::Object(Map::new()));
        Self {
            scenario: scenario.into(),
            pipeline: pipeline.into(),
            pass: true,
            metrics,
            witnesses: Vec::new(),
            timings: timings.into(),
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.into(), value.into());
    }

    pub fn metric_f64(&mut self, key: &str, value: f64) {
        self.metric(key, num(value));
    }

    /// Records an invariant; a failure adds the witness built by `witness`.
    pub fn check(&mut self, invariant: &str, ok: bool, witness: impl FnOnce() -> Witness) {
        if let Some(Value::Object(inv)) = self.metrics.get_mut("invariants") {
            let prev = inv.get(invariant).and_then(Value::as_bool).unwrap_or(true);
            inv.insert(invariant.into(), Value::Bool(prev && ok));
        }
        if !ok {
            self.pass = false;
            self.witnesses.push(witness());
        }
    }

    pub fn fail(&mut self, invariant: &str, message: impl Into<String>) {
        let message = message.into();
        self.check(invariant, false, || Witness::new(invariant, message));
    }

    pub fn invariant(&self, name: &str) -> Option<bool> {
        self.metrics.get("invariants")?.get(name)?.as_bool()
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Named wall-clock stages.
#[derive(Debug)]
pub struct Timings {
    start: Instant,
    last: Instant,
    stages: Map<String, Value>,
}

impl Default for Timings {
    fn default() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            stages: Map::new(),
        }
    }
}

impl Timings {
    /// Closes the stage that started at the previous mark.
    pub fn mark(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.insert(stage.into(), json!((now - self.last).as_secs_f64()));
        self.last = now;
    }

    pub fn write(&self, path: &Path, scenario: &str, pipeline: &str) -> Result<(), CliError> {
        let doc = json!({
            "scenario": scenario,
            "pipeline": pipeline,
            "total_seconds": self.start.elapsed().as_secs_f64(),
            "stages": self.stages,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }
}
