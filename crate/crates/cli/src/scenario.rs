//! Scenario files: one JSON object per run, schema version key `spec = 1`.

use crate::CliError;
use hjbv_core::fenchel::{model_by_name, HamiltonianModel};
use hjbv_core::grid::{BoxDomain, GridFunction};
use hjbv_core::nft::ConstraintSpec;
use hjbv_core::setgeom::{read_vertex_csv, CompactSetRep, ConvexBody};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const SPEC_VERSION: u64 = 1;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Conjugate,
    Represent,
    Value,
    CheckHjb,
    Nft,
    Viability,
    Lbv,
    Compare,
}

impl Pipeline {
    pub const ALL: [Pipeline; 8] = [
        Self::Conjugate,
        Self::Represent,
        Self::Value,
        Self::CheckHjb,
        Self::Nft,
        Self::Viability,
        Self::Lbv,
        Self::Compare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Conjugate => "conjugate",
            Self::Represent => "represent",
            Self::Value => "value",
            Self::CheckHjb => "check-hjb",
            Self::Nft => "nft",
            Self::Viability => "viability",
            Self::Lbv => "lbv",
            Self::Compare => "compare",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| CliError::Validation(format!("unknown pipeline `{s}`")))
    }
}

/// Registry name or a tabulated `G(p)` file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Name(String),
    Table { gridfn: PathBuf },
}

impl ModelRef {
    pub fn build(&self) -> Result<HamiltonianModel, CliError> {
        match self {
            Self::Name(name) => model_by_name(name).map_err(|e| CliError::Validation(e.to_string())),
            Self::Table { gridfn } => {
                let (g, _) = GridFunction::load(gridfn)?;
                let name = gridfn
                    .file_stem()
                    .map_or("table".into(), |s| s.to_string_lossy().into_owned());
                Ok(HamiltonianModel::from_gridfn(name, g)?)
            }
        }
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            Self::Name(_) => Vec::new(),
            Self::Table { gridfn } => vec![gridfn],
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let Self::Table { gridfn } = self {
            *gridfn = base.join(&*gridfn);
        }
    }
}

/// A constraint or compact set: box, vertex list or vertex CSV file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box(Vec<[f64; 2]>),
    Vertices(Vec<Vec<f64>>),
    File(PathBuf),
}

impl SetSpec {
    pub fn build(&self) -> Result<CompactSetRep, CliError> {
        Ok(match self {
            Self::Box(axes) => {
                let b = BoxDomain::new(axes.iter().map(|a| a[0]).collect(), axes.iter().map(|a| a[1]).collect())?;
                ConvexBody::from_box(&b)?.into()
            }
            Self::Vertices(v) => CompactSetRep::vertex_hull(v.clone())?,
            Self::File(path) => read_vertex_csv(&read(path)?)?,
        })
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            Self::File(p) => vec![p],
            _ => Vec::new(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let Self::File(p) = self {
            *p = base.join(&*p);
        }
    }
}

/// Command-line form: `lo:hi[,lo:hi...]` for a box, anything else is a vertex CSV path.
impl FromStr for SetSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if !s.contains(':') {
            return Ok(Self::File(PathBuf::from(s)));
        }
        let axes = s
            .split(',')
            .map(|axis| {
                let (lo, hi) = axis
                    .split_once(':')
                    .ok_or_else(|| CliError::Validation(format!("bad box axis `{axis}`")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Validation(format!("`{v}`: {e}")))
                };
                Ok([parse(lo)?, parse(hi)?])
            })
            .collect::<Result<_, CliError>>()?;
        Ok(Self::Box(axes))
    }
}

/// Inline constraint description or a JSON file holding one.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ConstraintRef {
    Inline(ConstraintSpec),
    File(PathBuf),
}

impl ConstraintRef {
    pub fn load(&self) -> Result<ConstraintSpec, CliError> {
        match self {
            Self::Inline(spec) => Ok(spec.clone()),
            Self::File(path) => {
                serde_json::from_str(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
            }
        }
    }
}

/// Tube from a file or the built-in Cantor staircase on `knots` uniform knots.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TubeSource {
    File(PathBuf),
    Cantor { knots: usize },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceAt {
    #[serde(default)]
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(default = "one")]
    pub q: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateParams {
    /// Tabulated function to conjugate.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Or the `p`-slice of a model at a point.
    #[serde(default)]
    pub model: Option<ModelRef>,
    #[serde(default)]
    pub at: Option<SliceAt>,
    /// Dual spacing; defaults to the largest primal spacing.
    #[serde(default)]
    pub dual_spacing: Option<f64>,
    /// Assert the biconjugate recovers the input (convex inputs only).
    #[serde(default)]
    pub convex: bool,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentParams {
    pub model: ModelRef,
    #[serde(default)]
    pub theta_count: Option<usize>,
    #[serde(default = "default_rep_tol")]
    pub rep_tol: f64,
    #[serde(default = "default_pairs")]
    pub lipschitz_pairs: usize,
}

fn default_rep_tol() -> f64 {
    1e-6
}

fn default_pairs() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueParams {
    pub model: ModelRef,
    pub omega: SetSpec,
    pub dt: f64,
    pub dx: f64,
    /// Horizon; defaults to the one the tail bound selects.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_vanish_tol")]
    pub vanish_tol: f64,
    /// Bellman consistency budget at the sampled nodes.
    #[serde(default = "default_dp_tol")]
    pub dp_tol: f64,
    /// `(t, x...)` points whose values go into the report.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    /// Compare against the closed form (eikonal-decay only).
    #[serde(default)]
    pub closed_form_tol: Option<f64>,
    /// Check the vanishing condition; off for deliberately short horizons.
    #[serde(default = "yes")]
    pub check_vanishing: bool,
}

fn default_vanish_tol() -> f64 {
    hjbv_core::hjb::DEFAULT_VANISH_TOL
}

fn default_dp_tol() -> f64 {
    1e-9
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckHjbParams {
    pub field: PathBuf,
    pub model: ModelRef,
    /// Defaults to the field's space box.
    #[serde(default)]
    pub omega: Option<SetSpec>,
    #[serde(default)]
    pub per_axis: Option<usize>,
    #[serde(default)]
    pub directions: Option<usize>,
    #[serde(default)]
    pub constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NftParams {
    pub constraint: ConstraintRef,
    pub trajectory: PathBuf,
    pub rho: f64,
    /// Defaults to the trajectory span.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub k: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViabilityParams {
    pub tube: TubeSource,
    /// Vertices of the constant velocity set.
    pub velocities: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub t1: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_viab_tol")]
    pub viab_tol: f64,
    #[serde(default = "default_tang_tol")]
    pub tang_tol: f64,
}

fn default_viab_tol() -> f64 {
    1e-6
}

fn default_tang_tol() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbvParams {
    pub tube: TubeSource,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    /// Localizing compact; defaults to a box around the whole tube.
    #[serde(default)]
    pub compact: Option<SetSpec>,
    #[serde(default = "default_depth")]
    pub depth: u32,
    #[serde(default)]
    pub expected: Option<f64>,
    #[serde(default)]
    pub expected_tol: Option<f64>,
}

fn default_depth() -> u32 {
    hjbv_core::tubes::DEFAULT_DEPTH
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareParams {
    pub low: PathBuf,
    pub high: PathBuf,
    pub model: ModelRef,
    /// Defaults to the low field's space box.
    #[serde(default)]
    pub omega: Option<SetSpec>,
    #[serde(default = "default_vanish_tol")]
    pub vanish_tol: f64,
    #[serde(default)]
    pub comparison_tol: Option<f64>,
}

/// Parameters of the selected pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum Job {
    Conjugate(ConjugateParams),
    Represent(RepresentParams),
    Value(ValueParams),
    CheckHjb(CheckHjbParams),
    Nft(NftParams),
    Viability(ViabilityParams),
    Lbv(LbvParams),
    Compare(CompareParams),
}

impl Job {
    pub fn pipeline(&self) -> Pipeline {
        match self {
            Self::Conjugate(_) => Pipeline::Conjugate,
            Self::Represent(_) => Pipeline::Represent,
            Self::Value(_) => Pipeline::Value,
            Self::CheckHjb(_) => Pipeline::CheckHjb,
            Self::Nft(_) => Pipeline::Nft,
            Self::Viability(_) => Pipeline::Viability,
            Self::Lbv(_) => Pipeline::Lbv,
            Self::Compare(_) => Pipeline::Compare,
        }
    }

    fn parse(pipeline: Pipeline, params: Value) -> Result<Self, CliError> {
        fn typed<T: DeserializeOwned>(params: Value) -> Result<T, CliError> {
            serde_json::from_value(params).map_err(|e| CliError::Validation(format!("params: {e}")))
        }
        Ok(match pipeline {
            Pipeline::Conjugate => Self::Conjugate(typed(params)?),
            Pipeline::Represent => Self::Represent(typed(params)?),
            Pipeline::Value => Self::Value(typed(params)?),
            Pipeline::CheckHjb => Self::CheckHjb(typed(params)?),
            Pipeline::Nft => Self::Nft(typed(params)?),
            Pipeline::Viability => Self::Viability(typed(params)?),
            Pipeline::Lbv => Self::Lbv(typed(params)?),
            Pipeline::Compare => Self::Compare(typed(params)?),
        })
    }

    /// Named tolerances and step sizes; all must be strictly positive.
    fn positives(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let mut opt = |name, v: Option<f64>| {
            if let Some(v) = v {
                out.push((name, v));
            }
        };
        match self {
            Self::Conjugate(p) => opt("dual_spacing", p.dual_spacing),
            Self::Represent(p) => opt("rep_tol", Some(p.rep_tol)),
            Self::Value(p) => {
                opt("dt", Some(p.dt));
                opt("dx", Some(p.dx));
                opt("t_max", p.t_max);
                opt("vanish_tol", Some(p.vanish_tol));
                opt("dp_tol", Some(p.dp_tol));
                opt("closed_form_tol", p.closed_form_tol);
            }
            Self::CheckHjb(p) => opt("constant", p.constant),
            Self::Nft(p) => {
                opt("rho", Some(p.rho));
                opt("delta", p.delta);
                opt("k", p.k);
            }
            Self::Viability(p) => {
                opt("step", p.step);
                opt("viab_tol", Some(p.viab_tol));
                opt("tang_tol", Some(p.tang_tol));
            }
            Self::Lbv(p) => opt("expected_tol", p.expected_tol),
            Self::Compare(p) => {
                opt("vanish_tol", Some(p.vanish_tol));
                opt("comparison_tol", p.comparison_tol);
            }
        }
        out
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| *p = base.join(&*p);
        match self {
            Self::Conjugate(p) => {
                p.input.as_mut().map(join);
                if let Some(m) = &mut p.model {
                    m.resolve(base);
                }
            }
            Self::Represent(p) => p.model.resolve(base),
            Self::Value(p) => {
                p.model.resolve(base);
                p.omega.resolve(base);
            }
            Self::CheckHjb(p) => {
                join(&mut p.field);
                p.model.resolve(base);
                if let Some(o) = &mut p.omega {
                    o.resolve(base);
                }
            }
            Self::Nft(p) => {
                if let ConstraintRef::File(f) = &mut p.constraint {
                    join(f);
                }
                join(&mut p.trajectory);
            }
            Self::Viability(p) => {
                if let TubeSource::File(f) = &mut p.tube {
                    join(f);
                }
            }
            Self::Lbv(p) => {
                if let TubeSource::File(f) = &mut p.tube {
                    join(f);
                }
                if let Some(c) = &mut p.compact {
                    c.resolve(base);
                }
            }
            Self::Compare(p) => {
                join(&mut p.low);
                join(&mut p.high);
                p.model.resolve(base);
                if let Some(o) = &mut p.omega {
                    o.resolve(base);
                }
            }
        }
    }

    fn files(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        match self {
            Self::Conjugate(p) => {
                out.extend(p.input.as_deref());
                out.extend(p.model.iter().flat_map(ModelRef::files));
            }
            Self::Represent(p) => out.extend(p.model.files()),
            Self::Value(p) => {
                out.extend(p.model.files());
                out.extend(p.omega.files());
            }
            Self::CheckHjb(p) => {
                out.push(&p.field);
                out.extend(p.model.files());
                out.extend(p.omega.iter().flat_map(SetSpec::files));
            }
            Self::Nft(p) => {
                if let ConstraintRef::File(f) = &p.constraint {
                    out.push(f);
                }
                out.push(&p.trajectory);
            }
            Self::Viability(ViabilityParams {
                tube: TubeSource::File(f),
                ..
            })
            | Self::Lbv(LbvParams {
                tube: TubeSource::File(f),
                ..
            }) => out.push(f),
            Self::Viability(_) | Self::Lbv(_) => {}
            Self::Compare(p) => {
                out.push(&p.low);
                out.push(&p.high);
                out.extend(p.model.files());
                out.extend(p.omega.iter().flat_map(SetSpec::files));
            }
        }
        if let Self::Lbv(LbvParams { compact: Some(c), .. }) = self {
            out.extend(c.files());
        }
        out
    }

    fn check_shape(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Validation(m.to_string()));
        match self {
            Self::Conjugate(p) if p.input.is_some() == p.model.is_some() => {
                bad("conjugate needs exactly one of `input` and `model`")
            }
            Self::Conjugate(p) if p.model.is_some() && p.at.is_none() => bad("conjugate of a model needs `at`"),
            Self::Represent(p) if p.theta_count == Some(0) => bad("theta_count must be positive"),
            Self::Viability(p) if p.velocities.is_empty() || p.x0.is_empty() => {
                bad("viability needs velocities and x0")
            }
            Self::Lbv(p) if p.expected.is_some() != p.expected_tol.is_some() => {
                bad("`expected` and `expected_tol` go together")
            }
            _ => Ok(()),
        }
    }
}

/// Validated scenario; paths are resolved against the scenario file's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub job: Job,
    pub outputs: Outputs,
}

/// Output file names inside the output directory.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub report: Option<String>,
    #[serde(default)]
    pub timings: Option<String>,
    #[serde(default)]
    pub field: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec: u64,
    name: String,
    #[allow(dead_code)]
    pipeline: Value,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    params: Option<Value>,
    #[serde(default)]
    outputs: Outputs,
}

impl Scenario {
    /// Validated scenario built in code; paths are used as given.
    pub fn new(name: &str, seed: u64, job: Job, outputs: Outputs) -> Result<Self, CliError> {
        Self::validate(&job)?;
        Ok(Self {
            name: name.into(),
            seed,
            job,
            outputs,
        })
    }

    pub fn pipeline(&self) -> Pipeline {
        self.job.pipeline()
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses and validates; relative paths are taken from `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let invalid = |m: String| CliError::Validation(m);
        let raw: Value = if text.trim().is_empty() {
            Value::Object(Default::default())
        } else {
            serde_json::from_str(text).map_err(|e| invalid(format!("scenario is not valid JSON: {e}")))?
        };
        let obj = raw
            .as_object()
            .ok_or_else(|| invalid("scenario must be a JSON object".into()))?;
        let pipeline = match obj.get("pipeline") {
            None => return Err(invalid("missing field: pipeline".into())),
            Some(Value::String(s)) => s.parse::<Pipeline>()?,
            Some(_) => return Err(invalid("pipeline must be a string".into())),
        };
        match obj.get("spec") {
            None => return Err(invalid("missing field: spec".into())),
            Some(v) if v.as_u64() != Some(SPEC_VERSION) => {
                return Err(invalid(format!(
                    "unsupported spec version {v}, expected {SPEC_VERSION}"
                )))
            }
            _ => {}
        }
        let header: Header = serde_json::from_value(raw.clone()).map_err(|e| invalid(e.to_string()))?;
        debug_assert_eq!(header.spec, SPEC_VERSION);
        if header.name.is_empty() || header.name.contains(['/', '\\']) {
            return Err(invalid("name must be non-empty and free of path separators".into()));
        }
        let mut job = Job::parse(pipeline, header.params.unwrap_or(Value::Object(Default::default())))?;
        job.resolve(base);
        Self::validate(&job)?;
        Ok(Self {
            name: header.name,
            seed: header.seed.unwrap_or(DEFAULT_SEED),
            job,
            outputs: header.outputs,
        })
    }

    fn validate(job: &Job) -> Result<(), CliError> {
        for (name, v) in job.positives() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        for f in job.files() {
            if !f.is_file() {
                return Err(CliError::Validation(format!(
                    "referenced file does not exist: {}",
                    f.display()
                )));
            }
        }
        job.check_shape()
    }
}

pub(crate) fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
