use super::conjugate;
use crate::error::{invalid, Error, Result};
use crate::grid::{BoxDomain, Grid, GridFunction};
use crate::linalg::norm;
use std::fmt;
use std::sync::Arc;

/// A nonnegative function of time.
pub type Modulus = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

type Evaluator = Arc<dyn Fn(f64, &[f64], &[f64], f64) -> f64 + Send + Sync>;

/// Names accepted by [`model_by_name`].
pub const MODEL_NAMES: &[&str] = &["eikonal-decay", "norm-h", "half-square", "square"];

/// Boxes and resolutions on which `H(t,x,.,q)` is tabulated and conjugated.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugationPlan {
    pub primal: BoxDomain,
    pub primal_res: Vec<usize>,
    pub dual: BoxDomain,
    pub dual_res: Vec<usize>,
}

impl ConjugationPlan {
    pub fn symmetric(dim: usize, primal_half: f64, primal_res: usize, dual_half: f64, dual_res: usize) -> Result<Self> {
        Ok(Self {
            primal: BoxDomain::symmetric(&vec![primal_half; dim])?,
            primal_res: vec![primal_res; dim],
            dual: BoxDomain::symmetric(&vec![dual_half; dim])?,
            dual_res: vec![dual_res; dim],
        })
    }

    pub fn dual_spacing(&self) -> f64 {
        (0..self.dual.dim())
            .map(|k| (self.dual.upper()[k] - self.dual.lower()[k]) / (self.dual_res[k] - 1) as f64)
            .fold(0.0, f64::max)
    }
}

/// Hamiltonian `H(t,x,p,q)` with its structural moduli and flags.
#[derive(Clone)]
pub struct HamiltonianModel {
    name: String,
    dim: usize,
    eval: Evaluator,
    sigma_x: Modulus,
    sigma_p: Modulus,
    sigma_hat: Modulus,
    sigma_bdr: Modulus,
    convex_in_p: bool,
    homogeneous: bool,
    plan: ConjugationPlan,
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("convex_in_p", &self.convex_in_p)
            .field("homogeneous", &self.homogeneous)
            .finish()
    }
}

fn constant(c: f64) -> Modulus {
    Arc::new(move |_| c)
}

impl HamiltonianModel {
    /// Model with zero moduli and both flags set; refine with the `with_*` builders.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        eval: impl Fn(f64, &[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
        plan: ConjugationPlan,
    ) -> Result<Self> {
        if dim == 0 || plan.primal.dim() != dim || plan.dual.dim() != dim {
            return Err(invalid("model dimension disagrees with its conjugation plan"));
        }
        Ok(Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            sigma_x: constant(0.0),
            sigma_p: constant(0.0),
            sigma_hat: constant(0.0),
            sigma_bdr: constant(0.0),
            convex_in_p: true,
            homogeneous: true,
            plan,
        })
    }

    /// Set `sigma_X, sigma_P, sigma_hat, sigma_bdr`; each must be nonnegative on sampled times.
    pub fn with_moduli(
        mut self,
        sigma_x: Modulus,
        sigma_p: Modulus,
        sigma_hat: Modulus,
        sigma_bdr: Modulus,
    ) -> Result<Self> {
        for (label, m) in [
            ("sigma_x", &sigma_x),
            ("sigma_p", &sigma_p),
            ("sigma_hat", &sigma_hat),
            ("sigma_bdr", &sigma_bdr),
        ] {
            if let Some(t) = (0..=200).map(|i| i as f64 * 0.1).find(|&t| !(m(t) >= 0.0)) {
                return Err(invalid(format!("{label} is negative or undefined at t={t}")));
            }
        }
        self.sigma_x = sigma_x;
        self.sigma_p = sigma_p;
        self.sigma_hat = sigma_hat;
        self.sigma_bdr = sigma_bdr;
        Ok(self)
    }

    pub fn with_flags(mut self, convex_in_p: bool, homogeneous: bool) -> Self {
        self.convex_in_p = convex_in_p;
        self.homogeneous = homogeneous;
        self
    }

    pub fn with_plan(mut self, plan: ConjugationPlan) -> Result<Self> {
        if plan.primal.dim() != self.dim || plan.dual.dim() != self.dim {
            return Err(invalid("plan dimension disagrees with the model"));
        }
        self.plan = plan;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self, t: f64, x: &[f64], p: &[f64], q: f64) -> f64 {
        (self.eval)(t, x, p, q)
    }

    pub fn sigma_x(&self, t: f64) -> f64 {
        (self.sigma_x)(t)
    }

    pub fn sigma_p(&self, t: f64) -> f64 {
        (self.sigma_p)(t)
    }

    pub fn sigma_hat(&self, t: f64) -> f64 {
        (self.sigma_hat)(t)
    }

    pub fn sigma_bdr(&self, t: f64) -> f64 {
        (self.sigma_bdr)(t)
    }

    pub fn convex_in_p(&self) -> bool {
        self.convex_in_p
    }

    pub fn homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn plan(&self) -> &ConjugationPlan {
        &self.plan
    }

    /// `p -> H(t,x,p,q)` on the plan's primal grid.
    pub fn primal_slice(&self, t: f64, x: &[f64], q: f64) -> Result<GridFunction> {
        let grid = Grid::new(self.plan.primal.clone(), self.plan.primal_res.clone())?;
        GridFunction::from_fn(grid, |p| self.h(t, x, p, q))
    }

    /// `v -> H*(t,x,v,q)` on the plan's dual grid.
    pub fn conjugate_slice(&self, t: f64, x: &[f64], q: f64) -> Result<GridFunction> {
        conjugate(&self.primal_slice(t, x, q)?, &self.plan.dual, &self.plan.dual_res)
    }

    /// `H(t,x,p,q) = |p| - q |x| e^{-t}` in one dimension.
    pub fn eikonal_decay() -> Self {
        let plan = ConjugationPlan::symmetric(1, 2.0, 21, 4.0, 41).expect("static plan");
        Self::new(
            "eikonal-decay",
            1,
            |t, x, p, q| norm(p) - q * norm(x) * (-t).exp(),
            plan,
        )
        .expect("static model")
        .with_moduli(
            constant(1.0),
            constant(1.0),
            Arc::new(|t: f64| (-t).exp()),
            constant(3.0),
        )
        .expect("nonnegative moduli")
    }

    /// `H(t,x,p,q) = |p|`.
    pub fn norm_h(dim: usize) -> Result<Self> {
        let plan = ConjugationPlan::symmetric(dim, 2.0, 21, 4.0, 41)?;
        Self::new("norm-h", dim, |_, _, p, _| norm(p), plan)?.with_moduli(
            constant(0.0),
            constant(1.0),
            constant(1.0),
            constant(1.0),
        )
    }

    /// `H = |p|^2 / 2`: convex, not homogeneous, conjugate domain unbounded.
    pub fn half_square() -> Self {
        let plan = ConjugationPlan::symmetric(1, 4.0, 81, 6.0, 121).expect("static plan");
        Self::new("half-square", 1, |_, _, p, _| 0.5 * norm(p).powi(2), plan)
            .expect("static model")
            .with_moduli(constant(0.0), constant(4.0), constant(1.0), constant(1.0))
            .expect("nonnegative moduli")
            .with_flags(true, false)
    }

    /// `H = |p|^2`: convex, not homogeneous.
    pub fn square() -> Self {
        let plan = ConjugationPlan::symmetric(1, 4.0, 81, 10.0, 201).expect("static plan");
        Self::new("square", 1, |_, _, p, _| norm(p).powi(2), plan)
            .expect("static model")
            .with_moduli(constant(0.0), constant(8.0), constant(1.0), constant(1.0))
            .expect("nonnegative moduli")
            .with_flags(true, false)
    }

    /// User model from a tabulated `G(p)`: `H(t,x,p,q) = q G(p/q)` with `G`
    /// interpolated on its grid and continued past the box with its Lipschitz slope.
    pub fn from_gridfn(name: impl Into<String>, g: GridFunction) -> Result<Self> {
        if g.values().iter().any(|v| !v.is_finite()) {
            return Err(invalid("tabulated Hamiltonian must be finite"));
        }
        let dim = g.dim();
        let dual = super::default_dual_box(&g);
        let dual_res = g.grid().res().iter().map(|r| 2 * r - 1).collect();
        let plan = ConjugationPlan {
            primal: g.grid().bounds().clone(),
            primal_res: g.grid().res().to_vec(),
            dual,
            dual_res,
        };
        let lip = g.lipschitz_estimate();
        let bound = g.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let table = Arc::new(g);
        Self::new(
            name,
            dim,
            move |_, _, p, q| {
                let q = q.max(1e-12);
                let s: Vec<f64> = p.iter().map(|v| v / q).collect();
                let b = table.grid().bounds();
                q * (table.interpolate(&b.clamp(&s)) + lip * b.distance(&s))
            },
            plan,
        )?
        .with_moduli(constant(0.0), constant(lip), constant(bound), constant(bound + lip))
    }
}

/// Built-in models by registry name.
pub fn model_by_name(name: &str) -> Result<HamiltonianModel> {
    match name {
        "eikonal-decay" => Ok(HamiltonianModel::eikonal_decay()),
        "norm-h" => HamiltonianModel::norm_h(1),
        "half-square" => Ok(HamiltonianModel::half_square()),
        "square" => Ok(HamiltonianModel::square()),
        other => Err(Error::Config(format!(
            "unknown model `{other}` (known: {})",
            MODEL_NAMES.join(", ")
        ))),
    }
}
