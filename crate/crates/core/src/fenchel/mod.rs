//! Grid Legendre–Fenchel transform and structural checks on Hamiltonians.

mod checks;
mod model;

pub use checks::{check_h1, check_h2_c1, H1Report, H2C1Report, SampleOutcome, SamplePlan, Witness};
pub use model::{model_by_name, ConjugationPlan, HamiltonianModel, Modulus, MODEL_NAMES};

use crate::error::{domain, invalid, Result};
use crate::grid::{BoxDomain, Grid, GridFunction, FINITE_THRESHOLD};
use crate::linalg::dot;
use crate::setgeom::CompactSetRep;
use rayon::prelude::*;

/// How a tabulated function is continued beyond its box when conjugating.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DualWindow {
    /// A dual node is `+∞` when the supremum is attained on the primal box
    /// boundary and strictly beats every interior node: the slope escapes the box.
    #[default]
    Unbounded,
    /// Plain maximum over the primal nodes (the function is `+∞` off the box).
    Restricted,
}

/// Conjugate with the default [`DualWindow::Unbounded`] continuation.
pub fn conjugate(f: &GridFunction, dual_box: &BoxDomain, dual_res: &[usize]) -> Result<GridFunction> {
    conjugate_with(f, dual_box, dual_res, DualWindow::Unbounded)
}

/// `f*(v) = max_p <v,p> - f(p)` over the primal nodes, for every dual node `v`.
pub fn conjugate_with(
    f: &GridFunction,
    dual_box: &BoxDomain,
    dual_res: &[usize],
    window: DualWindow,
) -> Result<GridFunction> {
    if f.has_neg_inf() {
        return Err(invalid("conjugation input contains -inf"));
    }
    if dual_box.dim() != f.dim() {
        return Err(invalid("dual box dimension differs from the primal one"));
    }
    let primal = f.grid();
    let d = primal.dim();
    let mut coords = Vec::new();
    let mut nodes: Vec<(f64, bool)> = Vec::new();
    let mut buf = vec![0.0; d];
    for i in (0..primal.len()).filter(|&i| f.value(i).is_finite()) {
        primal.node_into(i, &mut buf);
        coords.extend_from_slice(&buf);
        nodes.push((f.value(i), primal.is_boundary_node(i)));
    }
    if nodes.is_empty() {
        return Err(domain("conjugate of a function identically +inf"));
    }
    let dual = Grid::new(dual_box.clone(), dual_res.to_vec())?;
    let value_at = |v: &mut Vec<f64>, j: usize| {
        dual.node_into(j, v);
        let mut inner = f64::NEG_INFINITY;
        let mut edge = f64::NEG_INFINITY;
        for (p, (fp, on_edge)) in coords.chunks_exact(d).zip(&nodes) {
            let s = dot(v, p) - fp;
            if *on_edge {
                edge = edge.max(s);
            } else {
                inner = inner.max(s);
            }
        }
        let best = inner.max(edge);
        match window {
            DualWindow::Unbounded if edge > inner + 1e-9 * (1.0 + best.abs()) => f64::INFINITY,
            _ => best,
        }
    };
    // small conjugations run inside parallel sweeps; keep them sequential
    let values: Vec<f64> = if dual.len() * nodes.len() < 1 << 16 {
        let mut v = vec![0.0; d];
        (0..dual.len()).map(|j| value_at(&mut v, j)).collect()
    } else {
        (0..dual.len())
            .into_par_iter()
            .map_init(|| vec![0.0; d], value_at)
            .collect()
    };
    GridFunction::new(dual, values)
}

/// Primal box scaled by 1.5 about its centre, widened by the Lipschitz estimate of `f`.
pub fn default_dual_box(f: &GridFunction) -> BoxDomain {
    f.grid().bounds().scaled(1.5).expanded(f.lipschitz_estimate())
}

/// Sublevel-grid set of nodes where `fstar < finite_threshold`.
pub fn effective_domain(fstar: &GridFunction, finite_threshold: f64) -> Result<CompactSetRep> {
    let threshold = if finite_threshold > 0.0 {
        finite_threshold
    } else {
        FINITE_THRESHOLD
    };
    if !fstar.values().iter().any(|v| *v < threshold) {
        return Err(domain("empty domain"));
    }
    let indicator = fstar.map(|v| if v < threshold { -1.0 } else { 1.0 })?;
    CompactSetRep::sublevel(indicator)
}

/// Finite nodes of a conjugate slice, as points.
pub fn domain_nodes(fstar: &GridFunction) -> Vec<Vec<f64>> {
    (0..fstar.grid().len())
        .filter(|&i| fstar.value(i).is_finite())
        .map(|i| fstar.grid().node(i))
        .collect()
}
