use super::{domain_nodes, HamiltonianModel};
use crate::error::Result;
use crate::grid::GridFunction;
use crate::linalg::{lerp, norm, scale};
use crate::setgeom::{boundary_samples, CompactSetRep};
use serde::Serialize;
use std::collections::HashMap;

const SAMPLING_CAVEAT: &str =
    "moduli are sampled at finitely many t; 'for all t' and 'for a.e. t' conditions are not distinguished";

/// Sample lists for the structural checks.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub ts: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ps: Vec<Vec<f64>>,
    pub qs: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `q` values used for the bound on `H*(t,y,p,q)`.
    pub cap_qs: Vec<f64>,
    pub tol: f64,
}

impl SamplePlan {
    /// Tensor samples: `t` in {0, 0.5, 1, 2}, `x` in [-2,2], `p` in [-3,3].
    pub fn default_for(dim: usize) -> Self {
        let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        let tensor = |vals: Vec<f64>| -> Vec<Vec<f64>> {
            let mut out = vec![Vec::new()];
            for _ in 0..dim {
                out = out
                    .into_iter()
                    .flat_map(|pre| {
                        vals.iter().map(move |v| {
                            let mut p = pre.clone();
                            p.push(*v);
                            p
                        })
                    })
                    .collect();
            }
            out
        };
        let per_axis = if dim == 1 { 13 } else { 5 };
        Self {
            ts: vec![0.0, 0.5, 1.0, 2.0],
            xs: tensor(axis(-2.0, 2.0, if dim == 1 { 9 } else { 5 })),
            ps: tensor(axis(-3.0, 3.0, per_axis)),
            qs: vec![0.5, 1.0, 2.0],
            lambdas: vec![0.5, 2.0, 3.0],
            cap_qs: vec![1.0],
            tol: 1e-9,
        }
    }
}

/// Location of a violation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct H1Report {
    pub convexity_violation: f64,
    pub convexity_witness: Option<Witness>,
    pub homogeneity_violation: f64,
    pub homogeneity_witness: Option<Witness>,
    pub tol: f64,
    pub convex_pass: bool,
    pub homogeneous_pass: bool,
    pub pass: bool,
    pub caveat: String,
}

/// Midpoint convexity in `p` and positive homogeneity in `(p,q)` over the plan.
pub fn check_h1(model: &HamiltonianModel, plan: &SamplePlan) -> H1Report {
    let mut conv = (0.0f64, None);
    let mut homog = (0.0f64, None);
    for &t in &plan.ts {
        for x in &plan.xs {
            for &q in &plan.qs {
                for (i, p1) in plan.ps.iter().enumerate() {
                    let h1 = model.h(t, x, p1, q);
                    for p2 in &plan.ps[i + 1..] {
                        let mid = model.h(t, x, &lerp(p1, p2, 0.5), q);
                        let v = mid - 0.5 * (h1 + model.h(t, x, p2, q));
                        if v > conv.0 {
                            conv = (
                                v,
                                Some(Witness {
                                    t,
                                    x: x.clone(),
                                    p: p1.clone(),
                                    q,
                                    p2: Some(p2.clone()),
                                    lambda: None,
                                    violation: v,
                                }),
                            );
                        }
                    }
                    for &lam in &plan.lambdas {
                        let v = (model.h(t, x, &scale(p1, lam), lam * q) - lam * h1).abs();
                        if v > homog.0 {
                            homog = (
                                v,
                                Some(Witness {
                                    t,
                                    x: x.clone(),
                                    p: p1.clone(),
                                    q,
                                    p2: None,
                                    lambda: Some(lam),
                                    violation: v,
                                }),
                            );
                        }
                    }
                }
            }
        }
    }
    let convex_pass = conv.0 <= plan.tol;
    let homogeneous_pass = homog.0 <= plan.tol;
    H1Report {
        convexity_violation: conv.0,
        convexity_witness: conv.1,
        homogeneity_violation: homog.0,
        homogeneity_witness: homog.1,
        tol: plan.tol,
        convex_pass,
        homogeneous_pass,
        pass: convex_pass && homogeneous_pass,
        caveat: SAMPLING_CAVEAT.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub check: &'static str,
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct H2C1Report {
    /// Largest `|p| + |H*(t,x,p,1)| - sigma_bdr(t)` over boundary `x`.
    pub boundary_excess: f64,
    pub boundary_witness: Option<Witness>,
    /// Largest `H*(t,y,p,q) - sigma_hat(t)(1+|y|)` over `p` in the boundary domains.
    pub cap_excess: f64,
    pub cap_witness: Option<Witness>,
    pub samples: Vec<SampleOutcome>,
    pub tol: f64,
    pub pass: bool,
    pub caveat: String,
}

/// Boundary growth bound on the conjugate and the cap on `H*` over the
/// boundary domains, sampled on the plan's times and `Omega`'s boundary.
pub fn check_h2_c1(model: &HamiltonianModel, constraint: &CompactSetRep, plan: &SamplePlan) -> Result<H2C1Report> {
    let tol = plan.tol.max(1e-9);
    let boundary = boundary_samples(constraint, 64);
    let mut slices: HashMap<(u64, Vec<u64>, u64), GridFunction> = HashMap::new();
    let key = |t: f64, x: &[f64], q: f64| {
        (
            t.to_bits(),
            x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            q.to_bits(),
        )
    };
    let mut slice = |t: f64, x: &[f64], q: f64| -> Result<GridFunction> {
        let k = key(t, x, q);
        if let Some(s) = slices.get(&k) {
            return Ok(s.clone());
        }
        let s = model.conjugate_slice(t, x, q)?;
        slices.insert(k, s.clone());
        Ok(s)
    };
    let mut samples = Vec::new();
    let mut bdr = (f64::NEG_INFINITY, None);
    let mut cap = (f64::NEG_INFINITY, None);
    for &t in &plan.ts {
        let sb = model.sigma_bdr(t);
        for x in &boundary {
            let hs = slice(t, x, 1.0)?;
            let dom = domain_nodes(&hs);
            let mut worst = (f64::NEG_INFINITY, Vec::new());
            for p in &dom {
                let v = norm(p) + hs.interpolate(p).abs();
                if v > worst.0 {
                    worst = (v, p.clone());
                }
            }
            let excess = worst.0 - sb;
            samples.push(SampleOutcome {
                check: "boundary",
                t,
                x: x.clone(),
                value: worst.0,
                bound: sb,
                pass: excess <= tol,
            });
            if excess > bdr.0 {
                bdr = (
                    excess,
                    Some(Witness {
                        t,
                        x: x.clone(),
                        p: worst.1,
                        q: 1.0,
                        p2: None,
                        lambda: None,
                        violation: excess,
                    }),
                );
            }
            for &q in &plan.cap_qs {
                let dom_q = if q == 1.0 {
                    dom.clone()
                } else {
                    domain_nodes(&slice(t, x, q)?)
                };
                for y in &plan.xs {
                    let ys = slice(t, y, q)?;
                    let bound = model.sigma_hat(t) * (1.0 + norm(y));
                    let mut worst = (f64::NEG_INFINITY, Vec::new());
                    for p in &dom_q {
                        let v = ys.interpolate(p);
                        if v > worst.0 {
                            worst = (v, p.clone());
                        }
                    }
                    let excess = worst.0 - bound;
                    samples.push(SampleOutcome {
                        check: "cap",
                        t,
                        x: y.clone(),
                        value: worst.0,
                        bound,
                        pass: excess <= tol,
                    });
                    if excess > cap.0 {
                        cap = (
                            excess,
                            Some(Witness {
                                t,
                                x: y.clone(),
                                p: worst.1,
                                q,
                                p2: None,
                                lambda: None,
                                violation: excess,
                            }),
                        );
                    }
                }
            }
        }
    }
    let pass = samples.iter().all(|s| s.pass);
    Ok(H2C1Report {
        boundary_excess: bdr.0,
        boundary_witness: if bdr.0 > tol { bdr.1 } else { None },
        cap_excess: cap.0,
        cap_witness: if cap.0 > tol { cap.1 } else { None },
        samples,
        tol,
        pass,
        caveat: SAMPLING_CAVEAT.into(),
    })
}
