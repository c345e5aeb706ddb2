//! Exact AC power-flow physics: branch flows, nodal mismatch residuals,
//! operational-limit checks, and the Newton–Raphson solver used to
//! produce AC-consistent labels.

mod newton;

pub use newton::{newton_pf, PfDispatch, PfError, PfSolveInfo};

use crate::network::{AdmittanceMatrix, Network};
use serde::{Deserialize, Serialize};

/// Full AC decision vector: per-generator dispatch, per-bus voltage
/// phasors, and optionally per-branch apparent-flow magnitudes (from-side).
/// The slack bus angle is 0 by convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_branch: Option<Vec<f64>>,
}

impl OperatingPoint {
    pub fn matches(&self, net: &Network) -> bool {
        self.v.len() == net.n_buses()
            && self.theta.len() == net.n_buses()
            && self.p_g.len() == net.n_gens()
            && self.q_g.len() == net.n_gens()
            && self
                .s_branch
                .as_ref()
                .is_none_or(|s| s.len() == net.n_branches())
    }
}

/// Per-bus active/reactive power mismatch (p.u.).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PfResidual {
    pub r_p: Vec<f64>,
    pub r_q: Vec<f64>,
}

impl PfResidual {
    pub fn norm_inf(&self) -> f64 {
        self.r_p
            .iter()
            .chain(&self.r_q)
            .fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Hinge violations of the box limits plus the optional cost gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Per-bus voltage-band violation `[v - v_max]+ + [v_min - v]+`.
    pub v_viol: Vec<f64>,
    /// Per-generator reactive violation.
    pub q_viol: Vec<f64>,
    /// Per-branch thermal violation `[|S| - s_max]+`.
    pub s_viol: Vec<f64>,
    /// `|C(p_g) - C_ref|` when a reference cost was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_gap: Option<f64>,
}

impl ViolationReport {
    pub fn max_violation(&self) -> f64 {
        self.v_viol
            .iter()
            .chain(&self.q_viol)
            .chain(&self.s_viol)
            .fold(0.0f64, |m, &x| m.max(x))
    }
}

fn wrap_angle(d: f64) -> f64 {
    // keep Δθ in (-π, π] before trig evaluation
    let mut a = d % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Directed π-model flows on branch `k`: `(p_ft, q_ft, p_tf, q_tf)`.
///
/// With tap = 1, shift = 0 and no charging this reduces term-by-term to
///
/// ```text
/// p = u_b² g - u_b u_n [g cos Δθ + b sin Δθ]
/// q = -u_b² b - u_b u_n [g sin Δθ - b cos Δθ]
/// ```
pub fn branch_flow(net: &Network, pt: &OperatingPoint, k: usize) -> (f64, f64, f64, f64) {
    let br = &net.branches[k];
    let (f, t) = net.branch_endpoints(k);
    let (g, b) = br.series_gb();
    let bc2 = br.b_charge / 2.0;
    let w = pt.v[f] / br.tap; // effective from-side magnitude
    let ut = pt.v[t];
    let d = wrap_angle(pt.theta[f] - pt.theta[t] - br.shift);
    let (sd, cd) = d.sin_cos();

    let p_ft = w * w * g - w * ut * (g * cd + b * sd);
    let q_ft = -w * w * (b + bc2) - w * ut * (g * sd - b * cd);
    let p_tf = ut * ut * g - ut * w * (g * cd - b * sd);
    let q_tf = -ut * ut * (b + bc2) + ut * w * (g * sd + b * cd);
    (p_ft, q_ft, p_tf, q_tf)
}

/// From-side apparent-flow magnitudes for every branch.
pub fn branch_apparent_flows(net: &Network, pt: &OperatingPoint) -> Vec<f64> {
    (0..net.n_branches())
        .map(|k| {
            let (p, q, _, _) = branch_flow(net, pt, k);
            p.hypot(q)
        })
        .collect()
}

/// Computed net complex injection at every bus from the full Y-bus:
/// `P_i = v_i Σ_j v_j (G_ij cos Δθ_ij + B_ij sin Δθ_ij)` and
/// `Q_i = v_i Σ_j v_j (G_ij sin Δθ_ij - B_ij cos Δθ_ij)`.
pub fn bus_injections(y: &AdmittanceMatrix, v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = y.n();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let mut pi = 0.0;
        let mut qi = 0.0;
        for j in 0..n {
            let gij = y.g[(i, j)];
            let bij = y.b[(i, j)];
            if gij == 0.0 && bij == 0.0 {
                continue;
            }
            let (sd, cd) = wrap_angle(theta[i] - theta[j]).sin_cos();
            pi += v[j] * (gij * cd + bij * sd);
            qi += v[j] * (gij * sd - bij * cd);
        }
        p[i] = v[i] * pi;
        q[i] = v[i] * qi;
    }
    (p, q)
}

/// Per-bus power-flow mismatch of an operating point:
/// `r_p = p_G - p_D - P(v, θ)` and `r_q = q_G - q_D - Q(v, θ)` with
/// generation and demand aggregated per bus.
pub fn pf_residual(net: &Network, y: &AdmittanceMatrix, pt: &OperatingPoint) -> PfResidual {
    let n = net.n_buses();
    let (p_d, q_d) = net.bus_demand();
    let mut p_g = vec![0.0; n];
    let mut q_g = vec![0.0; n];
    for (g, _) in net.generators.iter().enumerate() {
        let b = net.gen_bus(g);
        p_g[b] += pt.p_g[g];
        q_g[b] += pt.q_g[g];
    }
    let (p_inj, q_inj) = bus_injections(y, &pt.v, &pt.theta);
    PfResidual {
        r_p: (0..n).map(|i| p_g[i] - p_d[i] - p_inj[i]).collect(),
        r_q: (0..n).map(|i| q_g[i] - q_d[i] - q_inj[i]).collect(),
    }
}

/// Hinge violations of voltage, reactive, and thermal limits. The branch
/// term uses the point's own `s_branch` when present (the predicted flow
/// magnitudes), otherwise flows recomputed from the voltage phasors.
pub fn violations(net: &Network, pt: &OperatingPoint, ref_cost: Option<f64>) -> ViolationReport {
    let v_viol = net
        .buses
        .iter()
        .zip(&pt.v)
        .map(|(b, &v)| (v - b.v_max).max(0.0) + (b.v_min - v).max(0.0))
        .collect();
    let q_viol = net
        .generators
        .iter()
        .zip(&pt.q_g)
        .map(|(g, &q)| (q - g.q_max).max(0.0) + (g.q_min - q).max(0.0))
        .collect();
    let s = match &pt.s_branch {
        Some(s) => s.clone(),
        None => branch_apparent_flows(net, pt),
    };
    let s_viol = net
        .branches
        .iter()
        .zip(&s)
        .map(|(br, &sv)| (sv - br.s_max).max(0.0))
        .collect();
    ViolationReport {
        v_viol,
        q_viol,
        s_viol,
        cost_gap: ref_cost.map(|c| (net.dispatch_cost(&pt.p_g) - c).abs()),
    }
}

/// Mean per-bus L2 mismatch: `(1/|B|) Σ_i sqrt(r_p,i² + r_q,i²)`.
pub fn feasibility_distance(net: &Network, y: &AdmittanceMatrix, pt: &OperatingPoint) -> f64 {
    let r = pf_residual(net, y, pt);
    let n = net.n_buses() as f64;
    r.r_p
        .iter()
        .zip(&r.r_q)
        .map(|(&p, &q)| p.hypot(q))
        .sum::<f64>()
        / n
}
