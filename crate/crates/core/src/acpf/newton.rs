//! Newton–Raphson power flow in polar form.
//!
//! Solves the PQ/PV/slack equations from a flat start to tight tolerance;
//! the slack bus absorbs losses and PV buses hold their voltage setpoints
//! while emitting reactive power. Used both to verify operating points and
//! to generate AC-consistent labels from DC dispatches.

use super::{branch_apparent_flows, bus_injections, OperatingPoint};
use crate::network::{build_admittance, BusKind, Network};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const PF_TOL: f64 = 1e-10;
pub const PF_MAX_ITER: usize = 30;

#[derive(Debug, Error)]
pub enum PfError {
    #[error("power flow diverged after {iters} iterations (last mismatch {last_norm:.3e})")]
    Diverged { iters: usize, last_norm: f64 },
    #[error("dispatch does not match network: {0}")]
    ShapeMismatch(String),
    #[error("jacobian is singular at iteration {0}")]
    SingularJacobian(usize),
}

/// Inputs for a power-flow solve: active dispatch per generator and a
/// per-bus voltage setpoint (applied at the slack and PV buses).
#[derive(Debug, Clone)]
pub struct PfDispatch {
    pub p_g: Vec<f64>,
    pub v_set: Vec<f64>,
}

impl PfDispatch {
    /// Setpoints at the middle of each voltage band.
    pub fn with_midpoint_voltages(net: &Network, p_g: Vec<f64>) -> Self {
        PfDispatch {
            p_g,
            v_set: net
                .buses
                .iter()
                .map(|b| 0.5 * (b.v_min + b.v_max))
                .collect(),
        }
    }
}

/// Convergence record of a solve.
#[derive(Debug, Clone)]
pub struct PfSolveInfo {
    pub iterations: usize,
    /// Infinity-norm of the mismatch before each update, plus the final one.
    pub mismatch_history: Vec<f64>,
}

/// Solves the power flow for the given dispatch. Generators at PQ buses
/// inject their scheduled `p_g` at zero reactive power; PV buses without a
/// generator are treated as PQ. On convergence the returned point carries
/// slack-adjusted `p_g` (the correction goes to the slack bus's lowest-id
/// unit), per-unit reactive outputs split equally among co-located units,
/// and from-side apparent flows.
pub fn newton_pf(
    net: &Network,
    dispatch: &PfDispatch,
) -> Result<(OperatingPoint, PfSolveInfo), PfError> {
    if dispatch.p_g.len() != net.n_gens() || dispatch.v_set.len() != net.n_buses() {
        return Err(PfError::ShapeMismatch(format!(
            "expected {} generators and {} buses, got {} and {}",
            net.n_gens(),
            net.n_buses(),
            dispatch.p_g.len(),
            dispatch.v_set.len()
        )));
    }
    let n = net.n_buses();
    let y = build_admittance(net);
    let gens_at = net.gens_at_bus();

    let slack = net.slack();
    let mut pv = Vec::new();
    let mut pq = Vec::new();
    for (i, bus) in net.buses.iter().enumerate() {
        match bus.kind {
            BusKind::Slack => {}
            BusKind::Pv if !gens_at[i].is_empty() => pv.push(i),
            _ => pq.push(i),
        }
    }
    let non_slack: Vec<usize> = pv.iter().chain(&pq).copied().collect();
    let n_pv = pv.len();
    let n_pq = pq.len();
    let n_var = n_pv + n_pq + n_pq;

    // scheduled injections
    let (p_d, q_d) = net.bus_demand();
    let mut p_sched = vec![0.0; n];
    let mut q_sched = vec![0.0; n];
    for i in 0..n {
        p_sched[i] = gens_at[i].iter().map(|&g| dispatch.p_g[g]).sum::<f64>() - p_d[i];
        q_sched[i] = -q_d[i];
    }

    // flat start with setpoints pinned at slack/PV
    let mut v = vec![1.0; n];
    let mut theta = vec![0.0; n];
    v[slack] = dispatch.v_set[slack];
    for &i in &pv {
        v[i] = dispatch.v_set[i];
    }

    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let (p_calc, q_calc) = bus_injections(&y, &v, &theta);
        let mut f = DVector::zeros(n_var);
        for (r, &i) in non_slack.iter().enumerate() {
            f[r] = p_sched[i] - p_calc[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[n_pv + n_pq + r] = q_sched[i] - q_calc[i];
        }
        let norm = f.amax();
        history.push(norm);
        if !norm.is_finite() {
            return Err(PfError::Diverged {
                iters: iterations,
                last_norm: norm,
            });
        }
        if norm < PF_TOL {
            break;
        }
        if iterations >= PF_MAX_ITER {
            return Err(PfError::Diverged {
                iters: iterations,
                last_norm: norm,
            });
        }

        let mut jac = DMatrix::zeros(n_var, n_var);
        // column layout: [θ at non_slack | v at pq]
        for (r, &i) in non_slack.iter().enumerate() {
            for (c, &j) in non_slack.iter().enumerate() {
                jac[(r, c)] = dp_dtheta(&y, &v, &theta, &q_calc, i, j);
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(r, n_pv + n_pq + c)] = dp_dv(&y, &v, &theta, &p_calc, i, j);
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &j) in non_slack.iter().enumerate() {
                jac[(n_pv + n_pq + r, c)] = dq_dtheta(&y, &v, &theta, &p_calc, i, j);
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(n_pv + n_pq + r, n_pv + n_pq + c)] = dq_dv(&y, &v, &theta, &q_calc, i, j);
            }
        }

        let lu = jac.lu();
        let dx = lu
            .solve(&f)
            .ok_or(PfError::SingularJacobian(iterations))?;
        for (c, &i) in non_slack.iter().enumerate() {
            theta[i] += dx[c];
        }
        for (c, &i) in pq.iter().enumerate() {
            v[i] += dx[n_pv + n_pq + c];
        }
        iterations += 1;
    }

    // recover generator-level outputs
    let (p_calc, q_calc) = bus_injections(&y, &v, &theta);
    let mut p_g = dispatch.p_g.clone();
    if let Some(&first) = gens_at[slack].first() {
        let scheduled: f64 = gens_at[slack].iter().map(|&g| dispatch.p_g[g]).sum();
        let required = p_calc[slack] + p_d[slack];
        p_g[first] += required - scheduled;
    }
    let mut q_g = vec![0.0; net.n_gens()];
    for i in (0..n).filter(|&i| i == slack || net.buses[i].kind == BusKind::Pv) {
        let units = &gens_at[i];
        if units.is_empty() {
            continue;
        }
        let total = q_calc[i] + q_d[i];
        let share = total / units.len() as f64;
        for &g in units {
            q_g[g] = share;
        }
    }

    let mut pt = OperatingPoint {
        p_g,
        q_g,
        v,
        theta,
        s_branch: None,
    };
    pt.s_branch = Some(branch_apparent_flows(net, &pt));
    Ok((
        pt,
        PfSolveInfo {
            iterations,
            mismatch_history: history,
        },
    ))
}

fn angle(theta: &[f64], i: usize, j: usize) -> (f64, f64) {
    (theta[i] - theta[j]).sin_cos()
}

fn dp_dtheta(
    y: &crate::network::AdmittanceMatrix,
    v: &[f64],
    theta: &[f64],
    q: &[f64],
    i: usize,
    j: usize,
) -> f64 {
    if i == j {
        -q[i] - y.b[(i, i)] * v[i] * v[i]
    } else {
        let (s, c) = angle(theta, i, j);
        v[i] * v[j] * (y.g[(i, j)] * s - y.b[(i, j)] * c)
    }
}

fn dp_dv(
    y: &crate::network::AdmittanceMatrix,
    v: &[f64],
    theta: &[f64],
    p: &[f64],
    i: usize,
    j: usize,
) -> f64 {
    if i == j {
        p[i] / v[i] + y.g[(i, i)] * v[i]
    } else {
        let (s, c) = angle(theta, i, j);
        v[i] * (y.g[(i, j)] * c + y.b[(i, j)] * s)
    }
}

fn dq_dtheta(
    y: &crate::network::AdmittanceMatrix,
    v: &[f64],
    theta: &[f64],
    p: &[f64],
    i: usize,
    j: usize,
) -> f64 {
    if i == j {
        p[i] - y.g[(i, i)] * v[i] * v[i]
    } else {
        let (s, c) = angle(theta, i, j);
        -v[i] * v[j] * (y.g[(i, j)] * c + y.b[(i, j)] * s)
    }
}

fn dq_dv(
    y: &crate::network::AdmittanceMatrix,
    v: &[f64],
    theta: &[f64],
    q: &[f64],
    i: usize,
    j: usize,
) -> f64 {
    if i == j {
        q[i] / v[i] - y.b[(i, i)] * v[i]
    } else {
        let (s, c) = angle(theta, i, j);
        v[i] * (y.g[(i, j)] * s - y.b[(i, j)] * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acpf::pf_residual;
    use crate::fixtures;
    use num_complex_free::gauss_seidel_two_bus;

    /// Minimal complex arithmetic for the independent Gauss–Seidel oracle.
    mod num_complex_free {
        #[derive(Clone, Copy, Debug)]
        pub struct C {
            pub re: f64,
            pub im: f64,
        }
        impl C {
            pub fn new(re: f64, im: f64) -> Self {
                C { re, im }
            }
            pub fn conj(self) -> Self {
                C::new(self.re, -self.im)
            }
            pub fn mul(self, o: C) -> C {
                C::new(
                    self.re * o.re - self.im * o.im,
                    self.re * o.im + self.im * o.re,
                )
            }
            pub fn div(self, o: C) -> C {
                let d = o.re * o.re + o.im * o.im;
                C::new(
                    (self.re * o.re + self.im * o.im) / d,
                    (self.im * o.re - self.re * o.im) / d,
                )
            }
            pub fn sub(self, o: C) -> C {
                C::new(self.re - o.re, self.im - o.im)
            }
            pub fn abs(self) -> f64 {
                self.re.hypot(self.im)
            }
            pub fn arg(self) -> f64 {
                self.im.atan2(self.re)
            }
        }

        /// Fixed-point Gauss–Seidel solve of a 2-bus case: slack voltage
        /// v1∠0, PQ load (p_d, q_d) at bus 2, one series branch with
        /// admittance y = g + jb; no charging, unit tap.
        pub fn gauss_seidel_two_bus(
            v1: f64,
            g: f64,
            b: f64,
            p_d: f64,
            q_d: f64,
        ) -> Option<(f64, f64)> {
            let y12 = C::new(g, b);
            let y22 = C::new(g, b);
            let vslack = C::new(v1, 0.0);
            let s2 = C::new(-p_d, -q_d); // injection at bus 2
            let mut v2 = C::new(1.0, 0.0);
            for _ in 0..20_000 {
                // V2 <- (S2*/V2* + y12 V1) / y22  with Y21 = -y12
                let rhs = s2.conj().div(v2.conj()).sub(C::new(-1.0, 0.0).mul(y12).mul(vslack));
                let next = rhs.div(y22);
                let step = next.sub(v2).abs();
                v2 = next;
                if step < 1e-14 {
                    return Some((v2.abs(), v2.arg()));
                }
                if !v2.abs().is_finite() {
                    return None;
                }
            }
            None
        }
    }

    #[test]
    fn two_bus_matches_gauss_seidel_oracle() {
        let net = fixtures::two_bus();
        let dispatch = PfDispatch {
            p_g: vec![1.0],
            v_set: vec![1.0; 2],
        };
        let (pt, info) = newton_pf(&net, &dispatch).unwrap();
        let (g, b) = net.branches[0].series_gb();
        let (vm, va) = gauss_seidel_two_bus(1.0, g, b, 1.0, 0.0).unwrap();
        assert!((pt.v[1] - vm).abs() < 1e-8, "v: {} vs {}", pt.v[1], vm);
        assert!((pt.theta[1] - va).abs() < 1e-8);
        assert!(*info.mismatch_history.last().unwrap() < PF_TOL);
    }

    #[test]
    fn lossy_two_bus_matches_gauss_seidel_oracle() {
        let net = fixtures::two_bus_lossy();
        // drop charging for the simple oracle: build an equivalent net
        let mut branches = net.branches.clone();
        branches[0].b_charge = 0.0;
        let net = crate::network::Network::new(
            net.base_mva,
            net.buses.clone(),
            branches,
            net.generators.clone(),
            net.loads.clone(),
        )
        .unwrap();
        let dispatch = PfDispatch {
            p_g: vec![1.0],
            v_set: vec![1.0; 2],
        };
        let (pt, _) = newton_pf(&net, &dispatch).unwrap();
        let (g, b) = net.branches[0].series_gb();
        let (vm, va) = gauss_seidel_two_bus(1.0, g, b, 1.0, 0.3).unwrap();
        assert!((pt.v[1] - vm).abs() < 1e-8);
        assert!((pt.theta[1] - va).abs() < 1e-8);
    }

    #[test]
    fn zero_load_flat_network_converges_immediately() {
        let net = crate::network::Network::new(
            100.0,
            fixtures::two_bus().buses.clone(),
            fixtures::two_bus().branches.clone(),
            fixtures::two_bus().generators.clone(),
            vec![],
        )
        .unwrap();
        let dispatch = PfDispatch {
            p_g: vec![0.0],
            v_set: vec![1.0; 2],
        };
        let (pt, info) = newton_pf(&net, &dispatch).unwrap();
        assert!(info.iterations <= 1);
        assert!(pt.v.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(pt.theta.iter().all(|&t| t.abs() < 1e-12));
    }

    #[test]
    fn beyond_nose_point_diverges() {
        // analytic existence for the lossless 2-bus PQ case:
        // v2⁴ + v2²(2 q x - v1²) + x²(p² + q²) = 0 needs
        // (2 q x - v1²)² ≥ 4 x² (p² + q²); at q=0, p ≤ v1²/(2x) = 0.5
        let p_d = 10.0;
        let x = 1.0;
        let disc = (0.0f64 - 1.0).powi(2) - 4.0 * x * x * p_d * p_d;
        assert!(disc < 0.0, "oracle says no solution exists");
        let net = fixtures::weak_two_bus(p_d);
        let dispatch = PfDispatch {
            p_g: vec![p_d],
            v_set: vec![1.0; 2],
        };
        match newton_pf(&net, &dispatch) {
            Err(PfError::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn converged_point_has_tiny_residual_everywhere() {
        for net in [fixtures::six_bus(), fixtures::ieee57_shaped()] {
            let p_share: f64 =
                net.loads.iter().map(|l| l.p_d).sum::<f64>() / net.n_gens() as f64;
            let dispatch =
                PfDispatch::with_midpoint_voltages(&net, vec![p_share; net.n_gens()]);
            let (pt, info) = newton_pf(&net, &dispatch).unwrap();
            let y = crate::network::build_admittance(&net);
            let r = pf_residual(&net, &y, &pt);
            assert!(
                r.norm_inf() < 1e-8,
                "residual {} on {} buses",
                r.norm_inf(),
                net.n_buses()
            );
            assert!(*info.mismatch_history.last().unwrap() < PF_TOL);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        use crate::acpf::bus_injections;
        use crate::network::build_admittance;
        let net = fixtures::six_bus();
        let y = build_admittance(&net);
        let v: Vec<f64> = (0..6).map(|i| 1.0 + 0.01 * i as f64).collect();
        let theta: Vec<f64> = (0..6).map(|i| 0.03 * i as f64 - 0.05).collect();
        let (p, q) = bus_injections(&y, &v, &theta);
        let h = 1e-7;
        for i in 0..6 {
            for j in 0..6 {
                let mut tp = theta.clone();
                tp[j] += h;
                let mut tm = theta.clone();
                tm[j] -= h;
                let (pp, qp) = bus_injections(&y, &v, &tp);
                let (pm, qm) = bus_injections(&y, &v, &tm);
                let fd_p = (pp[i] - pm[i]) / (2.0 * h);
                let fd_q = (qp[i] - qm[i]) / (2.0 * h);
                assert!((dp_dtheta(&y, &v, &theta, &q, i, j) - fd_p).abs() < 1e-5);
                assert!((dq_dtheta(&y, &v, &theta, &p, i, j) - fd_q).abs() < 1e-5);

                let mut vp = v.clone();
                vp[j] += h;
                let mut vm2 = v.clone();
                vm2[j] -= h;
                let (pp, qp) = bus_injections(&y, &vp, &theta);
                let (pm, qm) = bus_injections(&y, &vm2, &theta);
                let fd_p = (pp[i] - pm[i]) / (2.0 * h);
                let fd_q = (qp[i] - qm[i]) / (2.0 * h);
                assert!((dp_dv(&y, &v, &theta, &p, i, j) - fd_p).abs() < 1e-5);
                assert!((dq_dv(&y, &v, &theta, &q, i, j) - fd_q).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn quadratic_tail_convergence() {
        let net = fixtures::six_bus();
        let dispatch = PfDispatch::with_midpoint_voltages(&net, vec![0.7, 0.7, 0.7]);
        let (_, info) = newton_pf(&net, &dispatch).unwrap();
        let h = &info.mismatch_history;
        assert!(h.len() >= 3);
        // final step: ‖m_{k+1}‖ ≤ c ‖m_k‖² once in the quadratic basin
        let m_last = h[h.len() - 1];
        let m_prev = h[h.len() - 2];
        assert!(m_last <= 10.0 * m_prev * m_prev + 1e-14);
    }
}
