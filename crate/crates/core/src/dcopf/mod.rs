//! DC optimal power flow: lossless linear network model, cost-minimal
//! dispatch via a dense active-set QP, and the flattened feature set the
//! downstream model consumes.

pub mod qp;

use crate::acpf::OperatingPoint;
use crate::network::Network;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DcError {
    #[error("solution status is {0:?}, not optimal")]
    NotOptimal(DcStatus),
    #[error("system/network mismatch: {0}")]
    ShapeMismatch(String),
    #[error("solver failure: {0}")]
    Solver(#[from] qp::QpError),
}

/// Linearized network: bus susceptance matrix from 1/x per branch plus the
/// raw incidence data (branch endpoints and susceptances) needed to express
/// flows without forming distribution factors.
#[derive(Debug, Clone)]
pub struct DcSystem {
    pub b_dc: DMatrix<f64>,
    /// Positional (from, to) per branch.
    pub incidence: Vec<(usize, usize)>,
    /// 1/x per branch.
    pub inv_x: Vec<f64>,
    /// Phase shift per branch (rad); flow is (θ_f - θ_t - shift)/x.
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DcStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcSolution {
    pub p_g_dc: Vec<f64>,
    pub theta_dc: Vec<f64>,
    pub f_dc: Vec<f64>,
    pub objective: f64,
    pub status: DcStatus,
    /// Human-readable names of constraints certified violated when
    /// `status == Infeasible`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violated: Option<Vec<String>>,
    #[serde(skip)]
    pub multipliers: Option<DcMultipliers>,
}

#[derive(Debug, Clone)]
pub struct DcMultipliers {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
}

/// Node features `[θ_i, p_i^inj]`, edge features `[F_ij]`, and the fixed
/// concatenation `y = [θ ‖ p_G ‖ F]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcFeatureSet {
    pub node: Vec<[f64; 2]>,
    pub edge: Vec<f64>,
    pub y_dc: Vec<f64>,
}

/// Assembles the DC system: B from branch reactances only, with phase
/// shifts carried as constant flow offsets.
pub fn build_dc(net: &Network) -> DcSystem {
    let n = net.n_buses();
    let mut b_dc = DMatrix::zeros(n, n);
    let mut incidence = Vec::with_capacity(net.n_branches());
    let mut inv_x = Vec::with_capacity(net.n_branches());
    let mut shift = Vec::with_capacity(net.n_branches());
    for (k, br) in net.branches.iter().enumerate() {
        let (f, t) = net.branch_endpoints(k);
        let w = 1.0 / br.x;
        b_dc[(f, f)] += w;
        b_dc[(t, t)] += w;
        b_dc[(f, t)] -= w;
        b_dc[(t, f)] -= w;
        incidence.push((f, t));
        inv_x.push(w);
        shift.push(br.shift);
    }
    DcSystem {
        b_dc,
        incidence,
        inv_x,
        shift,
    }
}

/// Inequality-constraint order used throughout: p_max per generator, then
/// p_min, then flow upper per branch, then flow lower.
fn constraint_name(net: &Network, idx: usize) -> String {
    let ng = net.n_gens();
    let nl = net.n_branches();
    if idx < ng {
        format!("p_max[gen {}]", net.generators[idx].id)
    } else if idx < 2 * ng {
        format!("p_min[gen {}]", net.generators[idx - ng].id)
    } else if idx < 2 * ng + nl {
        format!("flow_upper[branch {}]", idx - 2 * ng)
    } else {
        format!("flow_lower[branch {}]", idx - 2 * ng - nl)
    }
}

/// Builds the QP over variables `[p_g | θ]`. The linear cost carries a
/// deterministic tie-break of 1e-9 per id rank so equal-cost units resolve
/// toward the lowest generator id; `objective` is always reported with the
/// original coefficients.
fn assemble_qp(net: &Network, sys: &DcSystem, tie_break: bool) -> qp::QpProblem {
    let ng = net.n_gens();
    let nb = net.n_buses();
    let nl = net.n_branches();
    let n = ng + nb;

    let mut q_diag = DVector::zeros(n);
    let mut lin = DVector::zeros(n);
    let mut rank_of: Vec<usize> = (0..ng).collect();
    rank_of.sort_by_key(|&g| net.generators[g].id);
    let mut rank = vec![0usize; ng];
    for (r, &g) in rank_of.iter().enumerate() {
        rank[g] = r;
    }
    for (g, gen) in net.generators.iter().enumerate() {
        q_diag[g] = 2.0 * gen.cost.c2;
        lin[g] = gen.cost.c1
            + if tie_break {
                1e-9 * rank[g] as f64
            } else {
                0.0
            };
    }

    // balance rows: Σ_g@b p_g - (Bθ)_b = p_d,b - (AᵀDσ)_b ; then θ_slack = 0
    let (p_d, _) = net.bus_demand();
    let mut eq = DMatrix::zeros(nb + 1, n);
    let mut eq_rhs = DVector::zeros(nb + 1);
    for (g, _) in net.generators.iter().enumerate() {
        eq[(net.gen_bus(g), g)] = 1.0;
    }
    for b in 0..nb {
        for j in 0..nb {
            eq[(b, ng + j)] = -sys.b_dc[(b, j)];
        }
        eq_rhs[b] = p_d[b];
    }
    for k in 0..nl {
        let (f, t) = sys.incidence[k];
        let off = sys.inv_x[k] * sys.shift[k];
        eq_rhs[f] += -off;
        eq_rhs[t] += off;
    }
    eq[(nb, ng + net.slack())] = 1.0;

    let mut ineq = DMatrix::zeros(2 * ng + 2 * nl, n);
    let mut ineq_rhs = DVector::zeros(2 * ng + 2 * nl);
    for (g, gen) in net.generators.iter().enumerate() {
        ineq[(g, g)] = 1.0;
        ineq_rhs[g] = gen.p_max;
        ineq[(ng + g, g)] = -1.0;
        ineq_rhs[ng + g] = -gen.p_min;
    }
    for k in 0..nl {
        let (f, t) = sys.incidence[k];
        let w = sys.inv_x[k];
        let fmax = net.branches[k].s_max;
        let off = w * sys.shift[k];
        ineq[(2 * ng + k, ng + f)] = w;
        ineq[(2 * ng + k, ng + t)] = -w;
        ineq_rhs[2 * ng + k] = fmax + off;
        ineq[(2 * ng + nl + k, ng + f)] = -w;
        ineq[(2 * ng + nl + k, ng + t)] = w;
        ineq_rhs[2 * ng + nl + k] = fmax - off;
    }

    qp::QpProblem {
        q_diag,
        lin,
        eq,
        eq_rhs,
        ineq,
        ineq_rhs,
    }
}

/// Dispatch proportionally between bounds to match total demand, angles
/// from the reduced susceptance solve. Satisfies the equality constraints
/// whenever total demand lies within aggregate capacity.
fn equality_feasible_start(net: &Network, sys: &DcSystem) -> Option<DVector<f64>> {
    let ng = net.n_gens();
    let nb = net.n_buses();
    let (p_d, _) = net.bus_demand();
    let demand: f64 = p_d.iter().sum();
    let pmin: f64 = net.generators.iter().map(|g| g.p_min).sum();
    let pmax: f64 = net.generators.iter().map(|g| g.p_max).sum();
    if demand < pmin - 1e-9 || demand > pmax + 1e-9 {
        return None;
    }
    let denom = pmax - pmin;
    let t = if denom > 1e-15 {
        ((demand - pmin) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut x = DVector::zeros(ng + nb);
    for (g, gen) in net.generators.iter().enumerate() {
        x[g] = gen.p_min + t * (gen.p_max - gen.p_min);
    }

    // θ from B θ = inj + AᵀDσ with the slack row pinned
    let slack = net.slack();
    let mut rhs = DVector::zeros(nb);
    for b in 0..nb {
        rhs[b] = -p_d[b];
    }
    for (g, _) in net.generators.iter().enumerate() {
        rhs[net.gen_bus(g)] += x[g];
    }
    for k in 0..sys.incidence.len() {
        let (f, t2) = sys.incidence[k];
        let off = sys.inv_x[k] * sys.shift[k];
        rhs[f] += off;
        rhs[t2] -= off;
    }
    let keep: Vec<usize> = (0..nb).filter(|&b| b != slack).collect();
    if !keep.is_empty() {
        let mut b_red = DMatrix::zeros(keep.len(), keep.len());
        let mut r_red = DVector::zeros(keep.len());
        for (i, &bi) in keep.iter().enumerate() {
            r_red[i] = rhs[bi];
            for (j, &bj) in keep.iter().enumerate() {
                b_red[(i, j)] = sys.b_dc[(bi, bj)];
            }
        }
        let theta_red = b_red.lu().solve(&r_red)?;
        for (i, &bi) in keep.iter().enumerate() {
            x[ng + bi] = theta_red[i];
        }
    }
    Some(x)
}

/// Solves the DC-OPF. Infeasibility is reported through `status` together
/// with the violated-constraint certificate.
pub fn solve_dc(sys: &DcSystem, net: &Network) -> Result<DcSolution, DcError> {
    if sys.incidence.len() != net.n_branches() || sys.b_dc.nrows() != net.n_buses() {
        return Err(DcError::ShapeMismatch(
            "DcSystem was built from a different network".into(),
        ));
    }
    let infeasible = |names: Vec<String>| DcSolution {
        p_g_dc: vec![],
        theta_dc: vec![],
        f_dc: vec![],
        objective: f64::INFINITY,
        status: DcStatus::Infeasible,
        violated: Some(names),
        multipliers: None,
    };

    let Some(x0) = equality_feasible_start(net, sys) else {
        let names = net
            .generators
            .iter()
            .map(|g| format!("p_max[gen {}]", g.id))
            .collect();
        return Ok(infeasible(names));
    };

    let prob = assemble_qp(net, sys, true);
    match qp::solve(&prob, &x0) {
        Err(qp::QpError::Unbounded) => Ok(DcSolution {
            p_g_dc: vec![],
            theta_dc: vec![],
            f_dc: vec![],
            objective: f64::NEG_INFINITY,
            status: DcStatus::Unbounded,
            violated: None,
            multipliers: None,
        }),
        Err(e) => Err(e.into()),
        Ok(qp::QpOutcome::Infeasible { violated }) => Ok(infeasible(
            violated.iter().map(|&i| constraint_name(net, i)).collect(),
        )),
        Ok(qp::QpOutcome::Optimal(sol)) => {
            let ng = net.n_gens();
            let p_g_dc: Vec<f64> = (0..ng).map(|g| sol.x[g]).collect();
            let theta_dc: Vec<f64> = (0..net.n_buses()).map(|b| sol.x[ng + b]).collect();
            let f_dc: Vec<f64> = (0..net.n_branches())
                .map(|k| {
                    let (f, t) = sys.incidence[k];
                    sys.inv_x[k] * (theta_dc[f] - theta_dc[t] - sys.shift[k])
                })
                .collect();
            let objective = net.dispatch_cost(&p_g_dc);
            Ok(DcSolution {
                p_g_dc,
                theta_dc,
                f_dc,
                objective,
                status: DcStatus::Optimal,
                violated: None,
                multipliers: Some(DcMultipliers {
                    eq: sol.eq_mult.iter().copied().collect(),
                    ineq: sol.ineq_mult.iter().copied().collect(),
                }),
            })
        }
    }
}

/// Largest KKT residual of a claimed optimum against the original problem
/// (stationarity, feasibility, dual sign, complementarity), via an
/// independent checker.
pub fn kkt_residual_of(net: &Network, sys: &DcSystem, sol: &DcSolution) -> Result<f64, DcError> {
    if sol.status != DcStatus::Optimal {
        return Err(DcError::NotOptimal(sol.status));
    }
    let mults = sol
        .multipliers
        .as_ref()
        .ok_or_else(|| DcError::ShapeMismatch("solution carries no multipliers".into()))?;
    let prob = assemble_qp(net, sys, false);
    let x = DVector::from_iterator(
        net.n_gens() + net.n_buses(),
        sol.p_g_dc.iter().chain(&sol.theta_dc).copied(),
    );
    let qp_sol = qp::QpSolution {
        x,
        objective: sol.objective,
        eq_mult: DVector::from_column_slice(&mults.eq),
        ineq_mult: DVector::from_column_slice(&mults.ineq),
        iterations: 0,
    };
    Ok(qp::kkt_residual(&prob, &qp_sol))
}

/// Extracts the two-level DC features from an optimal solution.
pub fn extract_dc_features(sol: &DcSolution, net: &Network) -> Result<DcFeatureSet, DcError> {
    if sol.status != DcStatus::Optimal {
        return Err(DcError::NotOptimal(sol.status));
    }
    let (p_d, _) = net.bus_demand();
    let mut inj = vec![0.0; net.n_buses()];
    for (g, _) in net.generators.iter().enumerate() {
        inj[net.gen_bus(g)] += sol.p_g_dc[g];
    }
    for (b, d) in p_d.iter().enumerate() {
        inj[b] -= d;
    }
    let node: Vec<[f64; 2]> = sol
        .theta_dc
        .iter()
        .zip(&inj)
        .map(|(&t, &p)| [t, p])
        .collect();
    let edge = sol.f_dc.clone();
    // y^DC layout is canonical: θ by ascending bus id, p_G by ascending
    // generator id, F in branch order — invariant under array reordering.
    let mut bus_order: Vec<usize> = (0..net.n_buses()).collect();
    bus_order.sort_by_key(|&b| net.buses[b].id);
    let mut gen_order: Vec<usize> = (0..net.n_gens()).collect();
    gen_order.sort_by_key(|&g| net.generators[g].id);
    let y_dc: Vec<f64> = bus_order
        .iter()
        .map(|&b| sol.theta_dc[b])
        .chain(gen_order.iter().map(|&g| sol.p_g_dc[g]))
        .chain(sol.f_dc.iter().copied())
        .collect();
    Ok(DcFeatureSet { node, edge, y_dc })
}

/// Warm start x⁰ = (p_g = p_g^DC, q_g = 0, v = 1, θ = θ^DC) with branch
/// baselines |F^DC|.
pub fn warm_start(sol: &DcSolution, net: &Network) -> Result<OperatingPoint, DcError> {
    if sol.status != DcStatus::Optimal {
        return Err(DcError::NotOptimal(sol.status));
    }
    Ok(OperatingPoint {
        p_g: sol.p_g_dc.clone(),
        q_g: vec![0.0; net.n_gens()],
        v: vec![1.0; net.n_buses()],
        theta: sol.theta_dc.clone(),
        s_branch: Some(sol.f_dc.iter().map(|f| f.abs()).collect()),
    })
}
