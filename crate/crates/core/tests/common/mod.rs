//! Shared test oracles, independent of the solver implementations they
//! check.

use nalgebra::{DMatrix, DVector};
use resopf_core::network::Network;

/// Brute-force lattice search over generator dispatch for the DC-OPF.
///
/// The last generator absorbs the power balance; the remaining dispatch
/// coordinates are swept on a grid, angles come from a pre-factored
/// reduced susceptance solve, and flow limits are checked explicitly.
/// The sweep starts coarse and refines the window around the incumbent —
/// sound here because the feasible set is a polytope and the objective
/// convex, so there is a single basin. Returns the best objective and
/// dispatch, or None when no feasible lattice point exists.
pub fn lattice_dc_oracle(net: &Network, final_step: f64) -> Option<(f64, Vec<f64>)> {
    let ng = net.n_gens();
    let nb = net.n_buses();
    let demand: f64 = net.loads.iter().map(|l| l.p_d).sum();
    let slack = net.slack();

    // reduced B factorization (row/col without the slack)
    let keep: Vec<usize> = (0..nb).filter(|&b| b != slack).collect();
    let mut b_full = DMatrix::zeros(nb, nb);
    for (k, br) in net.branches.iter().enumerate() {
        let (f, t) = net.branch_endpoints(k);
        let w = 1.0 / br.x;
        b_full[(f, f)] += w;
        b_full[(t, t)] += w;
        b_full[(f, t)] -= w;
        b_full[(t, f)] -= w;
        let _ = k;
    }
    let mut b_red = DMatrix::zeros(keep.len(), keep.len());
    for (i, &bi) in keep.iter().enumerate() {
        for (j, &bj) in keep.iter().enumerate() {
            b_red[(i, j)] = b_full[(bi, bj)];
        }
    }
    let lu = b_red.lu();

    let gen_bus: Vec<usize> = (0..ng).map(|g| net.gen_bus(g)).collect();
    let (p_d, _) = net.bus_demand();

    let feasible_cost = |p: &[f64]| -> Option<f64> {
        for (g, gen) in net.generators.iter().enumerate() {
            if p[g] < gen.p_min - 1e-9 || p[g] > gen.p_max + 1e-9 {
                return None;
            }
        }
        // injections -> angles -> flows
        let mut inj = vec![0.0; nb];
        for g in 0..ng {
            inj[gen_bus[g]] += p[g];
        }
        for b in 0..nb {
            inj[b] -= p_d[b];
        }
        for (k, br) in net.branches.iter().enumerate() {
            let (f, t) = net.branch_endpoints(k);
            let off = br.shift / br.x;
            inj[f] += off;
            inj[t] -= off;
        }
        let mut theta = vec![0.0; nb];
        if !keep.is_empty() {
            let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&b| inj[b]));
            let theta_red = lu.solve(&rhs)?;
            for (i, &b) in keep.iter().enumerate() {
                theta[b] = theta_red[i];
            }
        }
        for (k, br) in net.branches.iter().enumerate() {
            let (f, t) = net.branch_endpoints(k);
            let flow = (theta[f] - theta[t] - br.shift) / br.x;
            if flow.abs() > br.s_max + 1e-6 {
                return None;
            }
        }
        Some(net.dispatch_cost(p))
    };

    // sweep the first ng-1 coordinates; the last one closes the balance
    let sweep = |centers: &[f64], half_width: f64, step: f64| -> Option<(f64, Vec<f64>)> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut point = vec![0.0; ng];
        #[allow(clippy::too_many_arguments)]
        fn rec(
            dim: usize,
            ng: usize,
            net: &Network,
            centers: &[f64],
            half_width: f64,
            step: f64,
            demand: f64,
            point: &mut Vec<f64>,
            feasible_cost: &dyn Fn(&[f64]) -> Option<f64>,
            best: &mut Option<(f64, Vec<f64>)>,
        ) {
            if dim == ng - 1 {
                point[ng - 1] = demand - point[..ng - 1].iter().sum::<f64>();
                if let Some(cost) = feasible_cost(point) {
                    if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                        *best = Some((cost, point.clone()));
                    }
                }
                return;
            }
            let gen = &net.generators[dim];
            let lo = (centers[dim] - half_width).max(gen.p_min);
            let hi = (centers[dim] + half_width).min(gen.p_max);
            let mut p = lo;
            loop {
                point[dim] = p;
                rec(
                    dim + 1,
                    ng,
                    net,
                    centers,
                    half_width,
                    step,
                    demand,
                    point,
                    feasible_cost,
                    best,
                );
                if p >= hi {
                    break;
                }
                p = (p + step).min(hi);
            }
        }
        if ng == 1 {
            point[0] = demand;
            return feasible_cost(&point).map(|c| (c, point));
        }
        rec(
            0,
            ng,
            net,
            centers,
            half_width,
            step,
            demand,
            &mut point,
            &feasible_cost,
            &mut best,
        );
        best
    };

    if ng == 1 {
        let p = vec![demand];
        return feasible_cost(&p).map(|c| (c, p));
    }

    let range = net
        .generators
        .iter()
        .map(|g| g.p_max - g.p_min)
        .fold(0.0f64, f64::max);
    let mut step = (range / 20.0).max(final_step);
    let mut centers: Vec<f64> = net
        .generators
        .iter()
        .map(|g| 0.5 * (g.p_min + g.p_max))
        .collect();
    let mut half_width = range;
    let mut best = sweep(&centers, half_width, step)?;
    while step > final_step {
        half_width = 2.0 * step;
        step = (step / 4.0).max(final_step);
        centers = best.1.clone();
        if let Some(next) = sweep(&centers, half_width, step) {
            if next.0 <= best.0 {
                best = next;
            }
        }
    }
    Some(best)
}
