//! Evaluation metrics: MSE per quantity group, feasibility distance,
//! cost gap, absolute-error ECDFs, and timing. CSV writers for the
//! report files.

use super::Normalizers;
use crate::gnn::{apply_mode, predict, GraphBatch, GraphData, ModelParams};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalTiming {
    pub total_s: f64,
    pub per_sample_s: f64,
    pub n_samples: usize,
}

/// Quantity-group MSEs follow the reporting convention: "bus voltage"
/// pools v and θ errors over buses, "bus power" pools generator p and q
/// aggregated to their buses, "branch flow" covers |S|. Feasibility is
/// the mean per-bus L2 power-flow mismatch of the reconstructed points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse_bus_voltage: f64,
    pub mse_bus_power: f64,
    pub mse_branch_flow: f64,
    /// Mean of the three group MSEs.
    pub mse_overall: f64,
    pub feasibility: f64,
    /// Feasibility of the DC warm starts over the same samples.
    pub warm_feasibility: f64,
    /// Mean over samples of the summed voltage/reactive/thermal hinge
    /// violations of the predicted points.
    pub mean_violation: f64,
    /// Largest single hinge violation seen across all samples.
    pub max_violation: f64,
    pub cost_gap: f64,
    pub ecdf_power: Vec<(f64, f64)>,
    pub ecdf_angle: Vec<(f64, f64)>,
    pub timing: EvalTiming,
    pub normalizers: Normalizers,
}

fn mse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64
}

/// Sorted (value, cumulative proportion) pairs; nondecreasing and ending
/// at 1.0.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x, (i + 1) as f64 / n))
        .collect()
}

/// Order-statistic quantile of an ECDF at proportion `q` in (0, 1].
pub fn quantile(curve: &[(f64, f64)], q: f64) -> f64 {
    assert!(!curve.is_empty(), "quantile of empty ECDF");
    let n = curve.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    curve[rank - 1].0
}

/// Per-bus mean L2 power-flow mismatch computed from the graph's own
/// admittance constants.
pub fn feasibility_of(g: &GraphData, pt: &crate::acpf::OperatingPoint) -> f64 {
    let nb = g.n_bus;
    let mut p_bus = vec![0.0; nb];
    let mut q_bus = vec![0.0; nb];
    for (gg, &b) in g.gen_bus.iter().enumerate() {
        p_bus[b] += pt.p_g[gg];
        q_bus[b] += pt.q_g[gg];
    }
    let mut total = 0.0;
    for i in 0..nb {
        let mut p_inj = 0.0;
        let mut q_inj = 0.0;
        for j in 0..nb {
            let gij = g.g_mat[i * nb + j];
            let bij = g.b_mat[i * nb + j];
            if gij == 0.0 && bij == 0.0 {
                continue;
            }
            let d = pt.theta[i] - pt.theta[j];
            let (sd, cd) = d.sin_cos();
            p_inj += pt.v[j] * (gij * cd + bij * sd);
            q_inj += pt.v[j] * (gij * sd - bij * cd);
        }
        p_inj *= pt.v[i];
        q_inj *= pt.v[i];
        let rp = p_bus[i] - g.p_d[i] - p_inj;
        let rq = q_bus[i] - g.q_d[i] - q_inj;
        total += rp.hypot(rq);
    }
    total / nb as f64
}

/// Summed hinge violations of the box limits carried by the graph.
fn violation_sum(g: &GraphData, pt: &crate::acpf::OperatingPoint) -> (f64, f64) {
    let mut total = 0.0;
    let mut worst = 0.0f64;
    let mut take = |h: f64| {
        total += h;
        worst = worst.max(h);
    };
    for (i, &v) in pt.v.iter().enumerate() {
        take((v - g.v_max[i]).max(0.0) + (g.v_min[i] - v).max(0.0));
    }
    for (i, &q) in pt.q_g.iter().enumerate() {
        take((q - g.q_g_max[i]).max(0.0) + (g.q_g_min[i] - q).max(0.0));
    }
    if let Some(s) = &pt.s_branch {
        for (i, &sv) in s.iter().enumerate() {
            take((sv - g.s_max[i]).max(0.0));
        }
    }
    (total, worst)
}

fn dispatch_cost(g: &GraphData, p_g: &[f64]) -> f64 {
    p_g.iter()
        .enumerate()
        .map(|(i, &p)| g.cost_c2[i] * p * p + g.cost_c1[i] * p)
        .sum::<f64>()
        + g.cost_c0
}

/// Evaluates a model over labeled samples.
pub fn evaluate(params: &ModelParams, dataset: &[GraphData]) -> Result<MetricsReport, String> {
    if dataset.is_empty() {
        return Err("evaluate needs at least one sample".into());
    }
    if dataset.iter().any(|g| g.label.is_none()) {
        return Err("evaluate needs labels on every sample".into());
    }
    let started = std::time::Instant::now();

    let mut voltage_errs = Vec::new();
    let mut power_errs = Vec::new();
    let mut branch_errs = Vec::new();
    let mut power_abs = Vec::new();
    let mut angle_abs = Vec::new();
    let mut feas = 0.0;
    let mut warm_feas = 0.0;
    let mut viol_total = 0.0;
    let mut viol_max = 0.0f64;
    let mut cost_gap = 0.0;

    for g in dataset {
        let batch = GraphBatch::new(vec![g.clone()], params.config.y_dc_width)
            .map_err(|e| e.to_string())?;
        let delta = &predict(params, &batch)[0];
        let pt = apply_mode(params.config.mode, &g.warm, delta);
        let label = g.label.as_ref().unwrap();

        for (a, b) in pt.v.iter().zip(&label.v) {
            voltage_errs.push(a - b);
        }
        for (a, b) in pt.theta.iter().zip(&label.theta) {
            voltage_errs.push(a - b);
            angle_abs.push((a - b).abs());
        }
        // generator output aggregated to buses
        let nb = g.n_bus;
        let mut p_hat = vec![0.0; nb];
        let mut p_lab = vec![0.0; nb];
        let mut q_hat = vec![0.0; nb];
        let mut q_lab = vec![0.0; nb];
        for (gg, &b) in g.gen_bus.iter().enumerate() {
            p_hat[b] += pt.p_g[gg];
            p_lab[b] += label.p_g[gg];
            q_hat[b] += pt.q_g[gg];
            q_lab[b] += label.q_g[gg];
        }
        for i in 0..nb {
            power_errs.push(p_hat[i] - p_lab[i]);
            power_errs.push(q_hat[i] - q_lab[i]);
            power_abs.push((p_hat[i] - p_lab[i]).abs());
        }
        let s_hat = pt.s_branch.as_ref().expect("prediction carries flows");
        let s_lab = label.s_branch.as_ref().expect("label carries flows");
        for (a, b) in s_hat.iter().zip(s_lab) {
            branch_errs.push(a - b);
        }
        feas += feasibility_of(g, &pt);
        warm_feas += feasibility_of(g, &g.warm);
        let (vt, vm) = violation_sum(g, &pt);
        viol_total += vt;
        viol_max = viol_max.max(vm);
        cost_gap += (dispatch_cost(g, &pt.p_g) - dispatch_cost(g, &label.p_g)).abs();
    }

    let n = dataset.len() as f64;
    let mse_bus_voltage = mse(&voltage_errs);
    let mse_bus_power = mse(&power_errs);
    let mse_branch_flow = mse(&branch_errs);
    let total_s = started.elapsed().as_secs_f64();
    Ok(MetricsReport {
        mse_bus_voltage,
        mse_bus_power,
        mse_branch_flow,
        mse_overall: (mse_bus_voltage + mse_bus_power + mse_branch_flow) / 3.0,
        feasibility: feas / n,
        warm_feasibility: warm_feas / n,
        mean_violation: viol_total / n,
        max_violation: viol_max,
        cost_gap: cost_gap / n,
        ecdf_power: ecdf(&power_abs),
        ecdf_angle: ecdf(&angle_abs),
        timing: EvalTiming {
            total_s,
            per_sample_s: total_s / n,
            n_samples: dataset.len(),
        },
        normalizers: Normalizers::default(),
    })
}

/// Writes `mse.csv`, `ecdf_power.csv`, `ecdf_angle.csv`, `timing.csv`.
pub fn write_report_csvs(report: &MetricsReport, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut mse = std::fs::File::create(dir.join("mse.csv"))?;
    writeln!(mse, "metric,value")?;
    writeln!(mse, "mse_bus_voltage,{}", report.mse_bus_voltage)?;
    writeln!(mse, "mse_bus_power,{}", report.mse_bus_power)?;
    writeln!(mse, "mse_branch_flow,{}", report.mse_branch_flow)?;
    writeln!(mse, "mse_overall,{}", report.mse_overall)?;
    writeln!(mse, "feasibility,{}", report.feasibility)?;
    writeln!(mse, "warm_feasibility,{}", report.warm_feasibility)?;
    writeln!(mse, "mean_violation,{}", report.mean_violation)?;
    writeln!(mse, "max_violation,{}", report.max_violation)?;
    writeln!(mse, "cost_gap,{}", report.cost_gap)?;

    for (name, curve) in [
        ("ecdf_power.csv", &report.ecdf_power),
        ("ecdf_angle.csv", &report.ecdf_angle),
    ] {
        let mut f = std::fs::File::create(dir.join(name))?;
        writeln!(f, "abs_error,cumulative_proportion")?;
        for (v, p) in curve {
            writeln!(f, "{v},{p}")?;
        }
    }

    let mut timing = std::fs::File::create(dir.join("timing.csv"))?;
    writeln!(timing, "metric,value")?;
    writeln!(timing, "total_s,{}", report.timing.total_s)?;
    writeln!(timing, "per_sample_s,{}", report.timing.per_sample_s)?;
    writeln!(timing, "n_samples,{}", report.timing.n_samples)?;
    Ok(())
}
