//! Physics-informed training loss.
//!
//! Five terms: supervised fit on (v, θ, q_G, p_G, |S|), squared AC
//! power-flow residuals evaluated through the tape, hinge penalties on
//! voltage/reactive/thermal limits, the absolute cost gap against the
//! label dispatch, and squared residual magnitudes. Supervised errors are
//! normalized per quantity by the label standard deviation over the
//! training split; every term is averaged over the graphs in the batch.

use crate::autodiff::{Tape, Tensor, Var};
use crate::gnn::{BatchOutputs, GraphBatch, HeadMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_pf: f64,
    pub lambda_box: f64,
    pub lambda_obj: f64,
    pub lambda_res: f64,
    pub alpha_v: f64,
    pub alpha_theta: f64,
    pub alpha_q: f64,
    pub alpha_p: f64,
    pub alpha_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_pf: 0.1,
            lambda_box: 0.1,
            lambda_obj: 0.01,
            lambda_res: 1e-4,
            alpha_v: 1.0,
            alpha_theta: 1.0,
            alpha_q: 1.0,
            alpha_p: 1.0,
            alpha_s: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.lambda_pf,
            self.lambda_box,
            self.lambda_obj,
            self.lambda_res,
            self.alpha_v,
            self.alpha_theta,
            self.alpha_q,
            self.alpha_p,
            self.alpha_s,
        ];
        if all.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err("loss weights must be finite and >= 0".into());
        }
        Ok(())
    }

    /// Pure supervised regression: all physics/regularization multipliers
    /// zero.
    pub fn supervised_only() -> Self {
        LossWeights {
            lambda_pf: 0.0,
            lambda_box: 0.0,
            lambda_obj: 0.0,
            lambda_res: 0.0,
            ..LossWeights::default()
        }
    }
}

/// Per-quantity supervised normalizers (label standard deviations over the
/// training split, floored to 1 when degenerate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub v: f64,
    pub theta: f64,
    pub p: f64,
    pub q: f64,
    pub s: f64,
}

impl Default for Normalizers {
    fn default() -> Self {
        Normalizers {
            v: 1.0,
            theta: 1.0,
            p: 1.0,
            q: 1.0,
            s: 1.0,
        }
    }
}

fn std_or_one(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 1e-8 {
        sd
    } else {
        1.0
    }
}

impl Normalizers {
    /// Label standard deviations over a training split.
    pub fn from_labels<'a>(graphs: impl Iterator<Item = &'a crate::gnn::GraphData>) -> Self {
        let (mut v, mut theta, mut p, mut q, mut s) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for g in graphs {
            if let Some(label) = &g.label {
                v.extend_from_slice(&label.v);
                theta.extend_from_slice(&label.theta);
                p.extend_from_slice(&label.p_g);
                q.extend_from_slice(&label.q_g);
                if let Some(sb) = &label.s_branch {
                    s.extend_from_slice(sb);
                }
            }
        }
        Normalizers {
            v: std_or_one(&v),
            theta: std_or_one(&theta),
            p: std_or_one(&p),
            q: std_or_one(&q),
            s: std_or_one(&s),
        }
    }
}

/// Scalar loss terms still on the tape; `total` is the weighted sum.
pub struct LossVars {
    pub total: Var,
    pub sup: Var,
    pub pf: Var,
    pub box_: Var,
    pub obj: Var,
    pub res: Var,
}

/// Loss values extracted from a tape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub sup: f64,
    pub pf: f64,
    pub box_: f64,
    pub obj: f64,
    pub res: f64,
}

impl LossVars {
    pub fn read(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(self.total).item(),
            sup: tape.value(self.sup).item(),
            pf: tape.value(self.pf).item(),
            box_: tape.value(self.box_).item(),
            obj: tape.value(self.obj).item(),
            res: tape.value(self.res).item(),
        }
    }
}

/// Reconstructed operating-point tensors on the tape, batch-concatenated.
pub struct TapedPoint {
    pub v: Var,
    pub theta: Var,
    pub p_g: Var,
    pub q_g: Var,
    pub s: Var,
}

/// Applies the head mode on-tape: residual reconstruction over the warm
/// start, or direct interpretation of the outputs.
pub fn taped_reconstruct(
    tape: &mut Tape,
    batch: &GraphBatch,
    out: &BatchOutputs,
    mode: HeadMode,
) -> TapedPoint {
    match mode {
        HeadMode::Direct => TapedPoint {
            v: out.dv,
            theta: out.dtheta,
            p_g: out.dp,
            q_g: out.dq,
            s: out.ds,
        },
        HeadMode::Residual => {
            let mut warm_v = Vec::new();
            let mut warm_t = Vec::new();
            let mut warm_p = Vec::new();
            let mut warm_q = Vec::new();
            let mut warm_s = Vec::new();
            for g in &batch.graphs {
                warm_v.extend_from_slice(&g.warm.v);
                warm_t.extend_from_slice(&g.warm.theta);
                warm_p.extend_from_slice(&g.warm.p_g);
                warm_q.extend_from_slice(&g.warm.q_g);
                warm_s.extend_from_slice(g.warm.s_branch.as_ref().expect("warm start has flows"));
            }
            let cv = tape.constant(Tensor::vector(warm_v));
            let ct = tape.constant(Tensor::vector(warm_t));
            let cp = tape.constant(Tensor::vector(warm_p));
            let cq = tape.constant(Tensor::vector(warm_q));
            let cs = tape.constant(Tensor::vector(warm_s));
            TapedPoint {
                v: tape.add(cv, out.dv),
                theta: tape.add(ct, out.dtheta),
                p_g: tape.add(cp, out.dp),
                q_g: tape.add(cq, out.dq),
                s: tape.add(cs, out.ds),
            }
        }
    }
}

fn sum_sq_diff(tape: &mut Tape, a: Var, b_const: Vec<f64>) -> Var {
    let c = tape.constant(Tensor::vector(b_const));
    let d = tape.sub(a, c);
    let s = tape.square(d);
    tape.sum(s)
}

fn hinge_sq_above(tape: &mut Tape, x: Var, upper: Vec<f64>) -> Var {
    let c = tape.constant(Tensor::vector(upper));
    let d = tape.sub(x, c);
    let h = tape.hinge(d);
    let s = tape.square(h);
    tape.sum(s)
}

fn hinge_sq_below(tape: &mut Tape, x: Var, lower: Vec<f64>) -> Var {
    let c = tape.constant(Tensor::vector(lower));
    let d = tape.sub(c, x);
    let h = tape.hinge(d);
    let s = tape.square(h);
    tape.sum(s)
}

/// Builds the five-term loss over a labeled batch. All graphs must carry
/// labels; the supervised and objective terms are never skipped here.
pub fn build_loss(
    tape: &mut Tape,
    batch: &GraphBatch,
    out: &BatchOutputs,
    mode: HeadMode,
    weights: &LossWeights,
    norms: &Normalizers,
) -> LossVars {
    assert!(
        batch.graphs.iter().all(|g| g.label.is_some()),
        "training loss requires labels on every graph"
    );
    let n_graphs = batch.n_graphs() as f64;
    let pt = taped_reconstruct(tape, batch, out, mode);

    // supervised fit, per-quantity normalized
    let (mut lv, mut lt, mut lp, mut lq, mut ls) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for g in &batch.graphs {
        let label = g.label.as_ref().unwrap();
        lv.extend_from_slice(&label.v);
        lt.extend_from_slice(&label.theta);
        lp.extend_from_slice(&label.p_g);
        lq.extend_from_slice(&label.q_g);
        ls.extend_from_slice(label.s_branch.as_ref().expect("label has branch flows"));
    }
    let sup_v = sum_sq_diff(tape, pt.v, lv);
    let sup_t = sum_sq_diff(tape, pt.theta, lt);
    let sup_p = sum_sq_diff(tape, pt.p_g, lp);
    let sup_q = sum_sq_diff(tape, pt.q_g, lq);
    let sup_s = sum_sq_diff(tape, pt.s, ls);
    let sup_v = tape.scale(sup_v, weights.alpha_v / (norms.v * norms.v));
    let sup_t = tape.scale(sup_t, weights.alpha_theta / (norms.theta * norms.theta));
    let sup_p = tape.scale(sup_p, weights.alpha_p / (norms.p * norms.p));
    let sup_q = tape.scale(sup_q, weights.alpha_q / (norms.q * norms.q));
    let sup_s = tape.scale(sup_s, weights.alpha_s / (norms.s * norms.s));
    let mut sup = tape.add(sup_v, sup_t);
    sup = tape.add(sup, sup_p);
    sup = tape.add(sup, sup_q);
    sup = tape.add(sup, sup_s);
    let sup = tape.scale(sup, 1.0 / n_graphs);

    // AC power-flow residuals through the tape, graph by graph
    let mut pf_sum: Option<Var> = None;
    let nb_total = batch.nb_total;
    let ng_total = batch.ng_total;
    let v_col = tape.reshape(pt.v, &[nb_total, 1]);
    let t_col = tape.reshape(pt.theta, &[nb_total, 1]);
    let p_col = tape.reshape(pt.p_g, &[ng_total, 1]);
    let q_col = tape.reshape(pt.q_g, &[ng_total, 1]);
    for (gi, g) in batch.graphs.iter().enumerate() {
        let br: Vec<usize> = batch.bus_range(gi).collect();
        let gr: Vec<usize> = batch.gen_range(gi).collect();
        let nb = g.n_bus;
        let ng = g.n_gen;
        let v_g = tape.gather_rows(v_col, &br);
        let t_g = tape.gather_rows(t_col, &br);
        let cos_t = tape.cos(t_g);
        let sin_t = tape.sin(t_g);
        let e = tape.mul(v_g, cos_t);
        let f = tape.mul(v_g, sin_t);
        let g_mat = tape.constant(Tensor::matrix(nb, nb, g.g_mat.clone()));
        let b_mat = tape.constant(Tensor::matrix(nb, nb, g.b_mat.clone()));
        let ge = tape.matmul(g_mat, e);
        let bf = tape.matmul(b_mat, f);
        let gf = tape.matmul(g_mat, f);
        let be = tape.matmul(b_mat, e);
        let ge_bf = tape.sub(ge, bf);
        let gf_be = tape.add(gf, be);
        let e_gebf = tape.mul(e, ge_bf);
        let f_gfbe = tape.mul(f, gf_be);
        let p_inj = tape.add(e_gebf, f_gfbe);
        let f_gebf = tape.mul(f, ge_bf);
        let e_gfbe = tape.mul(e, gf_be);
        let q_inj = tape.sub(f_gebf, e_gfbe);

        // generation aggregated per bus
        let mut g2b = vec![0.0; nb * ng];
        for (gg, &b) in g.gen_bus.iter().enumerate() {
            g2b[b * ng + gg] = 1.0;
        }
        let g2b = tape.constant(Tensor::matrix(nb, ng, g2b));
        let p_gen_g = tape.gather_rows(p_col, &gr);
        let q_gen_g = tape.gather_rows(q_col, &gr);
        let p_bus = tape.matmul(g2b, p_gen_g);
        let q_bus = tape.matmul(g2b, q_gen_g);

        let p_d = tape.constant(Tensor::matrix(nb, 1, g.p_d.clone()));
        let q_d = tape.constant(Tensor::matrix(nb, 1, g.q_d.clone()));
        let mut r_p = tape.sub(p_bus, p_d);
        r_p = tape.sub(r_p, p_inj);
        let mut r_q = tape.sub(q_bus, q_d);
        r_q = tape.sub(r_q, q_inj);
        let rp2 = tape.square(r_p);
        let rq2 = tape.square(r_q);
        let s1 = tape.sum(rp2);
        let s2 = tape.sum(rq2);
        let both = tape.add(s1, s2);
        pf_sum = Some(match pf_sum {
            None => both,
            Some(acc) => tape.add(acc, both),
        });
    }
    let pf = pf_sum.expect("batch is non-empty");
    let pf = tape.scale(pf, 1.0 / n_graphs);

    // box limits
    let (mut v_max, mut v_min, mut q_max, mut q_min, mut s_max) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for g in &batch.graphs {
        v_max.extend_from_slice(&g.v_max);
        v_min.extend_from_slice(&g.v_min);
        q_max.extend_from_slice(&g.q_g_max);
        q_min.extend_from_slice(&g.q_g_min);
        s_max.extend_from_slice(&g.s_max);
    }
    let b1 = hinge_sq_above(tape, pt.v, v_max);
    let b2 = hinge_sq_below(tape, pt.v, v_min);
    let b3 = hinge_sq_above(tape, pt.q_g, q_max);
    let b4 = hinge_sq_below(tape, pt.q_g, q_min);
    let b5 = hinge_sq_above(tape, pt.s, s_max);
    let mut box_ = tape.add(b1, b2);
    box_ = tape.add(box_, b3);
    box_ = tape.add(box_, b4);
    box_ = tape.add(box_, b5);
    let box_ = tape.scale(box_, 1.0 / n_graphs);

    // economic optimality: |C(p̂) - C(p*)| per graph
    let mut obj_sum: Option<Var> = None;
    for (gi, g) in batch.graphs.iter().enumerate() {
        let gr: Vec<usize> = batch.gen_range(gi).collect();
        let p_gen_g = tape.gather_rows(p_col, &gr);
        let ng = g.n_gen;
        let p_vec = tape.reshape(p_gen_g, &[ng]);
        let c2 = tape.constant(Tensor::vector(g.cost_c2.clone()));
        let c1 = tape.constant(Tensor::vector(g.cost_c1.clone()));
        let p2 = tape.square(p_vec);
        let quad = tape.mul(p2, c2);
        let lin = tape.mul(p_vec, c1);
        let q_s = tape.sum(quad);
        let l_s = tape.sum(lin);
        let mut cost = tape.add(q_s, l_s);
        cost = tape.add_scalar(cost, g.cost_c0);
        let gap = tape.add_scalar(cost, -g.label_cost.expect("label cost present"));
        let gap = tape.abs(gap);
        obj_sum = Some(match obj_sum {
            None => gap,
            Some(acc) => tape.add(acc, gap),
        });
    }
    let obj = obj_sum.expect("batch is non-empty");
    let obj = tape.scale(obj, 1.0 / n_graphs);

    // residual-magnitude regularization (zero by definition in direct mode)
    let res = match mode {
        HeadMode::Direct => tape.constant(Tensor::scalar(0.0)),
        HeadMode::Residual => {
            let sv = tape.square(out.dv);
            let st = tape.square(out.dtheta);
            let sp = tape.square(out.dp);
            let sq = tape.square(out.dq);
            let ss = tape.square(out.ds);
            let s1 = tape.sum(sv);
            let s2 = tape.sum(st);
            let s3 = tape.sum(sp);
            let s4 = tape.sum(sq);
            let s5 = tape.sum(ss);
            let mut r = tape.add(s1, s2);
            r = tape.add(r, s3);
            r = tape.add(r, s4);
            r = tape.add(r, s5);
            tape.scale(r, 1.0 / n_graphs)
        }
    };

    let wpf = tape.scale(pf, weights.lambda_pf);
    let wbox = tape.scale(box_, weights.lambda_box);
    let wobj = tape.scale(obj, weights.lambda_obj);
    let wres = tape.scale(res, weights.lambda_res);
    let mut total = tape.add(sup, wpf);
    total = tape.add(total, wbox);
    total = tape.add(total, wobj);
    total = tape.add(total, wres);

    LossVars {
        total,
        sup,
        pf,
        box_,
        obj,
        res,
    }
}
