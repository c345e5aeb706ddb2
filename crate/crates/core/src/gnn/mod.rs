//! Topology-aware local-attention GNN with typed messages, two-level DC
//! conditioning, mean-pooled global context, and a shared residual head.
//!
//! Message passing follows the electrical connectivity exactly: each node
//! attends over its direct neighbors only, with one softmax per node
//! jointly across edge types. DC quantities enter twice: concatenated with
//! raw node/edge features before encoding, and again (as the flattened
//! solution vector) at the prediction head.

pub mod batch;
mod checkpoint;

pub use batch::{prepare_scenario, GraphBatch, GraphData};
pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::acpf::OperatingPoint;
use crate::autodiff::{Tape, Tensor, Var};
use batch::{D_NODE, EDGE_TYPES, F_BUS, F_GEN, F_LOAD, N_EDGE_TYPES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("batch rejected: {0}")]
    Batch(String),
}

/// Whether the heads emit corrections on top of the warm start or the
/// full solution directly (the ablation of the residual formulation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    Residual,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width.
    pub d_h: usize,
    /// Attention key width.
    pub d_k: usize,
    /// Message-passing layers K.
    pub layers: usize,
    /// Shared trunk width.
    pub d_t: usize,
    /// Hidden width of the ψ bias nets.
    pub psi_width: usize,
    /// Padded width of the flattened DC solution vector.
    pub y_dc_width: usize,
    pub mode: HeadMode,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_h: 64,
            d_k: 32,
            layers: 4,
            d_t: 64,
            psi_width: 16,
            y_dc_width: 32,
            mode: HeadMode::Residual,
            seed: 1,
        }
    }
}

/// All learnable tensors, addressed by stable names in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Seeded uniform(-1/√fan_in, 1/√fan_in) weights, zero biases,
    /// unit layer-norm gains.
    pub fn init(config: ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ModelParams {
            config: config.clone(),
            names: Vec::new(),
            tensors: Vec::new(),
        };
        let c = &config;
        let mut weight = |p: &mut ModelParams, name: String, rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            p.register(name, Tensor::matrix(rows, cols, data));
        };
        let bias = |p: &mut ModelParams, name: String, n: usize| {
            p.register(name, Tensor::vector(vec![0.0; n]));
        };
        let ones = |p: &mut ModelParams, name: String, n: usize| {
            p.register(name, Tensor::vector(vec![1.0; n]));
        };

        for (kind, f_in) in [
            ("bus", F_BUS + D_NODE),
            ("gen", F_GEN + D_NODE),
            ("load", F_LOAD + D_NODE),
        ] {
            weight(&mut p, format!("enc.{kind}.w1"), f_in, c.d_h);
            bias(&mut p, format!("enc.{kind}.b1"), c.d_h);
            weight(&mut p, format!("enc.{kind}.w2"), c.d_h, c.d_h);
            bias(&mut p, format!("enc.{kind}.b2"), c.d_h);
        }
        for ty in EDGE_TYPES {
            let f_in = ty.feature_width() + 1;
            weight(&mut p, format!("enc.{}.w1", ty.name()), f_in, c.d_h);
            bias(&mut p, format!("enc.{}.b1", ty.name()), c.d_h);
            weight(&mut p, format!("enc.{}.w2", ty.name()), c.d_h, c.d_h);
            bias(&mut p, format!("enc.{}.b2", ty.name()), c.d_h);
        }
        for ty in EDGE_TYPES {
            let f_in = ty.feature_width();
            weight(&mut p, format!("psi_geo.{}.w1", ty.name()), f_in, c.psi_width);
            bias(&mut p, format!("psi_geo.{}.b1", ty.name()), c.psi_width);
            weight(&mut p, format!("psi_geo.{}.w2", ty.name()), c.psi_width, 1);
            bias(&mut p, format!("psi_geo.{}.b2", ty.name()), 1);
        }
        weight(&mut p, "psi_dc.w1".into(), 1, c.psi_width);
        bias(&mut p, "psi_dc.b1".into(), c.psi_width);
        weight(&mut p, "psi_dc.w2".into(), c.psi_width, 1);
        bias(&mut p, "psi_dc.b2".into(), 1);

        for l in 0..c.layers {
            weight(&mut p, format!("layer{l}.wq"), c.d_h, c.d_k);
            for ty in EDGE_TYPES {
                weight(&mut p, format!("layer{l}.{}.wk", ty.name()), 2 * c.d_h, c.d_k);
                weight(&mut p, format!("layer{l}.{}.wv", ty.name()), 2 * c.d_h, c.d_h);
            }
            weight(&mut p, format!("layer{l}.wh"), 2 * c.d_h, c.d_h);
            bias(&mut p, format!("layer{l}.bh"), c.d_h);
            ones(&mut p, format!("layer{l}.ln_g"), c.d_h);
            bias(&mut p, format!("layer{l}.ln_b"), c.d_h);
        }

        let head_in = 2 * c.d_h + c.y_dc_width;
        let head_in_br = 4 * c.d_h + c.y_dc_width;
        weight(&mut p, "head.proj_bus.w".into(), head_in, c.d_t);
        bias(&mut p, "head.proj_bus.b".into(), c.d_t);
        weight(&mut p, "head.proj_gen.w".into(), head_in, c.d_t);
        bias(&mut p, "head.proj_gen.b".into(), c.d_t);
        weight(&mut p, "head.proj_br.w".into(), head_in_br, c.d_t);
        bias(&mut p, "head.proj_br.b".into(), c.d_t);
        weight(&mut p, "head.trunk.w".into(), c.d_t, c.d_t);
        bias(&mut p, "head.trunk.b".into(), c.d_t);
        weight(&mut p, "head.out.w".into(), c.d_t, 5);
        bias(&mut p, "head.out.b".into(), 5);
        p
    }

    fn register(&mut self, name: String, t: Tensor) {
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        &mut self.tensors[i]
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

/// Per-quantity corrections (or direct predictions in `Direct` mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector {
    pub dv: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub dp_g: Vec<f64>,
    pub dq_g: Vec<f64>,
    pub ds: Vec<f64>,
}

impl ResidualVector {
    pub fn zeros(net_like: &GraphData) -> Self {
        ResidualVector {
            dv: vec![0.0; net_like.n_bus],
            dtheta: vec![0.0; net_like.n_bus],
            dp_g: vec![0.0; net_like.n_gen],
            dq_g: vec![0.0; net_like.n_gen],
            ds: vec![0.0; net_like.n_branch],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dv
            .iter()
            .chain(&self.dtheta)
            .chain(&self.dp_g)
            .chain(&self.dq_g)
            .chain(&self.ds)
            .all(|x| x.is_finite())
    }
}

/// Elementwise reconstruction x̂ = x⁰ + Δ (Δ|S| on top of |F^DC|); no
/// clamping, limits are the loss's business.
pub fn reconstruct(x0: &OperatingPoint, delta: &ResidualVector) -> OperatingPoint {
    let s0 = x0
        .s_branch
        .as_ref()
        .expect("warm start carries branch baselines");
    OperatingPoint {
        p_g: x0.p_g.iter().zip(&delta.dp_g).map(|(a, b)| a + b).collect(),
        q_g: x0.q_g.iter().zip(&delta.dq_g).map(|(a, b)| a + b).collect(),
        v: x0.v.iter().zip(&delta.dv).map(|(a, b)| a + b).collect(),
        theta: x0
            .theta
            .iter()
            .zip(&delta.dtheta)
            .map(|(a, b)| a + b)
            .collect(),
        s_branch: Some(s0.iter().zip(&delta.ds).map(|(a, b)| a + b).collect()),
    }
}

/// Inverse of [`reconstruct`]: the residual that maps the warm start onto
/// a label.
pub fn residual_delta(label: &OperatingPoint, x0: &OperatingPoint) -> ResidualVector {
    let s0 = x0
        .s_branch
        .as_ref()
        .expect("warm start carries branch baselines");
    let s_label = label
        .s_branch
        .as_ref()
        .expect("label carries branch flows");
    ResidualVector {
        dv: label.v.iter().zip(&x0.v).map(|(a, b)| a - b).collect(),
        dtheta: label
            .theta
            .iter()
            .zip(&x0.theta)
            .map(|(a, b)| a - b)
            .collect(),
        dp_g: label.p_g.iter().zip(&x0.p_g).map(|(a, b)| a - b).collect(),
        dq_g: label.q_g.iter().zip(&x0.q_g).map(|(a, b)| a - b).collect(),
        ds: s_label.iter().zip(s0).map(|(a, b)| a - b).collect(),
    }
}

/// Head outputs over a whole batch, still on the tape.
pub struct BatchOutputs {
    /// Length nb_total.
    pub dv: Var,
    pub dtheta: Var,
    /// Length ng_total.
    pub dp: Var,
    pub dq: Var,
    /// Length nbr_total.
    pub ds: Var,
}

/// Taped forward state: parameter vars by name plus intermediate tables.
pub struct Forward {
    param_vars: Vec<Var>,
    names: Vec<String>,
}

impl Forward {
    /// Pushes every parameter tensor onto the tape as a differentiable
    /// leaf, in registration order.
    pub fn new(tape: &mut Tape, params: &ModelParams) -> Self {
        let param_vars = params
            .tensors()
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect();
        Forward {
            param_vars,
            names: params.names().to_vec(),
        }
    }

    /// Wraps parameter vars that are already on a tape (gradient-check
    /// harnesses push them as plain leaves).
    pub fn from_vars(param_vars: Vec<Var>, names: Vec<String>) -> Self {
        assert_eq!(param_vars.len(), names.len());
        Forward { param_vars, names }
    }

    pub fn var(&self, name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        self.param_vars[i]
    }

    pub fn param_vars(&self) -> &[Var] {
        &self.param_vars
    }

    fn mlp2(&self, tape: &mut Tape, x: Var, prefix: &str) -> Var {
        let a = tape.matmul(x, self.var(&format!("{prefix}.w1")));
        let a = tape.add_bias(a, self.var(&format!("{prefix}.b1")));
        let a = tape.relu(a);
        let a = tape.matmul(a, self.var(&format!("{prefix}.w2")));
        tape.add_bias(a, self.var(&format!("{prefix}.b2")))
    }

    /// Initial embeddings: h⁰ from per-kind encoders over `[x ‖ d^DC]`,
    /// e⁰ per edge type over `[x_e ‖ F^DC]`. Returns the stacked node
    /// table (buses, generators, loads), per-type edge embeddings, and the
    /// branch-major edge embedding table for the heads.
    pub fn encode(&self, tape: &mut Tape, batch: &GraphBatch) -> (Var, [Var; N_EDGE_TYPES], Var) {
        let bus_in = tape.constant(batch.bus_x.clone());
        let gen_in = tape.constant(batch.gen_x.clone());
        let load_in = tape.constant(batch.load_x.clone());
        let h_bus = self.mlp2(tape, bus_in, "enc.bus");
        let h_gen = self.mlp2(tape, gen_in, "enc.gen");
        let h_load = self.mlp2(tape, load_in, "enc.load");
        let h = tape.concat_rows(&[h_bus, h_gen, h_load]);

        let edge_embs = EDGE_TYPES.map(|ty| {
            let feats = tape.constant(batch.edge_feat[ty as usize].clone());
            let d = tape.constant(batch.edge_d[ty as usize].clone());
            let cat = tape.concat_cols(&[feats, d]);
            self.mlp2(tape, cat, &format!("enc.{}", ty.name()))
        });

        let stacked = tape.concat_rows(&[
            edge_embs[batch::EdgeType::AcLine as usize],
            edge_embs[batch::EdgeType::Transformer as usize],
        ]);
        let branch_e = if batch.nbr_total > 0 {
            tape.gather_rows(stacked, &batch.branch_stack_row)
        } else {
            stacked
        };
        (h, edge_embs, branch_e)
    }

    /// ψ bias nets: scalar logit offsets from raw edge features and from
    /// the DC flow. Shared across layers.
    fn psi(&self, tape: &mut Tape, x: Var, prefix: &str) -> Var {
        let out = self.mlp2(tape, x, prefix);
        let rows = tape.value(out).rows();
        tape.reshape(out, &[rows])
    }

    /// One round of typed attention message passing:
    /// logits `(W_q h_i)ᵀ W_k[h_j ‖ e_ij]/√d_k + ψ_geo(x_ij) + ψ_dc(F_ij)`,
    /// softmax jointly over all neighbors of each node, aggregation with
    /// per-type value transforms, then `LN(h + ReLU(W_h[h ‖ m]))`.
    /// Nodes without in-edges keep m = 0.
    pub fn attention_layer(
        &self,
        tape: &mut Tape,
        batch: &GraphBatch,
        h: Var,
        edge_embs: &[Var; N_EDGE_TYPES],
        layer: usize,
    ) -> Var {
        let n = batch.n_nodes();
        let d_k_scale = 1.0 / (tape.value(self.var(&format!("layer{layer}.wq"))).cols() as f64).sqrt();
        let q_all = tape.matmul(h, self.var(&format!("layer{layer}.wq")));

        let mut logit_parts = Vec::new();
        let mut value_parts = Vec::new();
        let mut dst_all = Vec::new();
        for ty in EDGE_TYPES {
            let e_count = batch.src[ty as usize].len();
            if e_count == 0 {
                continue;
            }
            let h_src = tape.gather_rows(h, &batch.src[ty as usize]);
            let cat = tape.concat_cols(&[h_src, edge_embs[ty as usize]]);
            let k = tape.matmul(cat, self.var(&format!("layer{layer}.{}.wk", ty.name())));
            let v = tape.matmul(cat, self.var(&format!("layer{layer}.{}.wv", ty.name())));
            let q_dst = tape.gather_rows(q_all, &batch.dst[ty as usize]);
            let qk = tape.mul(q_dst, k);
            let dot = tape.row_sum(qk);
            let dot = tape.scale(dot, d_k_scale);

            let feats = tape.constant(batch.edge_feat[ty as usize].clone());
            let geo = self.psi(tape, feats, &format!("psi_geo.{}", ty.name()));
            let d = tape.constant(batch.edge_d[ty as usize].clone());
            let dc = self.psi(tape, d, "psi_dc");
            let logit = tape.add(dot, geo);
            let logit = tape.add(logit, dc);
            let logit_col = tape.reshape(logit, &[e_count, 1]);
            logit_parts.push(logit_col);
            value_parts.push(v);
            dst_all.extend_from_slice(&batch.dst[ty as usize]);
        }

        let msg = if logit_parts.is_empty() {
            let zero = Tensor::zeros(&[n, tape.value(h).cols()]);
            tape.constant(zero)
        } else {
            let logits_col = tape.concat_rows(&logit_parts);
            let e_total = tape.value(logits_col).rows();
            let logits = tape.reshape(logits_col, &[e_total]);
            let alpha = tape.segment_softmax(logits, &dst_all, n);
            let values = tape.concat_rows(&value_parts);
            let weighted = tape.row_scale(values, alpha);
            tape.segment_sum(weighted, &dst_all, n)
        };

        let cat = tape.concat_cols(&[h, msg]);
        let upd = tape.matmul(cat, self.var(&format!("layer{layer}.wh")));
        let upd = tape.add_bias(upd, self.var(&format!("layer{layer}.bh")));
        let upd = tape.relu(upd);
        let pre = tape.add(h, upd);
        tape.layer_norm(
            pre,
            self.var(&format!("layer{layer}.ln_g")),
            self.var(&format!("layer{layer}.ln_b")),
        )
    }

    /// Pooled global context + shared-trunk heads. Bus rows produce
    /// (Δv, Δθ), generator rows (Δp, Δq), branch rows Δ|S|, as column
    /// slices of one output matrix. Δθ is pinned to zero at each slack.
    pub fn predict_residuals(
        &self,
        tape: &mut Tape,
        batch: &GraphBatch,
        h: Var,
        branch_e: Var,
    ) -> BatchOutputs {
        let d_h = tape.value(h).cols();
        let expected_y = tape.value(self.var("head.proj_bus.w")).rows() - 2 * d_h;
        assert_eq!(
            batch.y_width, expected_y,
            "batch y^DC width {} does not match model width {}",
            batch.y_width, expected_y
        );
        let bus_rows: Vec<usize> = (0..batch.nb_total).collect();
        let h_bus = tape.gather_rows(h, &bus_rows);
        let z_g = tape.segment_mean(h_bus, &batch.graph_of_bus, batch.n_graphs());

        let y_rows = |tape: &mut Tape, graph_of: &[usize]| -> Var {
            let mut data = Vec::with_capacity(graph_of.len() * batch.y_width);
            for &g in graph_of {
                data.extend_from_slice(&batch.y_dc_rows[g]);
            }
            tape.constant(Tensor::matrix(graph_of.len(), batch.y_width, data))
        };

        // bus head
        let z_bus = tape.gather_rows(z_g, &batch.graph_of_bus);
        let y_bus = y_rows(tape, &batch.graph_of_bus);
        let in_bus = tape.concat_cols(&[h_bus, z_bus, y_bus]);
        let t_bus = self.trunk(tape, in_bus, "head.proj_bus");
        let dv = self.out_slice(tape, t_bus, 0);
        let dtheta_raw = self.out_slice(tape, t_bus, 1);
        let mask = tape.constant(Tensor::vector(batch.theta_mask.clone()));
        let dtheta = tape.mul(dtheta_raw, mask);

        // generator head
        let gen_rows: Vec<usize> = (batch.nb_total..batch.nb_total + batch.ng_total).collect();
        let h_gen = tape.gather_rows(h, &gen_rows);
        let z_gen = tape.gather_rows(z_g, &batch.graph_of_gen);
        let y_gen = y_rows(tape, &batch.graph_of_gen);
        let in_gen = tape.concat_cols(&[h_gen, z_gen, y_gen]);
        let t_gen = self.trunk(tape, in_gen, "head.proj_gen");
        let dp = self.out_slice(tape, t_gen, 2);
        let dq = self.out_slice(tape, t_gen, 3);

        // branch head
        let ds = if batch.nbr_total > 0 {
            let h_from = tape.gather_rows(h, &batch.branch_from);
            let h_to = tape.gather_rows(h, &batch.branch_to);
            let z_br = tape.gather_rows(z_g, &batch.graph_of_branch);
            let y_br = y_rows(tape, &batch.graph_of_branch);
            let in_br = tape.concat_cols(&[h_from, h_to, branch_e, z_br, y_br]);
            let t_br = self.trunk(tape, in_br, "head.proj_br");
            self.out_slice(tape, t_br, 4)
        } else {
            let _ = d_h;
            tape.constant(Tensor::vector(vec![]))
        };

        BatchOutputs {
            dv,
            dtheta,
            dp,
            dq,
            ds,
        }
    }

    fn trunk(&self, tape: &mut Tape, input: Var, proj: &str) -> Var {
        let a = tape.matmul(input, self.var(&format!("{proj}.w")));
        let a = tape.add_bias(a, self.var(&format!("{proj}.b")));
        let a = tape.relu(a);
        let a = tape.matmul(a, self.var("head.trunk.w"));
        let a = tape.add_bias(a, self.var("head.trunk.b"));
        let a = tape.relu(a);
        let a = tape.matmul(a, self.var("head.out.w"));
        tape.add_bias(a, self.var("head.out.b"))
    }

    fn out_slice(&self, tape: &mut Tape, t: Var, col: usize) -> Var {
        let s = tape.slice_cols(t, col, col + 1);
        let rows = tape.value(s).rows();
        tape.reshape(s, &[rows])
    }

    /// Full forward pass: encode, K attention layers, heads. Also returns
    /// the final node table for inspection.
    pub fn run(&self, tape: &mut Tape, batch: &GraphBatch, layers: usize) -> (BatchOutputs, Var) {
        let (mut h, edge_embs, branch_e) = self.encode(tape, batch);
        for l in 0..layers {
            h = self.attention_layer(tape, batch, h, &edge_embs, l);
        }
        let out = self.predict_residuals(tape, batch, h, branch_e);
        (out, h)
    }
}

/// Value-level inference: runs the model and splits outputs per graph.
pub fn predict(params: &ModelParams, batch: &GraphBatch) -> Vec<ResidualVector> {
    let mut tape = Tape::new();
    let fwd = Forward::new(&mut tape, params);
    let (out, _) = fwd.run(&mut tape, batch, params.config.layers);
    split_outputs(&tape, batch, &out)
}

/// Splits batch-level head outputs into per-graph residual vectors.
pub fn split_outputs(tape: &Tape, batch: &GraphBatch, out: &BatchOutputs) -> Vec<ResidualVector> {
    let dv = &tape.value(out.dv).data;
    let dtheta = &tape.value(out.dtheta).data;
    let dp = &tape.value(out.dp).data;
    let dq = &tape.value(out.dq).data;
    let ds = &tape.value(out.ds).data;
    (0..batch.n_graphs())
        .map(|gi| {
            let br = batch.bus_range(gi);
            let gr = batch.gen_range(gi);
            let kr = batch.branch_range(gi);
            ResidualVector {
                dv: dv[br.clone()].to_vec(),
                dtheta: dtheta[br].to_vec(),
                dp_g: dp[gr.clone()].to_vec(),
                dq_g: dq[gr].to_vec(),
                ds: ds[kr].to_vec(),
            }
        })
        .collect()
}

/// Applies head outputs according to the mode: residual reconstruction on
/// the warm start, or direct interpretation of the outputs as the
/// operating point.
pub fn apply_mode(mode: HeadMode, x0: &OperatingPoint, delta: &ResidualVector) -> OperatingPoint {
    match mode {
        HeadMode::Residual => reconstruct(x0, delta),
        HeadMode::Direct => OperatingPoint {
            p_g: delta.dp_g.clone(),
            q_g: delta.dq_g.clone(),
            v: delta.dv.clone(),
            theta: delta.dtheta.clone(),
            s_branch: Some(delta.ds.clone()),
        },
    }
}
