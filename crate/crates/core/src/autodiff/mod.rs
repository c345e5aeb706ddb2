//! Minimal reverse-mode differentiation over dense row-major tensors.
//!
//! The op set is exactly what the attention GNN and the physics loss
//! consume: matrix products, concatenation/slicing/gathering, segment
//! softmax/sum/mean over ragged neighbor lists, layer norm, ReLU/hinge,
//! trig, and scalar reductions. 64-bit floats throughout; a [`Tape`] is
//! confined to one execution context and replays deterministically.
//!
//! Shape mismatches are contract violations and panic with both shapes in
//! the message.

mod check;

pub use check::{grad_check, GradCheckReport};

/// Dense row-major tensor. Rank 0/1/2 cover everything here.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[1],
        }
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }
}

fn same_shape(what: &str, a: &Tensor, b: &Tensor) {
    assert_eq!(
        a.shape, b.shape,
        "{what}: shape mismatch {:?} vs {:?}",
        a.shape, b.shape
    );
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    RowScale(Var, Var),
    RowSum(Var),
    SegmentSoftmax { x: Var, seg: Vec<usize> },
    SegmentSum { x: Var, seg: Vec<usize> },
    SegmentMean { x: Var, seg: Vec<usize>, counts: Vec<f64> },
    Relu(Var),
    Square(Var),
    Abs(Var),
    Sin(Var),
    Cos(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, mean: Vec<f64>, inv_std: Vec<f64> },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records primitive applications in topological order; `backward` visits
/// each node once in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by tape node, shaped like the node values.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the backward root w.r.t. `v`; zero tensor for leaves
    /// that did not participate.
    pub fn get(&self, tape: &Tape, v: Var) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&tape.nodes[v.0].value.shape))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            ta.shape.len(),
            2,
            "matmul lhs must be rank 2, got {:?}",
            ta.shape
        );
        assert_eq!(
            tb.shape.len(),
            2,
            "matmul rhs must be rank 2, got {:?}",
            tb.shape
        );
        assert_eq!(
            ta.shape[1], tb.shape[0],
            "matmul: inner dims differ, {:?} vs {:?}",
            ta.shape, tb.shape
        );
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = ta.data[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &tb.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape("add", ta, tb);
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let t = Tensor {
            shape: ta.shape.clone(),
            data,
        };
        let needs = self.needs(a) || self.needs(b);
        self.push(t, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape("sub", ta, tb);
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        let t = Tensor {
            shape: ta.shape.clone(),
            data,
        };
        let needs = self.needs(a) || self.needs(b);
        self.push(t, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape("mul", ta, tb);
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let t = Tensor {
            shape: ta.shape.clone(),
            data,
        };
        let needs = self.needs(a) || self.needs(b);
        self.push(t, Op::Mul(a, b), needs)
    }

    /// Adds a length-n bias vector to every row of an m×n matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        assert_eq!(
            ta.cols(),
            tb.len(),
            "add_bias: {:?} rows cannot take bias {:?}",
            ta.shape,
            tb.shape
        );
        let n = ta.cols();
        let data = ta
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x + tb.data[i % n])
            .collect();
        let t = Tensor {
            shape: ta.shape.clone(),
            data,
        };
        let needs = self.needs(a) || self.needs(bias);
        self.push(t, Op::AddBias(a, bias), needs)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x * s).collect(),
        };
        let needs = self.needs(a);
        self.push(t, Op::Scale(a, s), needs)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x + s).collect(),
        };
        let needs = self.needs(a);
        self.push(t, Op::AddScalar(a), needs)
    }

    /// Concatenates matrices with equal row counts along the feature axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let m = self.nodes[parts[0].0].value.rows();
        let total: usize = parts
            .iter()
            .map(|p| {
                let t = &self.nodes[p.0].value;
                assert_eq!(
                    t.rows(),
                    m,
                    "concat_cols: row mismatch {:?} vs {m} rows",
                    t.shape
                );
                t.cols()
            })
            .sum();
        let mut data = vec![0.0; m * total];
        let mut at = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            let c = t.cols();
            for r in 0..m {
                data[r * total + at..r * total + at + c]
                    .copy_from_slice(&t.data[r * c..(r + 1) * c]);
            }
            at += c;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor::matrix(m, total, data),
            Op::ConcatCols(parts.to_vec()),
            needs,
        )
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let c = self.nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut m = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(
                t.cols(),
                c,
                "concat_rows: col mismatch {:?} vs {c} cols",
                t.shape
            );
            data.extend_from_slice(&t.data);
            m += t.rows();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor::matrix(m, c, data),
            Op::ConcatRows(parts.to_vec()),
            needs,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        let (m, n) = (ta.rows(), ta.cols());
        assert!(
            start < end && end <= n,
            "slice_cols {start}..{end} out of {:?}",
            ta.shape
        );
        let w = end - start;
        let mut data = vec![0.0; m * w];
        for r in 0..m {
            data[r * w..(r + 1) * w].copy_from_slice(&ta.data[r * n + start..r * n + end]);
        }
        let needs = self.needs(a);
        self.push(Tensor::matrix(m, w, data), Op::SliceCols(a, start, end), needs)
    }

    /// Selects rows by index (duplicates allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let ta = &self.nodes[a.0].value;
        let (m, n) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; idx.len() * n];
        for (r, &i) in idx.iter().enumerate() {
            assert!(i < m, "gather_rows: index {i} out of {m} rows");
            data[r * n..(r + 1) * n].copy_from_slice(&ta.data[i * n..(i + 1) * n]);
        }
        let needs = self.needs(a);
        self.push(
            Tensor::matrix(idx.len(), n, data),
            Op::GatherRows(a, idx.to_vec()),
            needs,
        )
    }

    /// Scales row r of an m×n matrix by w[r].
    pub fn row_scale(&mut self, x: Var, w: Var) -> Var {
        let (tx, tw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        assert_eq!(
            tx.rows(),
            tw.len(),
            "row_scale: {:?} rows vs weights {:?}",
            tx.shape,
            tw.shape
        );
        let n = tx.cols();
        let data = tx
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| v * tw.data[i / n])
            .collect();
        let t = Tensor {
            shape: tx.shape.clone(),
            data,
        };
        let needs = self.needs(x) || self.needs(w);
        self.push(t, Op::RowScale(x, w), needs)
    }

    /// Per-row sum: m×n → length-m vector.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let tx = &self.nodes[x.0].value;
        let (m, n) = (tx.rows(), tx.cols());
        let data = (0..m)
            .map(|r| tx.data[r * n..(r + 1) * n].iter().sum())
            .collect();
        let needs = self.needs(x);
        self.push(Tensor::vector(data), Op::RowSum(x), needs)
    }

    /// Softmax over entries sharing a segment id, with per-segment max
    /// subtraction. Empty segments simply have no entries.
    pub fn segment_softmax(&mut self, x: Var, seg: &[usize], n_seg: usize) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(
            tx.shape.len(),
            1,
            "segment_softmax expects a vector, got {:?}",
            tx.shape
        );
        assert_eq!(tx.len(), seg.len(), "segment ids must cover every entry");
        let mut maxes = vec![f64::NEG_INFINITY; n_seg];
        for (i, &s) in seg.iter().enumerate() {
            assert!(s < n_seg, "segment id {s} out of {n_seg}");
            maxes[s] = maxes[s].max(tx.data[i]);
        }
        let mut sums = vec![0.0; n_seg];
        let mut out = vec![0.0; tx.len()];
        for (i, &s) in seg.iter().enumerate() {
            out[i] = (tx.data[i] - maxes[s]).exp();
            sums[s] += out[i];
        }
        for (i, &s) in seg.iter().enumerate() {
            out[i] /= sums[s];
        }
        let needs = self.needs(x);
        self.push(
            Tensor::vector(out),
            Op::SegmentSoftmax {
                x,
                seg: seg.to_vec(),
            },
            needs,
        )
    }

    /// Sums rows into their segment; empty segments stay zero.
    pub fn segment_sum(&mut self, x: Var, seg: &[usize], n_seg: usize) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(tx.rows(), seg.len(), "segment ids must cover every row");
        let n = tx.cols();
        let mut data = vec![0.0; n_seg * n];
        for (r, &s) in seg.iter().enumerate() {
            assert!(s < n_seg, "segment id {s} out of {n_seg}");
            for c in 0..n {
                data[s * n + c] += tx.data[r * n + c];
            }
        }
        let needs = self.needs(x);
        self.push(
            Tensor::matrix(n_seg, n, data),
            Op::SegmentSum {
                x,
                seg: seg.to_vec(),
            },
            needs,
        )
    }

    /// Averages rows into their segment; empty segments stay zero.
    pub fn segment_mean(&mut self, x: Var, seg: &[usize], n_seg: usize) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(tx.rows(), seg.len(), "segment ids must cover every row");
        let n = tx.cols();
        let mut counts = vec![0.0f64; n_seg];
        for &s in seg {
            assert!(s < n_seg, "segment id {s} out of {n_seg}");
            counts[s] += 1.0;
        }
        let mut data = vec![0.0; n_seg * n];
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..n {
                data[s * n + c] += tx.data[r * n + c] / counts[s];
            }
        }
        let needs = self.needs(x);
        self.push(
            Tensor::matrix(n_seg, n, data),
            Op::SegmentMean {
                x,
                seg: seg.to_vec(),
                counts,
            },
            needs,
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x.max(0.0)).collect(),
        };
        let needs = self.needs(a);
        self.push(t, Op::Relu(a), needs)
    }

    /// Hinge [x]+ — same forward/backward as ReLU, named for the loss
    /// terms it implements.
    pub fn hinge(&mut self, a: Var) -> Var {
        self.relu(a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x * x).collect(),
        };
        let needs = self.needs(a);
        self.push(t, Op::Square(a), needs)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x.abs()).collect(),
        };
        let needs = self.needs(a);
        self.push(t, Op::Abs(a), needs)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x.sin()).collect(),
        };
        let needs = self.needs(a);
        self.push(t, Op::Sin(a), needs)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x.cos()).collect(),
        };
        let needs = self.needs(a);
        self.push(t, Op::Cos(a), needs)
    }

    /// Per-row layer normalization with learned gain/bias, ε = 1e-5 inside
    /// the square root.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        const EPS: f64 = 1e-5;
        let tx = &self.nodes[x.0].value;
        let (m, n) = (tx.rows(), tx.cols());
        let tg = &self.nodes[gain.0].value;
        let tb = &self.nodes[bias.0].value;
        assert_eq!(
            tg.len(),
            n,
            "layer_norm: gain {:?} vs {n} features",
            tg.shape
        );
        assert_eq!(
            tb.len(),
            n,
            "layer_norm: bias {:?} vs {n} features",
            tb.shape
        );
        let mut mean = vec![0.0; m];
        let mut inv_std = vec![0.0; m];
        let mut data = vec![0.0; m * n];
        for r in 0..m {
            let row = &tx.data[r * n..(r + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + EPS).sqrt();
            mean[r] = mu;
            inv_std[r] = is;
            for c in 0..n {
                data[r * n + c] = (row[c] - mu) * is * tg.data[c] + tb.data[c];
            }
        }
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(
            Tensor::matrix(m, n, data),
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                inv_std,
            },
            needs,
        )
    }

    /// Reinterprets the data with a new shape of identical length.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(
            ta.len(),
            shape.iter().product::<usize>(),
            "reshape {:?} -> {:?} changes length",
            ta.shape,
            shape
        );
        let t = Tensor {
            shape: shape.to_vec(),
            data: ta.data.clone(),
        };
        let needs = self.needs(a);
        self.push(t, Op::Reshape(a), needs)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::scalar(ta.data.iter().sum());
        let needs = self.needs(a);
        self.push(t, Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        assert!(!ta.is_empty(), "mean of empty tensor");
        let t = Tensor::scalar(ta.data.iter().sum::<f64>() / ta.len() as f64);
        let needs = self.needs(a);
        self.push(t, Op::Mean(a), needs)
    }

    /// Reverse pass from a scalar root. Each node is visited once; leaves
    /// that did not participate read back as zero.
    pub fn backward(&self, root: Var) -> Gradients {
        let root_t = &self.nodes[root.0].value;
        assert_eq!(
            root_t.len(),
            1,
            "backward root must be scalar, got {:?}",
            root_t.shape
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor {
            shape: root_t.shape.clone(),
            data: vec![1.0],
        });

        for idx in (0..=root.0).rev() {
            if grads[idx].is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let g = grads[idx].take().unwrap();
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn add_into(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => {
                for (a, b) in t.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn accumulate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                if self.needs(*a) {
                    // ga = g · bᵀ
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g.data[i * n + j] * tb.data[p * n + j];
                            }
                            ga[i * k + p] = s;
                        }
                    }
                    self.add_into(grads, *a, Tensor::matrix(m, k, ga));
                }
                if self.needs(*b) {
                    // gb = aᵀ · g
                    let mut gb = vec![0.0; k * n];
                    for p in 0..k {
                        for i in 0..m {
                            let av = ta.data[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += av * g.data[i * n + j];
                            }
                        }
                    }
                    self.add_into(grads, *b, Tensor::matrix(k, n, gb));
                }
            }
            Op::Add(a, b) => {
                self.add_into(grads, *a, g.clone());
                self.add_into(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.add_into(grads, *a, g.clone());
                let neg = Tensor {
                    shape: g.shape.clone(),
                    data: g.data.iter().map(|x| -x).collect(),
                };
                self.add_into(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                if self.needs(*a) {
                    let d = g.data.iter().zip(&tb.data).map(|(g, y)| g * y).collect();
                    self.add_into(
                        grads,
                        *a,
                        Tensor {
                            shape: ta.shape.clone(),
                            data: d,
                        },
                    );
                }
                if self.needs(*b) {
                    let d = g.data.iter().zip(&ta.data).map(|(g, x)| g * x).collect();
                    self.add_into(
                        grads,
                        *b,
                        Tensor {
                            shape: tb.shape.clone(),
                            data: d,
                        },
                    );
                }
            }
            Op::AddBias(a, bias) => {
                self.add_into(grads, *a, g.clone());
                if self.needs(*bias) {
                    let n = self.nodes[bias.0].value.len();
                    let mut d = vec![0.0; n];
                    for (i, gv) in g.data.iter().enumerate() {
                        d[i % n] += gv;
                    }
                    self.add_into(grads, *bias, Tensor::vector(d));
                }
            }
            Op::Scale(a, s) => {
                let d = g.data.iter().map(|x| x * s).collect();
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: g.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::AddScalar(a) => self.add_into(grads, *a, g.clone()),
            Op::ConcatCols(parts) => {
                let m = node.value.rows();
                let total = node.value.cols();
                let mut at = 0;
                for p in parts {
                    let c = self.nodes[p.0].value.cols();
                    if self.needs(*p) {
                        let mut d = vec![0.0; m * c];
                        for r in 0..m {
                            d[r * c..(r + 1) * c]
                                .copy_from_slice(&g.data[r * total + at..r * total + at + c]);
                        }
                        self.add_into(grads, *p, Tensor::matrix(m, c, d));
                    }
                    at += c;
                }
            }
            Op::ConcatRows(parts) => {
                let c = node.value.cols();
                let mut at = 0;
                for p in parts {
                    let m = self.nodes[p.0].value.rows();
                    if self.needs(*p) {
                        let d = g.data[at * c..(at + m) * c].to_vec();
                        self.add_into(grads, *p, Tensor::matrix(m, c, d));
                    }
                    at += m;
                }
            }
            Op::SliceCols(a, start, end) => {
                let ta = &self.nodes[a.0].value;
                let (m, n) = (ta.rows(), ta.cols());
                let w = end - start;
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    d[r * n + start..r * n + end].copy_from_slice(&g.data[r * w..(r + 1) * w]);
                }
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::GatherRows(a, idx2) => {
                let ta = &self.nodes[a.0].value;
                let (m, n) = (ta.rows(), ta.cols());
                let mut d = vec![0.0; m * n];
                for (r, &i) in idx2.iter().enumerate() {
                    for c in 0..n {
                        d[i * n + c] += g.data[r * n + c];
                    }
                }
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::RowScale(x, w) => {
                let tx = &self.nodes[x.0].value;
                let tw = &self.nodes[w.0].value;
                let n = tx.cols();
                if self.needs(*x) {
                    let d = g
                        .data
                        .iter()
                        .enumerate()
                        .map(|(i, gv)| gv * tw.data[i / n])
                        .collect();
                    self.add_into(
                        grads,
                        *x,
                        Tensor {
                            shape: tx.shape.clone(),
                            data: d,
                        },
                    );
                }
                if self.needs(*w) {
                    let mut d = vec![0.0; tw.len()];
                    for (i, gv) in g.data.iter().enumerate() {
                        d[i / n] += gv * tx.data[i];
                    }
                    self.add_into(grads, *w, Tensor::vector(d));
                }
            }
            Op::RowSum(x) => {
                let tx = &self.nodes[x.0].value;
                let (m, n) = (tx.rows(), tx.cols());
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        d[r * n + c] = g.data[r];
                    }
                }
                self.add_into(
                    grads,
                    *x,
                    Tensor {
                        shape: tx.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::SegmentSoftmax { x, seg } => {
                // dx_i = y_i (g_i - Σ_{j in segment} g_j y_j)
                let y = &node.value;
                let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dots = vec![0.0; n_seg];
                for (i, &s) in seg.iter().enumerate() {
                    dots[s] += g.data[i] * y.data[i];
                }
                let d = seg
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| y.data[i] * (g.data[i] - dots[s]))
                    .collect();
                self.add_into(grads, *x, Tensor::vector(d));
            }
            Op::SegmentSum { x, seg } => {
                let tx = &self.nodes[x.0].value;
                let n = tx.cols();
                let mut d = vec![0.0; tx.len()];
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..n {
                        d[r * n + c] = g.data[s * n + c];
                    }
                }
                self.add_into(
                    grads,
                    *x,
                    Tensor {
                        shape: tx.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::SegmentMean { x, seg, counts } => {
                let tx = &self.nodes[x.0].value;
                let n = tx.cols();
                let mut d = vec![0.0; tx.len()];
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..n {
                        d[r * n + c] = g.data[s * n + c] / counts[s];
                    }
                }
                self.add_into(
                    grads,
                    *x,
                    Tensor {
                        shape: tx.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::Relu(a) => {
                let ta = &self.nodes[a.0].value;
                let d = g
                    .data
                    .iter()
                    .zip(&ta.data)
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::Square(a) => {
                let ta = &self.nodes[a.0].value;
                let d = g
                    .data
                    .iter()
                    .zip(&ta.data)
                    .map(|(g, x)| 2.0 * x * g)
                    .collect();
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::Abs(a) => {
                let ta = &self.nodes[a.0].value;
                let d = g
                    .data
                    .iter()
                    .zip(&ta.data)
                    .map(|(g, x)| g * x.signum() * ((*x != 0.0) as i32 as f64))
                    .collect();
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::Sin(a) => {
                let ta = &self.nodes[a.0].value;
                let d = g
                    .data
                    .iter()
                    .zip(&ta.data)
                    .map(|(g, x)| g * x.cos())
                    .collect();
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::Cos(a) => {
                let ta = &self.nodes[a.0].value;
                let d = g
                    .data
                    .iter()
                    .zip(&ta.data)
                    .map(|(g, x)| -g * x.sin())
                    .collect();
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                inv_std,
            } => {
                let tx = &self.nodes[x.0].value;
                let tg = &self.nodes[gain.0].value;
                let (m, n) = (tx.rows(), tx.cols());
                if self.needs(*bias) {
                    let mut d = vec![0.0; n];
                    for (i, gv) in g.data.iter().enumerate() {
                        d[i % n] += gv;
                    }
                    self.add_into(grads, *bias, Tensor::vector(d));
                }
                if self.needs(*gain) {
                    let mut d = vec![0.0; n];
                    for r in 0..m {
                        for (c, dc) in d.iter_mut().enumerate() {
                            let xhat = (tx.data[r * n + c] - mean[r]) * inv_std[r];
                            *dc += g.data[r * n + c] * xhat;
                        }
                    }
                    self.add_into(grads, *gain, Tensor::vector(d));
                }
                if self.needs(*x) {
                    let mut d = vec![0.0; m * n];
                    for r in 0..m {
                        // dxhat = g ⊙ gain; dx = inv_std (dxhat - mean(dxhat) - xhat·mean(dxhat ⊙ xhat))
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xh = 0.0;
                        for c in 0..n {
                            let dxh = g.data[r * n + c] * tg.data[c];
                            let xh = (tx.data[r * n + c] - mean[r]) * inv_std[r];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh;
                        }
                        mean_dxh /= n as f64;
                        mean_dxh_xh /= n as f64;
                        for c in 0..n {
                            let dxh = g.data[r * n + c] * tg.data[c];
                            let xh = (tx.data[r * n + c] - mean[r]) * inv_std[r];
                            d[r * n + c] = inv_std[r] * (dxh - mean_dxh - xh * mean_dxh_xh);
                        }
                    }
                    self.add_into(
                        grads,
                        *x,
                        Tensor {
                            shape: tx.shape.clone(),
                            data: d,
                        },
                    );
                }
            }
            Op::Reshape(a) => {
                let ta = &self.nodes[a.0].value;
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: g.data.clone(),
                    },
                );
            }
            Op::Sum(a) => {
                let ta = &self.nodes[a.0].value;
                let d = vec![g.data[0]; ta.len()];
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
            Op::Mean(a) => {
                let ta = &self.nodes[a.0].value;
                let d = vec![g.data[0] / ta.len() as f64; ta.len()];
                self.add_into(
                    grads,
                    *a,
                    Tensor {
                        shape: ta.shape.clone(),
                        data: d,
                    },
                );
            }
        }
    }
}
