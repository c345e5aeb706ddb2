//! Heterogeneous graph encoding of scenarios and disjoint-union batching.
//!
//! Nodes are buses, generators, and loads; directed message edges mirror
//! the electrical connectivity exactly, two per physical link, each typed
//! as one of `ac_line`, `transformer`, `generator_link`, `load_link`.
//! Every edge carries its DC active flow (sign follows the message
//! direction) so attention can condition on the linear operating state.

use crate::acpf::OperatingPoint;
use crate::autodiff::Tensor;
use crate::dcopf::{DcFeatureSet, DcSolution};
use crate::network::{build_admittance, BranchKind, BusKind, Network};

pub const N_EDGE_TYPES: usize = 4;
pub const F_BUS: usize = 5;
pub const F_GEN: usize = 7;
pub const F_LOAD: usize = 2;
pub const F_BRANCH: usize = 6;
pub const F_LINK: usize = 1;
pub const D_NODE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeType {
    AcLine = 0,
    Transformer = 1,
    GeneratorLink = 2,
    LoadLink = 3,
}

pub const EDGE_TYPES: [EdgeType; N_EDGE_TYPES] = [
    EdgeType::AcLine,
    EdgeType::Transformer,
    EdgeType::GeneratorLink,
    EdgeType::LoadLink,
];

impl EdgeType {
    pub fn feature_width(self) -> usize {
        match self {
            EdgeType::AcLine | EdgeType::Transformer => F_BRANCH,
            EdgeType::GeneratorLink | EdgeType::LoadLink => F_LINK,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::AcLine => "ac_line",
            EdgeType::Transformer => "transformer",
            EdgeType::GeneratorLink => "generator_link",
            EdgeType::LoadLink => "load_link",
        }
    }
}

/// Directed edges of one type within a single graph: forward copies of
/// every physical link first (in element order), then the reverses.
#[derive(Debug, Clone, Default)]
pub struct EdgeBlock {
    /// Local node indices (bus-major: buses, then generators, then loads).
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub feat: Vec<Vec<f64>>,
    /// Signed DC active flow along the message direction.
    pub d_edge: Vec<f64>,
}

/// One scenario prepared for the model: typed features, DC conditioning,
/// warm start, optional label, and the constants the physics loss needs.
#[derive(Debug, Clone)]
pub struct GraphData {
    pub n_bus: usize,
    pub n_gen: usize,
    pub n_load: usize,
    pub n_branch: usize,
    pub bus_x: Vec<Vec<f64>>,
    pub gen_x: Vec<Vec<f64>>,
    pub load_x: Vec<Vec<f64>>,
    pub bus_d: Vec<[f64; 2]>,
    pub gen_d: Vec<[f64; 2]>,
    pub load_d: Vec<[f64; 2]>,
    pub edges: [EdgeBlock; N_EDGE_TYPES],
    /// Branch k -> (edge type, forward-row index within that type block).
    pub branch_edge: Vec<(EdgeType, usize)>,
    /// Branch endpoints as local bus indices.
    pub branch_ends: Vec<(usize, usize)>,
    pub y_dc: Vec<f64>,
    pub warm: OperatingPoint,
    pub label: Option<OperatingPoint>,
    pub slack: usize,
    // loss constants
    pub g_mat: Vec<f64>,
    pub b_mat: Vec<f64>,
    pub p_d: Vec<f64>,
    pub q_d: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    pub q_g_min: Vec<f64>,
    pub q_g_max: Vec<f64>,
    pub s_max: Vec<f64>,
    pub cost_c2: Vec<f64>,
    pub cost_c1: Vec<f64>,
    pub cost_c0: f64,
    pub gen_bus: Vec<usize>,
    pub label_cost: Option<f64>,
}

impl GraphData {
    pub fn build(
        net: &Network,
        sol: &DcSolution,
        feats: &DcFeatureSet,
        warm: OperatingPoint,
        label: Option<OperatingPoint>,
    ) -> Self {
        let n_bus = net.n_buses();
        let n_gen = net.n_gens();
        let n_load = net.loads.len();

        let bus_x: Vec<Vec<f64>> = net
            .buses
            .iter()
            .map(|b| {
                vec![
                    b.v_min,
                    b.v_max,
                    b.shunt_g,
                    b.shunt_b,
                    (b.kind == BusKind::Slack) as i32 as f64,
                ]
            })
            .collect();
        let gen_x: Vec<Vec<f64>> = net
            .generators
            .iter()
            .map(|g| {
                vec![
                    g.p_min, g.p_max, g.q_min, g.q_max, g.cost.c2, g.cost.c1, g.cost.c0,
                ]
            })
            .collect();
        let load_x: Vec<Vec<f64>> = net.loads.iter().map(|l| vec![l.p_d, l.q_d]).collect();

        let bus_d: Vec<[f64; 2]> = feats.node.clone();
        let gen_d: Vec<[f64; 2]> = (0..n_gen)
            .map(|g| [sol.theta_dc[net.gen_bus(g)], sol.p_g_dc[g]])
            .collect();
        let load_d: Vec<[f64; 2]> = net
            .loads
            .iter()
            .map(|l| [sol.theta_dc[net.bus_index(l.bus).unwrap()], -l.p_d])
            .collect();

        let gen_node = |g: usize| n_bus + g;
        let load_node = |l: usize| n_bus + n_gen + l;

        let mut edges: [EdgeBlock; N_EDGE_TYPES] = Default::default();
        let mut branch_edge = Vec::with_capacity(net.n_branches());
        let mut branch_ends = Vec::with_capacity(net.n_branches());
        // forward direction of every branch, in branch order
        for (k, br) in net.branches.iter().enumerate() {
            let ty = match br.kind {
                BranchKind::AcLine => EdgeType::AcLine,
                BranchKind::Transformer => EdgeType::Transformer,
            };
            let (f, t) = net.branch_endpoints(k);
            let block = &mut edges[ty as usize];
            branch_edge.push((ty, block.src.len()));
            branch_ends.push((f, t));
            block.src.push(f);
            block.dst.push(t);
            block
                .feat
                .push(vec![br.r, br.x, br.b_charge, br.tap, br.shift, br.s_max]);
            block.d_edge.push(sol.f_dc[k]);
        }
        // then all reverses
        for (k, br) in net.branches.iter().enumerate() {
            let ty = match br.kind {
                BranchKind::AcLine => EdgeType::AcLine,
                BranchKind::Transformer => EdgeType::Transformer,
            };
            let (f, t) = net.branch_endpoints(k);
            let block = &mut edges[ty as usize];
            block.src.push(t);
            block.dst.push(f);
            block
                .feat
                .push(vec![br.r, br.x, br.b_charge, br.tap, br.shift, br.s_max]);
            block.d_edge.push(-sol.f_dc[k]);
        }
        for g in 0..n_gen {
            let b = net.gen_bus(g);
            let block = &mut edges[EdgeType::GeneratorLink as usize];
            block.src.push(gen_node(g));
            block.dst.push(b);
            block.feat.push(vec![1.0]);
            block.d_edge.push(sol.p_g_dc[g]);
        }
        for g in 0..n_gen {
            let b = net.gen_bus(g);
            let block = &mut edges[EdgeType::GeneratorLink as usize];
            block.src.push(b);
            block.dst.push(gen_node(g));
            block.feat.push(vec![1.0]);
            block.d_edge.push(-sol.p_g_dc[g]);
        }
        for (l, load) in net.loads.iter().enumerate() {
            let b = net.bus_index(load.bus).unwrap();
            let block = &mut edges[EdgeType::LoadLink as usize];
            block.src.push(b);
            block.dst.push(load_node(l));
            block.feat.push(vec![1.0]);
            block.d_edge.push(load.p_d);
        }
        for (l, load) in net.loads.iter().enumerate() {
            let b = net.bus_index(load.bus).unwrap();
            let block = &mut edges[EdgeType::LoadLink as usize];
            block.src.push(load_node(l));
            block.dst.push(b);
            block.feat.push(vec![1.0]);
            block.d_edge.push(-load.p_d);
        }

        let y = build_admittance(net);
        let (p_d, q_d) = net.bus_demand();
        let label_cost = label.as_ref().map(|pt| net.dispatch_cost(&pt.p_g));
        GraphData {
            n_bus,
            n_gen,
            n_load,
            n_branch: net.n_branches(),
            bus_x,
            gen_x,
            load_x,
            bus_d,
            gen_d,
            load_d,
            edges,
            branch_edge,
            branch_ends,
            y_dc: feats.y_dc.clone(),
            warm,
            label,
            slack: net.slack(),
            g_mat: y.g.transpose().as_slice().to_vec(), // row-major
            b_mat: y.b.transpose().as_slice().to_vec(),
            p_d,
            q_d,
            v_min: net.buses.iter().map(|b| b.v_min).collect(),
            v_max: net.buses.iter().map(|b| b.v_max).collect(),
            q_g_min: net.generators.iter().map(|g| g.q_min).collect(),
            q_g_max: net.generators.iter().map(|g| g.q_max).collect(),
            s_max: net.branches.iter().map(|b| b.s_max).collect(),
            cost_c2: net.generators.iter().map(|g| g.cost.c2).collect(),
            cost_c1: net.generators.iter().map(|g| g.cost.c1).collect(),
            cost_c0: net.generators.iter().map(|g| g.cost.c0).sum(),
            gen_bus: (0..n_gen).map(|g| net.gen_bus(g)).collect(),
            label_cost,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_bus + self.n_gen + self.n_load
    }
}

/// Disjoint union of scenario graphs with kind-major global node ids:
/// all buses (graph by graph), then all generators, then all loads.
/// Softmax segments and pooling never cross graph boundaries because
/// edges and segment ids stay within each component.
pub struct GraphBatch {
    pub graphs: Vec<GraphData>,
    pub nb_total: usize,
    pub ng_total: usize,
    pub nl_total: usize,
    pub nbr_total: usize,
    /// Per-type union edge lists with global node ids.
    pub src: [Vec<usize>; N_EDGE_TYPES],
    pub dst: [Vec<usize>; N_EDGE_TYPES],
    pub edge_feat: [Tensor; N_EDGE_TYPES],
    pub edge_d: [Tensor; N_EDGE_TYPES],
    pub bus_x: Tensor,
    pub gen_x: Tensor,
    pub load_x: Tensor,
    /// Graph id per bus/gen/branch row.
    pub graph_of_bus: Vec<usize>,
    pub graph_of_gen: Vec<usize>,
    pub graph_of_branch: Vec<usize>,
    /// Global bus ids of branch endpoints, and the stacked-forward-row
    /// index of each branch (ac_line rows first, then transformer).
    pub branch_from: Vec<usize>,
    pub branch_to: Vec<usize>,
    pub branch_stack_row: Vec<usize>,
    /// 0.0 at each graph's slack bus, 1.0 elsewhere.
    pub theta_mask: Vec<f64>,
    /// Per-graph y^DC rows padded to `y_width`.
    pub y_dc_rows: Vec<Vec<f64>>,
    pub y_width: usize,
}

impl GraphBatch {
    /// Builds the union; `y_width` is the padded global-feature width and
    /// must cover the largest y^DC in the batch.
    pub fn new(graphs: Vec<GraphData>, y_width: usize) -> Result<Self, String> {
        let nb_total: usize = graphs.iter().map(|g| g.n_bus).sum();
        let ng_total: usize = graphs.iter().map(|g| g.n_gen).sum();
        let nl_total: usize = graphs.iter().map(|g| g.n_load).sum();
        let nbr_total: usize = graphs.iter().map(|g| g.n_branch).sum();

        let mut bus_off = Vec::with_capacity(graphs.len());
        let mut gen_off = Vec::with_capacity(graphs.len());
        let mut load_off = Vec::with_capacity(graphs.len());
        let (mut ob, mut og, mut ol) = (0usize, 0usize, 0usize);
        for g in &graphs {
            bus_off.push(ob);
            gen_off.push(og);
            load_off.push(ol);
            ob += g.n_bus;
            og += g.n_gen;
            ol += g.n_load;
        }
        let global = |gi: usize, local: usize, g: &GraphData| -> usize {
            if local < g.n_bus {
                bus_off[gi] + local
            } else if local < g.n_bus + g.n_gen {
                nb_total + gen_off[gi] + (local - g.n_bus)
            } else {
                nb_total + ng_total + load_off[gi] + (local - g.n_bus - g.n_gen)
            }
        };

        let mut src: [Vec<usize>; N_EDGE_TYPES] = Default::default();
        let mut dst: [Vec<usize>; N_EDGE_TYPES] = Default::default();
        let mut feat_rows: [Vec<f64>; N_EDGE_TYPES] = Default::default();
        let mut d_rows: [Vec<f64>; N_EDGE_TYPES] = Default::default();
        // per-graph starting forward-row per type (forward rows are the
        // first half of each per-graph block)
        let mut fwd_row_base: Vec<[usize; N_EDGE_TYPES]> = Vec::with_capacity(graphs.len());
        let mut counts = [0usize; N_EDGE_TYPES];
        for g in &graphs {
            fwd_row_base.push(counts);
            for ty in EDGE_TYPES {
                counts[ty as usize] += g.edges[ty as usize].src.len();
            }
        }
        for (gi, g) in graphs.iter().enumerate() {
            for ty in EDGE_TYPES {
                let block = &g.edges[ty as usize];
                for e in 0..block.src.len() {
                    src[ty as usize].push(global(gi, block.src[e], g));
                    dst[ty as usize].push(global(gi, block.dst[e], g));
                    feat_rows[ty as usize].extend_from_slice(&block.feat[e]);
                    d_rows[ty as usize].push(block.d_edge[e]);
                }
            }
        }

        let edge_feat = EDGE_TYPES.map(|ty| {
            let w = ty.feature_width();
            let n = src[ty as usize].len();
            Tensor::matrix(n, w, std::mem::take(&mut feat_rows[ty as usize]))
        });
        let edge_d = EDGE_TYPES.map(|ty| {
            let n = src[ty as usize].len();
            Tensor::matrix(n, 1, std::mem::take(&mut d_rows[ty as usize]))
        });

        let stack = |rows: Vec<Vec<f64>>, width: usize| -> Tensor {
            let n = rows.len();
            let mut data = Vec::with_capacity(n * width);
            for r in rows {
                debug_assert_eq!(r.len(), width);
                data.extend_from_slice(&r);
            }
            Tensor::matrix(n, width, data)
        };
        let mut bus_rows = Vec::new();
        let mut gen_rows = Vec::new();
        let mut load_rows = Vec::new();
        for g in &graphs {
            for (x, d) in g.bus_x.iter().zip(&g.bus_d) {
                let mut row = x.clone();
                row.extend_from_slice(d);
                bus_rows.push(row);
            }
            for (x, d) in g.gen_x.iter().zip(&g.gen_d) {
                let mut row = x.clone();
                row.extend_from_slice(d);
                gen_rows.push(row);
            }
            for (x, d) in g.load_x.iter().zip(&g.load_d) {
                let mut row = x.clone();
                row.extend_from_slice(d);
                load_rows.push(row);
            }
        }

        let mut graph_of_bus = Vec::with_capacity(nb_total);
        let mut graph_of_gen = Vec::with_capacity(ng_total);
        let mut graph_of_branch = Vec::with_capacity(nbr_total);
        let mut theta_mask = Vec::with_capacity(nb_total);
        let mut branch_from = Vec::new();
        let mut branch_to = Vec::new();
        let mut branch_stack_row = Vec::new();
        let mut y_dc_rows = Vec::with_capacity(graphs.len());
        // forward rows of ac_line come first in the stacked branch-embedding
        // table, then transformer forward rows
        let ac_total = src[EdgeType::AcLine as usize].len();
        for (gi, g) in graphs.iter().enumerate() {
            for b in 0..g.n_bus {
                graph_of_bus.push(gi);
                theta_mask.push(if b == g.slack { 0.0 } else { 1.0 });
            }
            for _ in 0..g.n_gen {
                graph_of_gen.push(gi);
            }
            for k in 0..g.n_branch {
                graph_of_branch.push(gi);
                let (f, t) = g.branch_ends[k];
                branch_from.push(bus_off[gi] + f);
                branch_to.push(bus_off[gi] + t);
                let (ty, local_row) = g.branch_edge[k];
                let global_row = fwd_row_base[gi][ty as usize] + local_row;
                branch_stack_row.push(match ty {
                    EdgeType::AcLine => global_row,
                    EdgeType::Transformer => ac_total + global_row,
                    _ => unreachable!("branches are ac_line or transformer"),
                });
            }
            if g.y_dc.len() > y_width {
                return Err(format!(
                    "y_dc of length {} exceeds configured width {}",
                    g.y_dc.len(),
                    y_width
                ));
            }
            let mut row = g.y_dc.clone();
            row.resize(y_width, 0.0);
            y_dc_rows.push(row);
        }

        Ok(GraphBatch {
            bus_x: stack(bus_rows, F_BUS + D_NODE),
            gen_x: stack(gen_rows, F_GEN + D_NODE),
            load_x: stack(load_rows, F_LOAD + D_NODE),
            graphs,
            nb_total,
            ng_total,
            nl_total,
            nbr_total,
            src,
            dst,
            edge_feat,
            edge_d,
            graph_of_bus,
            graph_of_gen,
            graph_of_branch,
            branch_from,
            branch_to,
            branch_stack_row,
            theta_mask,
            y_dc_rows,
            y_width,
        })
    }

    pub fn n_graphs(&self) -> usize {
        self.graphs.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nb_total + self.ng_total + self.nl_total
    }

    /// Bus-row range of graph `gi` in the global bus table.
    pub fn bus_range(&self, gi: usize) -> std::ops::Range<usize> {
        let start: usize = self.graphs[..gi].iter().map(|g| g.n_bus).sum();
        start..start + self.graphs[gi].n_bus
    }

    pub fn gen_range(&self, gi: usize) -> std::ops::Range<usize> {
        let start: usize = self.graphs[..gi].iter().map(|g| g.n_gen).sum();
        start..start + self.graphs[gi].n_gen
    }

    pub fn branch_range(&self, gi: usize) -> std::ops::Range<usize> {
        let start: usize = self.graphs[..gi].iter().map(|g| g.n_branch).sum();
        start..start + self.graphs[gi].n_branch
    }
}

/// Runs the DC pipeline on a network and packages the scenario for the
/// model: solve, feature extraction, warm start.
pub fn prepare_scenario(
    net: &Network,
    label: Option<OperatingPoint>,
) -> Result<GraphData, crate::dcopf::DcError> {
    let sys = crate::dcopf::build_dc(net);
    let sol = crate::dcopf::solve_dc(&sys, net)?;
    if sol.status != crate::dcopf::DcStatus::Optimal {
        return Err(crate::dcopf::DcError::NotOptimal(sol.status));
    }
    let feats = crate::dcopf::extract_dc_features(&sol, net)?;
    let warm = crate::dcopf::warm_start(&sol, net)?;
    Ok(GraphData::build(net, &sol, &feats, warm, label))
}
