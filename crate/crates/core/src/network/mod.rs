//! Per-unit power-system data model.
//!
//! A [`Network`] is an immutable description of one grid scenario: buses,
//! branches (lines and transformers on the full π-model), generators with
//! convex cost curves, and loads. Everything is stored in per-unit on
//! `base_mva`, fixed at ingestion.
//!
//! Scenario documents are UTF-8 JSON, one scenario per file; see
//! [`parse_case`] for the schema. Optional AC labels travel alongside the
//! grid description and are returned as an
//! [`OperatingPoint`](crate::acpf::OperatingPoint).

mod admittance;
mod parse;

pub use admittance::{build_admittance, AdmittanceMatrix};
pub use parse::{import_opfdata, parse_case, to_json, ScenarioDoc};

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("{element} references unknown bus id {bus}")]
    UnknownBus { element: String, bus: usize },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: usize },
    #[error("network graph is disconnected ({n_islands} islands)")]
    Disconnected { n_islands: usize },
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("invalid value for {field}: {why}")]
    BadValue { field: String, why: String },
    #[error("contingency rejected: {0}")]
    ContingencyRejected(String),
}

/// Role a bus plays in power-flow solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus id (arbitrary, unique).
    pub id: usize,
    /// Voltage magnitude bounds (p.u.).
    pub v_min: f64,
    pub v_max: f64,
    pub kind: BusKind,
    /// Fixed shunt admittance at the bus (p.u.).
    pub shunt_g: f64,
    pub shunt_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    AcLine,
    Transformer,
}

/// Series branch on the π-model: series impedance r + jx, total line-charging
/// susceptance `b_charge`, off-nominal turns ratio `tap` applied at the from
/// end, and phase shift `shift` (rad). Plain lines have tap = 1, shift = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// External ids of the terminal buses.
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_charge: f64,
    pub tap: f64,
    pub shift: f64,
    /// MVA rating (p.u.).
    pub s_max: f64,
    /// Angle-difference bounds (rad).
    pub theta_min: f64,
    pub theta_max: f64,
    pub kind: BranchKind,
}

impl Branch {
    /// Series admittance g + jb = 1/(r + jx).
    pub fn series_gb(&self) -> (f64, f64) {
        let d = self.r * self.r + self.x * self.x;
        (self.r / d, -self.x / d)
    }
}

/// Quadratic generation cost c2·p² + c1·p + c0 ($ with p in p.u.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostCurve {
    pub fn eval(&self, p: f64) -> f64 {
        self.c2 * p * p + self.c1 * p + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// External generator id (unique).
    pub id: usize,
    /// External id of the bus this unit connects to.
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: CostCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    /// Active/reactive demand (p.u.). Negative values model fixed injections.
    pub p_d: f64,
    pub q_d: f64,
}

/// Identifies a removable element for N-1 variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementId {
    /// Positional branch index.
    Branch(usize),
    /// External generator id.
    Generator(usize),
}

/// Validated per-unit grid description. Immutable after construction; cheap
/// to share across threads for read-only use. Construct via [`Network::new`]
/// or [`parse_case`]; the scenario JSON document is the interchange format.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    bus_pos: HashMap<usize, usize>,
}

impl Network {
    /// Builds and validates a network from its parts.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        loads: Vec<Load>,
    ) -> Result<Self, NetworkError> {
        let mut net = Network {
            base_mva,
            buses,
            branches,
            generators,
            loads,
            bus_pos: HashMap::new(),
        };
        net.rebuild_index()?;
        net.validate()?;
        Ok(net)
    }

    fn rebuild_index(&mut self) -> Result<(), NetworkError> {
        self.bus_pos.clear();
        for (pos, bus) in self.buses.iter().enumerate() {
            if self.bus_pos.insert(bus.id, pos).is_some() {
                return Err(NetworkError::DuplicateId {
                    kind: "bus",
                    id: bus.id,
                });
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), NetworkError> {
        if !self.base_mva.is_finite() || self.base_mva <= 0.0 {
            return Err(NetworkError::BadValue {
                field: "base_mva".into(),
                why: format!("must be > 0, got {}", self.base_mva),
            });
        }
        for bus in &self.buses {
            if !bus.v_min.is_finite() || bus.v_min <= 0.0 {
                return Err(NetworkError::BadValue {
                    field: format!("bus {} v_min", bus.id),
                    why: "must be > 0".into(),
                });
            }
            if bus.v_min > bus.v_max {
                return Err(NetworkError::BadValue {
                    field: format!("bus {} v_min/v_max", bus.id),
                    why: format!("v_min {} > v_max {}", bus.v_min, bus.v_max),
                });
            }
        }
        let n_slack = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if n_slack != 1 {
            return Err(NetworkError::SlackCount(n_slack));
        }
        for (k, br) in self.branches.iter().enumerate() {
            for end in [br.from, br.to] {
                if !self.bus_pos.contains_key(&end) {
                    return Err(NetworkError::UnknownBus {
                        element: format!("branch {k}"),
                        bus: end,
                    });
                }
            }
            if br.x == 0.0 {
                return Err(NetworkError::BadValue {
                    field: format!("branch {k} x"),
                    why: "reactance must be nonzero".into(),
                });
            }
            if !br.s_max.is_finite() || br.s_max <= 0.0 {
                return Err(NetworkError::BadValue {
                    field: format!("branch {k} s_max"),
                    why: "rating must be > 0".into(),
                });
            }
            if !br.tap.is_finite() || br.tap <= 0.0 {
                return Err(NetworkError::BadValue {
                    field: format!("branch {k} tap"),
                    why: "turns ratio must be > 0".into(),
                });
            }
            if br.kind == BranchKind::AcLine && (br.tap != 1.0 || br.shift != 0.0) {
                return Err(NetworkError::BadValue {
                    field: format!("branch {k}"),
                    why: "ac_line requires tap = 1 and shift = 0".into(),
                });
            }
        }
        let mut gen_ids = HashSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id) {
                return Err(NetworkError::DuplicateId {
                    kind: "generator",
                    id: g.id,
                });
            }
            if !self.bus_pos.contains_key(&g.bus) {
                return Err(NetworkError::UnknownBus {
                    element: format!("generator {}", g.id),
                    bus: g.bus,
                });
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(NetworkError::BadValue {
                    field: format!("generator {} bounds", g.id),
                    why: "min must not exceed max".into(),
                });
            }
            if g.cost.c2 < 0.0 {
                return Err(NetworkError::BadValue {
                    field: format!("generator {} cost.c2", g.id),
                    why: "must be >= 0 for convexity".into(),
                });
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            if !self.bus_pos.contains_key(&l.bus) {
                return Err(NetworkError::UnknownBus {
                    element: format!("load {i}"),
                    bus: l.bus,
                });
            }
        }
        let islands = self.count_islands();
        if islands != 1 {
            return Err(NetworkError::Disconnected { n_islands: islands });
        }
        Ok(())
    }

    fn count_islands(&self) -> usize {
        let n = self.buses.len();
        if n == 0 {
            return 0;
        }
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let (f, t) = (self.bus_pos[&br.from], self.bus_pos[&br.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut islands = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            islands += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        islands
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_gens(&self) -> usize {
        self.generators.len()
    }

    /// Positional index of the bus with external id `id`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.bus_pos.get(&id).copied()
    }

    /// Positional endpoints (from, to) of branch `k`.
    pub fn branch_endpoints(&self, k: usize) -> (usize, usize) {
        let br = &self.branches[k];
        (self.bus_pos[&br.from], self.bus_pos[&br.to])
    }

    /// Positional index of the bus generator `g` (positional) connects to.
    pub fn gen_bus(&self, g: usize) -> usize {
        self.bus_pos[&self.generators[g].bus]
    }

    /// Positional index of the slack bus.
    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// Net active/reactive demand aggregated per bus position.
    pub fn bus_demand(&self) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; self.buses.len()];
        let mut q = vec![0.0; self.buses.len()];
        for l in &self.loads {
            let b = self.bus_pos[&l.bus];
            p[b] += l.p_d;
            q[b] += l.q_d;
        }
        (p, q)
    }

    /// Generator positional indices attached to each bus position.
    pub fn gens_at_bus(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.buses.len()];
        for (g, gen) in self.generators.iter().enumerate() {
            out[self.bus_pos[&gen.bus]].push(g);
        }
        out
    }

    /// Total generation cost of dispatch `p_g` (positional order).
    pub fn dispatch_cost(&self, p_g: &[f64]) -> f64 {
        self.generators
            .iter()
            .zip(p_g)
            .map(|(g, &p)| g.cost.eval(p))
            .sum()
    }
}

/// Removes one branch or generator, returning a new network. The original is
/// untouched. Rejected when the removal would disconnect the grid, strand
/// demand above remaining capacity, or take out the slack bus's only unit.
pub fn remove_element(net: &Network, element: ElementId) -> Result<Network, NetworkError> {
    match element {
        ElementId::Branch(k) => {
            if k >= net.branches.len() {
                return Err(NetworkError::ContingencyRejected(format!(
                    "no branch with index {k}"
                )));
            }
            let mut branches = net.branches.clone();
            branches.remove(k);
            Network::new(
                net.base_mva,
                net.buses.clone(),
                branches,
                net.generators.clone(),
                net.loads.clone(),
            )
            .map_err(|e| match e {
                NetworkError::Disconnected { .. } => NetworkError::ContingencyRejected(format!(
                    "removing branch {k} disconnects the network"
                )),
                other => other,
            })
        }
        ElementId::Generator(id) => {
            let Some(pos) = net.generators.iter().position(|g| g.id == id) else {
                return Err(NetworkError::ContingencyRejected(format!(
                    "no generator with id {id}"
                )));
            };
            let gen_bus = net.generators[pos].bus;
            let slack_id = net.buses[net.slack()].id;
            let remaining_at_bus = net
                .generators
                .iter()
                .filter(|g| g.bus == gen_bus && g.id != id)
                .count();
            if gen_bus == slack_id && remaining_at_bus == 0 {
                return Err(NetworkError::ContingencyRejected(
                    "cannot remove the slack bus's only generator".into(),
                ));
            }
            let mut generators = net.generators.clone();
            generators.remove(pos);
            let cap: f64 = generators.iter().map(|g| g.p_max).sum();
            let demand: f64 = net.loads.iter().map(|l| l.p_d).sum();
            if cap < demand {
                return Err(NetworkError::ContingencyRejected(format!(
                    "remaining capacity {cap:.4} p.u. below demand {demand:.4} p.u."
                )));
            }
            // A PV bus left without units cannot hold its setpoint; demote it.
            let mut buses = net.buses.clone();
            if remaining_at_bus == 0 {
                for b in &mut buses {
                    if b.id == gen_bus && b.kind == BusKind::Pv {
                        b.kind = BusKind::Pq;
                    }
                }
            }
            Network::new(
                net.base_mva,
                buses,
                net.branches.clone(),
                generators,
                net.loads.clone(),
            )
        }
    }
}
