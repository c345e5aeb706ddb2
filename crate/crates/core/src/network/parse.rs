//! Scenario JSON schema and the OPFData importer.
//!
//! One scenario per UTF-8 JSON file:
//!
//! ```json
//! {
//!   "base_mva": 100.0,
//!   "buses":      [{"id":1,"v_min":0.95,"v_max":1.05,"kind":"slack","shunt_g":0.0,"shunt_b":0.0}],
//!   "branches":   [{"from":1,"to":2,"r":0.0,"x":0.1,"b_charge":0.0,"tap":1.0,"shift":0.0,
//!                   "s_max":2.0,"theta_min":-0.6,"theta_max":0.6,"kind":"ac_line"}],
//!   "generators": [{"id":1,"bus":1,"p_min":0.0,"p_max":2.0,"q_min":-1.0,"q_max":1.0,
//!                   "cost":[0.0,1.0,0.0]}],
//!   "loads":      [{"bus":2,"p_d":1.0,"q_d":0.0}],
//!   "labels_ac":  {"v":[...],"theta":[...],"p_g":[...],"q_g":[...],"s_branch":[...]},
//!   "provenance": "newton_label"
//! }
//! ```
//!
//! `labels_ac` and `provenance` are optional; costs are `[c2, c1, c0]`.
//! All electrical quantities are per-unit on `base_mva`.

use super::{Branch, BranchKind, Bus, BusKind, CostCurve, Generator, Load, Network, NetworkError};
use crate::acpf::OperatingPoint;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<GenDoc>,
    pub loads: Vec<Load>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_ac: Option<LabelsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// Generator record with the cost triplet `[c2, c1, c0]` flattened.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenDoc {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsDoc {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_branch: Option<Vec<f64>>,
}

impl ScenarioDoc {
    pub fn into_network(self) -> Result<(Network, Option<OperatingPoint>), NetworkError> {
        let generators = self
            .generators
            .into_iter()
            .map(|g| Generator {
                id: g.id,
                bus: g.bus,
                p_min: g.p_min,
                p_max: g.p_max,
                q_min: g.q_min,
                q_max: g.q_max,
                cost: CostCurve {
                    c2: g.cost[0],
                    c1: g.cost[1],
                    c0: g.cost[2],
                },
            })
            .collect();
        let net = Network::new(
            self.base_mva,
            self.buses,
            self.branches,
            generators,
            self.loads,
        )?;
        let labels = match self.labels_ac {
            None => None,
            Some(l) => {
                let (nb, ng, nl) = (net.n_buses(), net.n_gens(), net.n_branches());
                if l.v.len() != nb || l.theta.len() != nb {
                    return Err(NetworkError::Schema(format!(
                        "labels_ac bus vectors must have length {nb}"
                    )));
                }
                if l.p_g.len() != ng || l.q_g.len() != ng {
                    return Err(NetworkError::Schema(format!(
                        "labels_ac generator vectors must have length {ng}"
                    )));
                }
                if let Some(s) = &l.s_branch {
                    if s.len() != nl {
                        return Err(NetworkError::Schema(format!(
                            "labels_ac.s_branch must have length {nl}"
                        )));
                    }
                }
                Some(OperatingPoint {
                    v: l.v,
                    theta: l.theta,
                    p_g: l.p_g,
                    q_g: l.q_g,
                    s_branch: l.s_branch,
                })
            }
        };
        Ok((net, labels))
    }

    pub fn from_network(net: &Network, labels: Option<&OperatingPoint>) -> Self {
        ScenarioDoc {
            base_mva: net.base_mva,
            buses: net.buses.clone(),
            branches: net.branches.clone(),
            generators: net
                .generators
                .iter()
                .map(|g| GenDoc {
                    id: g.id,
                    bus: g.bus,
                    p_min: g.p_min,
                    p_max: g.p_max,
                    q_min: g.q_min,
                    q_max: g.q_max,
                    cost: [g.cost.c2, g.cost.c1, g.cost.c0],
                })
                .collect(),
            loads: net.loads.clone(),
            labels_ac: labels.map(|pt| LabelsDoc {
                v: pt.v.clone(),
                theta: pt.theta.clone(),
                p_g: pt.p_g.clone(),
                q_g: pt.q_g.clone(),
                s_branch: pt.s_branch.clone(),
            }),
            provenance: None,
        }
    }
}

/// Parses one scenario document. AC labels, when present, are returned
/// alongside the validated network.
pub fn parse_case(json_text: &str) -> Result<(Network, Option<OperatingPoint>), NetworkError> {
    let doc: ScenarioDoc =
        serde_json::from_str(json_text).map_err(|e| NetworkError::Schema(e.to_string()))?;
    doc.into_network()
}

/// Serializes a network (and optional labels) back to the scenario schema.
pub fn to_json(net: &Network, labels: Option<&OperatingPoint>) -> String {
    let doc = ScenarioDoc::from_network(net, labels);
    serde_json::to_string_pretty(&doc).expect("scenario serialization cannot fail")
}

/// Converts a native OPFData-style record (typed heterogeneous graph with
/// `senders`/`receivers` edge arrays) into the scenario schema.
///
/// Expected shape, all values per-unit:
///
/// ```json
/// {"grid": {"context": [[100.0]],
///           "nodes": {"bus": [{"bus_type":3,"vmin":..,"vmax":..}],
///                     "generator": [{"pmin":..,"pmax":..,"qmin":..,"qmax":..,"c2":..,"c1":..,"c0":..}],
///                     "load": [{"pd":..,"qd":..}],
///                     "shunt": [{"gs":..,"bs":..}]},
///           "edges": {"ac_line": {"senders":[..],"receivers":[..],
///                                 "features":[{"br_r":..,"br_x":..,"b_fr":..,"b_to":..,"rate_a":..,"angmin":..,"angmax":..}]},
///                     "transformer": {... plus "tap","shift"},
///                     "generator_link": {"senders":[..],"receivers":[..]},
///                     "load_link": {...}, "shunt_link": {...}}},
///  "solution": {"nodes": {"bus": [{"vm":..,"va":..}], "generator": [{"pg":..,"qg":..}]}}}
/// ```
///
/// `bus_type` follows the 1=PQ / 2=PV / 3=slack convention. Angle bounds
/// with magnitude above 2π are taken as degrees and converted. Unknown
/// fields are ignored; a warning is recorded for each ignored key.
pub fn import_opfdata(json_text: &str) -> Result<(ScenarioDoc, Vec<String>), NetworkError> {
    let root: Value =
        serde_json::from_str(json_text).map_err(|e| NetworkError::Schema(e.to_string()))?;
    let mut warnings = Vec::new();
    let grid = root
        .get("grid")
        .ok_or_else(|| NetworkError::Schema("missing `grid`".into()))?;

    let base_mva = extract_base_mva(grid).unwrap_or_else(|| {
        warnings.push("no baseMVA found in grid.context; assuming 100.0".into());
        100.0
    });

    let nodes = grid
        .get("nodes")
        .ok_or_else(|| NetworkError::Schema("missing `grid.nodes`".into()))?;
    let edges = grid
        .get("edges")
        .ok_or_else(|| NetworkError::Schema("missing `grid.edges`".into()))?;

    let known_bus = ["bus_type", "vmin", "vmax", "base_kv"];
    let bus_rows = node_rows(nodes, "bus")?;
    let mut buses = Vec::with_capacity(bus_rows.len());
    for (i, row) in bus_rows.iter().enumerate() {
        note_unknown(row, &known_bus, &format!("bus[{i}]"), &mut warnings);
        let kind = match get_f64(row, "bus_type").map(|t| t as i64) {
            Some(3) => BusKind::Slack,
            Some(2) => BusKind::Pv,
            Some(1) | None => BusKind::Pq,
            Some(other) => {
                warnings.push(format!("bus[{i}]: unknown bus_type {other}, treating as pq"));
                BusKind::Pq
            }
        };
        buses.push(Bus {
            id: i + 1,
            v_min: get_f64(row, "vmin").unwrap_or(0.9),
            v_max: get_f64(row, "vmax").unwrap_or(1.1),
            kind,
            shunt_g: 0.0,
            shunt_b: 0.0,
        });
    }

    // shunt_link folds shunt nodes onto their buses as fixed admittance
    let shunt_rows = node_rows(nodes, "shunt").unwrap_or_default();
    if let Some((senders, receivers, _)) = edge_arrays(edges, "shunt_link", &mut warnings)? {
        for (s, r) in senders.iter().zip(&receivers) {
            let row = shunt_rows.get(*s).ok_or_else(|| {
                NetworkError::Schema(format!("shunt_link references shunt {s}"))
            })?;
            let bus = buses
                .get_mut(*r)
                .ok_or_else(|| NetworkError::Schema(format!("shunt_link references bus {r}")))?;
            bus.shunt_g += get_f64(row, "gs").unwrap_or(0.0);
            bus.shunt_b += get_f64(row, "bs").unwrap_or(0.0);
        }
    } else if !shunt_rows.is_empty() {
        warnings.push("shunt nodes present but no shunt_link edges; shunts dropped".into());
    }

    let mut branches = Vec::new();
    for (type_name, kind) in [
        ("ac_line", BranchKind::AcLine),
        ("transformer", BranchKind::Transformer),
    ] {
        let Some((senders, receivers, feats)) = edge_arrays(edges, type_name, &mut warnings)?
        else {
            continue;
        };
        for (k, (s, r)) in senders.iter().zip(&receivers).enumerate() {
            let row = feats.get(k).cloned().unwrap_or(Value::Null);
            let ang = |key: &str, default: f64| {
                let raw = get_f64(&row, key).unwrap_or(default);
                if raw.abs() > 2.0 * std::f64::consts::PI {
                    raw.to_radians()
                } else {
                    raw
                }
            };
            branches.push(Branch {
                from: s + 1,
                to: r + 1,
                r: get_f64(&row, "br_r").unwrap_or(0.0),
                x: get_f64(&row, "br_x").unwrap_or(1e-4),
                b_charge: get_f64(&row, "b_fr").unwrap_or(0.0) + get_f64(&row, "b_to").unwrap_or(0.0),
                tap: if kind == BranchKind::Transformer {
                    let t = get_f64(&row, "tap").unwrap_or(1.0);
                    if t > 0.0 {
                        t
                    } else {
                        1.0
                    }
                } else {
                    1.0
                },
                shift: if kind == BranchKind::Transformer {
                    ang("shift", 0.0)
                } else {
                    0.0
                },
                s_max: get_f64(&row, "rate_a").filter(|&v| v > 0.0).unwrap_or(99.0),
                theta_min: ang("angmin", -0.6),
                theta_max: ang("angmax", 0.6),
                kind,
            });
        }
    }

    let gen_rows = node_rows(nodes, "generator")?;
    let (gl_senders, gl_receivers) = match edge_arrays(edges, "generator_link", &mut warnings)? {
        Some((s, r, _)) => (s, r),
        None => {
            return Err(NetworkError::Schema(
                "missing `grid.edges.generator_link`".into(),
            ))
        }
    };
    let known_gen = ["pmin", "pmax", "qmin", "qmax", "c2", "c1", "c0"];
    let mut generators = Vec::with_capacity(gen_rows.len());
    for (g, row) in gen_rows.iter().enumerate() {
        note_unknown(row, &known_gen, &format!("generator[{g}]"), &mut warnings);
        let bus = gl_senders
            .iter()
            .zip(&gl_receivers)
            .find(|(s, _)| **s == g)
            .map(|(_, r)| *r)
            .ok_or_else(|| {
                NetworkError::Schema(format!("generator {g} has no generator_link edge"))
            })?;
        generators.push(GenDoc {
            id: g + 1,
            bus: bus + 1,
            p_min: get_f64(row, "pmin").unwrap_or(0.0),
            p_max: get_f64(row, "pmax").unwrap_or(0.0),
            q_min: get_f64(row, "qmin").unwrap_or(0.0),
            q_max: get_f64(row, "qmax").unwrap_or(0.0),
            cost: [
                get_f64(row, "c2").unwrap_or(0.0),
                get_f64(row, "c1").unwrap_or(0.0),
                get_f64(row, "c0").unwrap_or(0.0),
            ],
        });
    }

    let load_rows = node_rows(nodes, "load")?;
    let (ll_senders, ll_receivers) = match edge_arrays(edges, "load_link", &mut warnings)? {
        Some((s, r, _)) => (s, r),
        None => return Err(NetworkError::Schema("missing `grid.edges.load_link`".into())),
    };
    let mut loads = Vec::with_capacity(load_rows.len());
    for (l, row) in load_rows.iter().enumerate() {
        note_unknown(row, &["pd", "qd"], &format!("load[{l}]"), &mut warnings);
        let bus = ll_senders
            .iter()
            .zip(&ll_receivers)
            .find(|(s, _)| **s == l)
            .map(|(_, r)| *r)
            .ok_or_else(|| NetworkError::Schema(format!("load {l} has no load_link edge")))?;
        loads.push(Load {
            bus: bus + 1,
            p_d: get_f64(row, "pd").unwrap_or(0.0),
            q_d: get_f64(row, "qd").unwrap_or(0.0),
        });
    }

    let labels_ac = root.get("solution").and_then(|sol| {
        let bus_sol = sol.get("nodes")?.get("bus")?.as_array()?;
        let gen_sol = sol.get("nodes")?.get("generator")?.as_array()?;
        Some(LabelsDoc {
            v: bus_sol
                .iter()
                .map(|r| get_f64(r, "vm").unwrap_or(1.0))
                .collect(),
            theta: bus_sol
                .iter()
                .map(|r| get_f64(r, "va").unwrap_or(0.0))
                .collect(),
            p_g: gen_sol
                .iter()
                .map(|r| get_f64(r, "pg").unwrap_or(0.0))
                .collect(),
            q_g: gen_sol
                .iter()
                .map(|r| get_f64(r, "qg").unwrap_or(0.0))
                .collect(),
            s_branch: None,
        })
    });

    Ok((
        ScenarioDoc {
            base_mva,
            buses,
            branches,
            generators,
            loads,
            labels_ac,
            provenance: Some("opfdata_import".into()),
        },
        warnings,
    ))
}

fn extract_base_mva(grid: &Value) -> Option<f64> {
    let ctx = grid.get("context")?;
    if let Some(v) = ctx.as_f64() {
        return Some(v);
    }
    if let Some(v) = ctx.get("baseMVA").and_then(Value::as_f64) {
        return Some(v);
    }
    // nested-list form [[x]]
    let mut cur = ctx;
    for _ in 0..3 {
        match cur {
            Value::Array(a) => cur = a.first()?,
            Value::Number(n) => return n.as_f64(),
            _ => return None,
        }
    }
    cur.as_f64()
}

fn node_rows(nodes: &Value, name: &str) -> Result<Vec<Value>, NetworkError> {
    match nodes.get(name) {
        None => Err(NetworkError::Schema(format!("missing `grid.nodes.{name}`"))),
        Some(Value::Array(rows)) => Ok(rows.clone()),
        // some exports wrap rows under a "features" key
        Some(obj) => match obj.get("features").and_then(Value::as_array) {
            Some(rows) => Ok(rows.clone()),
            None => Err(NetworkError::Schema(format!(
                "`grid.nodes.{name}` is not a list"
            ))),
        },
    }
}

type EdgeArrays = (Vec<usize>, Vec<usize>, Vec<Value>);

fn edge_arrays(
    edges: &Value,
    name: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<EdgeArrays>, NetworkError> {
    let Some(block) = edges.get(name) else {
        return Ok(None);
    };
    let idx = |key: &str| -> Result<Vec<usize>, NetworkError> {
        block
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| NetworkError::Schema(format!("`grid.edges.{name}.{key}` missing")))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|u| u as usize)
                    .ok_or_else(|| NetworkError::Schema(format!("non-integer index in {name}.{key}")))
            })
            .collect()
    };
    let senders = idx("senders")?;
    let receivers = idx("receivers")?;
    if senders.len() != receivers.len() {
        return Err(NetworkError::Schema(format!(
            "`{name}` senders/receivers length mismatch"
        )));
    }
    let feats = match block.get("features") {
        Some(Value::Array(rows)) => rows.clone(),
        Some(_) => {
            warnings.push(format!("`{name}.features` is not a list; ignored"));
            Vec::new()
        }
        None => Vec::new(),
    };
    Ok(Some((senders, receivers, feats)))
}

fn get_f64(row: &Value, key: &str) -> Option<f64> {
    row.get(key).and_then(Value::as_f64)
}

fn note_unknown(row: &Value, known: &[&str], ctx: &str, warnings: &mut Vec<String>) {
    if let Value::Object(map) = row {
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                warnings.push(format!("{ctx}: ignoring unknown field `{key}`"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn minimal_two_bus_document() {
        let text = r#"{
            "base_mva": 100.0,
            "buses": [
                {"id": 1, "v_min": 0.9, "v_max": 1.1, "kind": "slack", "shunt_g": 0.0, "shunt_b": 0.0},
                {"id": 2, "v_min": 0.9, "v_max": 1.1, "kind": "pq", "shunt_g": 0.0, "shunt_b": 0.0}
            ],
            "branches": [
                {"from": 1, "to": 2, "r": 0.0, "x": 0.1, "b_charge": 0.0, "tap": 1.0, "shift": 0.0,
                 "s_max": 2.0, "theta_min": -0.6, "theta_max": 0.6, "kind": "ac_line"}
            ],
            "generators": [
                {"id": 1, "bus": 1, "p_min": 0.0, "p_max": 2.0, "q_min": -1.0, "q_max": 1.0, "cost": [0.0, 1.0, 0.0]}
            ],
            "loads": [{"bus": 2, "p_d": 1.0, "q_d": 0.0}]
        }"#;
        let (net, labels) = parse_case(text).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.n_branches(), 1);
        assert!(labels.is_none());
    }

    #[test]
    fn missing_field_names_the_field() {
        let text = r#"{"base_mva": 100.0, "buses": [{"id": 1, "v_min": 0.9}]}"#;
        let err = parse_case(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("v_max"), "got: {msg}");
    }

    #[test]
    fn round_trip_identity() {
        for net in [fixtures::two_bus(), fixtures::six_bus(), fixtures::ieee57_shaped()] {
            let text = to_json(&net, None);
            let (again, _) = parse_case(&text).unwrap();
            assert_eq!(net, again);
        }
    }

    #[test]
    fn ieee57_shaped_counts() {
        let net = fixtures::ieee57_shaped();
        assert_eq!(net.n_buses(), 57);
        assert_eq!(net.n_branches(), 80);
        assert_eq!(net.n_gens(), 7);
    }

    #[test]
    fn labels_length_checked() {
        let net = fixtures::two_bus();
        let mut doc = ScenarioDoc::from_network(&net, None);
        doc.labels_ac = Some(LabelsDoc {
            v: vec![1.0],
            theta: vec![0.0, 0.0],
            p_g: vec![1.0],
            q_g: vec![0.0],
            s_branch: None,
        });
        assert!(doc.into_network().is_err());
    }

    #[test]
    fn opfdata_import_two_bus() {
        let text = r#"{
          "grid": {
            "context": [[100.0]],
            "nodes": {
              "bus": [{"bus_type": 3, "vmin": 0.9, "vmax": 1.1, "base_kv": 135.0},
                      {"bus_type": 1, "vmin": 0.9, "vmax": 1.1, "base_kv": 135.0}],
              "generator": [{"pmin": 0.0, "pmax": 2.0, "qmin": -1.0, "qmax": 1.0,
                             "c2": 0.0, "c1": 1.0, "c0": 0.0, "mbase": 100.0}],
              "load": [{"pd": 1.0, "qd": 0.2}],
              "shunt": [{"gs": 0.0, "bs": 0.05}]
            },
            "edges": {
              "ac_line": {"senders": [0], "receivers": [1],
                          "features": [{"br_r": 0.01, "br_x": 0.1, "b_fr": 0.01, "b_to": 0.01,
                                        "rate_a": 2.0, "angmin": -30.0, "angmax": 30.0}]},
              "generator_link": {"senders": [0], "receivers": [0]},
              "load_link": {"senders": [0], "receivers": [1]},
              "shunt_link": {"senders": [0], "receivers": [1]}
            }
          },
          "solution": {"nodes": {"bus": [{"vm": 1.0, "va": 0.0}, {"vm": 0.98, "va": -0.11}],
                                 "generator": [{"pg": 1.02, "qg": 0.3}]}}
        }"#;
        let (doc, warnings) = import_opfdata(text).unwrap();
        let (net, labels) = doc.into_network().unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.buses[1].shunt_b, 0.05);
        // degree-valued angle bounds converted to radians
        assert!((net.branches[0].theta_max - 30f64.to_radians()).abs() < 1e-12);
        let labels = labels.unwrap();
        assert_eq!(labels.p_g, vec![1.02]);
        // mbase is not part of the schema and is reported
        assert!(warnings.iter().any(|w| w.contains("mbase")));
    }
}
