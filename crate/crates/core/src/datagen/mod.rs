//! Scenario perturbation and dataset generation.
//!
//! Perturbed scenarios scale loads multiplicatively (constant power
//! factor); labels come either from the Newton power-flow oracle applied
//! to the DC dispatch, or from a trained model run through the full
//! DC-solve → forward → reconstruct pipeline. Datasets are written one
//! scenario per file with a content-hash manifest.

use crate::acpf::{newton_pf, OperatingPoint, PfDispatch};
use crate::dcopf::{build_dc, extract_dc_features, solve_dc, warm_start, DcSolution, DcStatus};
use crate::gnn::{apply_mode, predict, GraphBatch, GraphData, ModelParams};
use crate::network::{Load, Network, ScenarioDoc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("rejection budget exhausted: {accepted} of {wanted} scenarios after {draws} draws")]
    RejectionBudget {
        accepted: usize,
        wanted: usize,
        draws: usize,
    },
    #[error("DC-OPF infeasible for the requested scenario")]
    DcInfeasible,
    #[error("model prediction contains non-finite values")]
    NanPrediction,
    #[error("power flow failed while labeling: {0}")]
    Pf(#[from] crate::acpf::PfError),
    #[error("dc pipeline failed: {0}")]
    Dc(#[from] crate::dcopf::DcError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerturbSpec {
    /// Multiplicative load-scale range, drawn uniformly.
    pub lo: f64,
    pub hi: f64,
    /// One factor per load when true, one shared factor otherwise.
    pub per_load: bool,
    pub count: usize,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        if !(self.lo >= 0.0 && self.lo <= self.hi) {
            return Err(GenError::Other(format!(
                "bad scale range [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.count == 0 {
            return Err(GenError::Other("count must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            lo: 0.8,
            hi: 1.2,
            per_load: true,
            count: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    NewtonLabel,
    ModelGenerated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::NewtonLabel => "newton_label",
            Provenance::ModelGenerated => "model_generated",
        }
    }
}

/// One generated scenario: the network, its DC optimum, the predicted (or
/// labeled) operating point, and the recomputed feasibility distance.
/// Model-generated samples carry no optimality claim.
#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub scenario: Network,
    pub dc: DcSolution,
    pub predicted: OperatingPoint,
    pub feasibility_distance: f64,
    pub provenance: Provenance,
}

fn scale_loads(base: &Network, factors: &[f64]) -> Network {
    let loads: Vec<Load> = base
        .loads
        .iter()
        .zip(factors)
        .map(|(l, &f)| Load {
            bus: l.bus,
            p_d: l.p_d * f,
            q_d: l.q_d * f, // constant power factor
        })
        .collect();
    Network::new(
        base.base_mva,
        base.buses.clone(),
        base.branches.clone(),
        base.generators.clone(),
        loads,
    )
    .expect("load scaling preserves validity")
}

/// Draws perturbed scenarios, rejecting any whose DC-OPF is infeasible and
/// redrawing up to 10× oversampling.
pub fn perturb(base: &Network, spec: &PerturbSpec) -> Result<Vec<Network>, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.count);
    let budget = spec.count * 10;
    let mut draws = 0;
    while out.len() < spec.count && draws < budget {
        draws += 1;
        let factors: Vec<f64> = if spec.per_load {
            (0..base.loads.len())
                .map(|_| {
                    if spec.hi > spec.lo {
                        rng.gen_range(spec.lo..spec.hi)
                    } else {
                        spec.lo
                    }
                })
                .collect()
        } else {
            let f = if spec.hi > spec.lo {
                rng.gen_range(spec.lo..spec.hi)
            } else {
                spec.lo
            };
            vec![f; base.loads.len()]
        };
        let net = scale_loads(base, &factors);
        let sys = build_dc(&net);
        let sol = solve_dc(&sys, &net)?;
        if sol.status == DcStatus::Optimal {
            out.push(net);
        }
    }
    if out.len() < spec.count {
        return Err(GenError::RejectionBudget {
            accepted: out.len(),
            wanted: spec.count,
            draws,
        });
    }
    Ok(out)
}

/// AC-consistent label: Newton power flow on the DC dispatch with PV
/// setpoints at the middle of each voltage band.
pub fn newton_label(net: &Network) -> Result<(DcSolution, OperatingPoint), GenError> {
    let sys = build_dc(net);
    let sol = solve_dc(&sys, net)?;
    if sol.status != DcStatus::Optimal {
        return Err(GenError::DcInfeasible);
    }
    let dispatch = PfDispatch::with_midpoint_voltages(net, sol.p_g_dc.clone());
    let (pt, _) = newton_pf(net, &dispatch)?;
    Ok((sol, pt))
}

/// Full trained-model pipeline on a fresh scenario: DC solve, feature
/// extraction, warm start, forward pass, reconstruction. The input
/// network is only read.
pub fn generate_ac(params: &ModelParams, net: &Network) -> Result<GeneratedSample, GenError> {
    let sys = build_dc(net);
    let sol = solve_dc(&sys, net)?;
    if sol.status != DcStatus::Optimal {
        return Err(GenError::DcInfeasible);
    }
    let feats = extract_dc_features(&sol, net)?;
    let warm = warm_start(&sol, net)?;
    let graph = GraphData::build(net, &sol, &feats, warm.clone(), None);
    let batch = GraphBatch::new(vec![graph], params.config.y_dc_width)
        .map_err(GenError::Other)?;
    let delta = &predict(params, &batch)[0];
    if !delta.is_finite() {
        return Err(GenError::NanPrediction);
    }
    let predicted = apply_mode(params.config.mode, &warm, delta);
    let y = crate::network::build_admittance(net);
    let feasibility_distance = crate::acpf::feasibility_distance(net, &y, &predicted);
    Ok(GeneratedSample {
        scenario: net.clone(),
        dc: sol,
        predicted,
        feasibility_distance,
        provenance: Provenance::ModelGenerated,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub labels: String,
    /// The perturbation law is an artifact convention, not taken from any
    /// reference dataset.
    pub perturbation: String,
    pub files: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Writes scenarios with labels to `dir` (one JSON per scenario, stable
/// names) plus `manifest.json` with content hashes.
pub fn write_dataset(
    dir: &Path,
    samples: &[(Network, OperatingPoint, Provenance)],
    spec: &PerturbSpec,
    labels_kind: &str,
) -> Result<DatasetManifest, GenError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(samples.len());
    for (i, (net, label, provenance)) in samples.iter().enumerate() {
        let mut doc = ScenarioDoc::from_network(net, Some(label));
        doc.provenance = Some(provenance.as_str().to_string());
        let text = serde_json::to_string_pretty(&doc).expect("serialization cannot fail");
        let name = format!("sample_{i:05}.json");
        std::fs::write(dir.join(&name), &text)?;
        files.push(ManifestEntry {
            file: name,
            sha256: sha256_hex(text.as_bytes()),
            provenance: provenance.as_str().to_string(),
        });
    }
    let manifest = DatasetManifest {
        seed: spec.seed,
        scale_lo: spec.lo,
        scale_hi: spec.hi,
        labels: labels_kind.to_string(),
        perturbation: format!(
            "uniform load scaling in [{}, {}], {}",
            spec.lo,
            spec.hi,
            if spec.per_load { "per load" } else { "global" }
        ),
        files,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serialization cannot fail"),
    )?;
    Ok(manifest)
}

/// Loads every scenario file of a dataset directory in name order.
pub fn load_dataset(dir: &Path) -> Result<Vec<(Network, Option<OperatingPoint>)>, GenError> {
    let mut names: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && n != "manifest.json")
        .collect();
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let text = std::fs::read_to_string(dir.join(&name))?;
        let parsed = crate::network::parse_case(&text)
            .map_err(|e| GenError::Other(format!("{name}: {e}")))?;
        out.push(parsed);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gnn::{HeadMode, ModelConfig};

    fn tiny_params() -> ModelParams {
        ModelParams::init(ModelConfig {
            d_h: 8,
            d_k: 4,
            layers: 1,
            d_t: 8,
            psi_width: 4,
            y_dc_width: 24,
            mode: HeadMode::Residual,
            seed: 2,
        })
    }

    #[test]
    fn degenerate_range_copies_base() {
        let base = fixtures::six_bus();
        let spec = PerturbSpec {
            lo: 1.0,
            hi: 1.0,
            per_load: true,
            count: 3,
            seed: 1,
        };
        let nets = perturb(&base, &spec).unwrap();
        assert_eq!(nets.len(), 3);
        for n in nets {
            assert_eq!(n, base);
        }
    }

    #[test]
    fn zero_scale_gives_zero_load_and_min_dispatch() {
        let base = fixtures::two_bus(); // p_min = 0
        let spec = PerturbSpec {
            lo: 0.0,
            hi: 0.0,
            per_load: true,
            count: 1,
            seed: 1,
        };
        let nets = perturb(&base, &spec).unwrap();
        assert!(nets[0].loads.iter().all(|l| l.p_d == 0.0 && l.q_d == 0.0));
        let sol = solve_dc(&build_dc(&nets[0]), &nets[0]).unwrap();
        assert!(sol.p_g_dc.iter().all(|&p| p.abs() < 1e-9));
    }

    #[test]
    fn fixed_seed_reproduces_scenarios() {
        let base = fixtures::six_bus();
        let spec = PerturbSpec {
            lo: 0.8,
            hi: 1.2,
            per_load: true,
            count: 5,
            seed: 42,
        };
        let a = perturb(&base, &spec).unwrap();
        let b = perturb(&base, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_scenarios_exhaust_budget() {
        let base = fixtures::six_bus(); // capacity 5.3 p.u.
        let spec = PerturbSpec {
            lo: 10.0,
            hi: 10.0,
            per_load: true,
            count: 2,
            seed: 3,
        };
        match perturb(&base, &spec) {
            Err(GenError::RejectionBudget { draws, .. }) => assert_eq!(draws, 20),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn zero_head_model_reproduces_warm_start() {
        let net = fixtures::six_bus();
        let mut params = tiny_params();
        params.get_mut("head.out.w").data.fill(0.0);
        params.get_mut("head.out.b").data.fill(0.0);
        let sample = generate_ac(&params, &net).unwrap();
        let sys = build_dc(&net);
        let sol = solve_dc(&sys, &net).unwrap();
        let warm = warm_start(&sol, &net).unwrap();
        assert_eq!(sample.predicted, warm);
        // feasibility equals the warm start's own residual
        let y = crate::network::build_admittance(&net);
        let expect = crate::acpf::feasibility_distance(&net, &y, &warm);
        assert_eq!(sample.feasibility_distance, expect);
    }

    #[test]
    fn generate_ac_leaves_input_untouched() {
        let net = fixtures::six_bus();
        let before = net.clone();
        let _ = generate_ac(&tiny_params(), &net).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn feasibility_matches_fresh_recompute() {
        let net = fixtures::six_bus();
        let sample = generate_ac(&tiny_params(), &net).unwrap();
        let y = crate::network::build_admittance(&sample.scenario);
        let fresh =
            crate::acpf::feasibility_distance(&sample.scenario, &y, &sample.predicted);
        assert!((sample.feasibility_distance - fresh).abs() < 1e-12);
    }

    #[test]
    fn dataset_roundtrip_and_hashes_reproduce() {
        let tmp = tempfile::tempdir().unwrap();
        let base = fixtures::six_bus();
        let spec = PerturbSpec {
            lo: 0.9,
            hi: 1.1,
            per_load: true,
            count: 3,
            seed: 7,
        };
        let build = |dir: &Path| -> DatasetManifest {
            let nets = perturb(&base, &spec).unwrap();
            let samples: Vec<(Network, OperatingPoint, Provenance)> = nets
                .into_iter()
                .map(|n| {
                    let (_, label) = newton_label(&n).unwrap();
                    (n, label, Provenance::NewtonLabel)
                })
                .collect();
            write_dataset(dir, &samples, &spec, "newton").unwrap()
        };
        let m1 = build(&tmp.path().join("a"));
        let m2 = build(&tmp.path().join("b"));
        for (a, b) in m1.files.iter().zip(&m2.files) {
            assert_eq!(a.sha256, b.sha256, "regeneration must reproduce hashes");
        }
        let loaded = load_dataset(&tmp.path().join("a")).unwrap();
        assert_eq!(loaded.len(), 3);
        assert!(loaded.iter().all(|(_, l)| l.is_some()));
    }
}
