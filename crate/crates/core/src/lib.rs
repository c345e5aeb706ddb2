//! Core library: per-unit grid data model, DC optimal power flow, exact
//! AC power-flow physics with a Newton–Raphson solver, a dense
//! reverse-mode autodiff engine, the residual-correction attention GNN,
//! its physics-informed training loop, and dataset generation.

pub mod acpf;
pub mod autodiff;
pub mod datagen;
pub mod dcopf;
pub mod fixtures;
pub mod gnn;
pub mod network;
pub mod train;

pub use acpf::{
    branch_flow, feasibility_distance, newton_pf, pf_residual, violations, OperatingPoint,
    PfDispatch, PfResidual, ViolationReport,
};
pub use datagen::{generate_ac, newton_label, perturb, GeneratedSample, PerturbSpec};
pub use dcopf::{
    build_dc, extract_dc_features, solve_dc, warm_start, DcFeatureSet, DcSolution, DcStatus,
    DcSystem,
};
pub use gnn::{
    load_checkpoint, prepare_scenario, reconstruct, residual_delta, save_checkpoint, GraphBatch,
    GraphData, HeadMode, ModelConfig, ModelParams, ResidualVector,
};
pub use network::{
    build_admittance, parse_case, remove_element, AdmittanceMatrix, Branch, BranchKind, Bus,
    BusKind, CostCurve, ElementId, Generator, Load, Network, NetworkError,
};
pub use train::{
    evaluate, train, train_with_init, LossWeights, MetricsReport, TrainConfig, TrainReport,
};
