//! `resopf` — DC-OPF solves, AC physics checks, residual-model training,
//! evaluation, and dataset generation over scenario JSON files.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use resopf_core::acpf::OperatingPoint;
use resopf_core::datagen::{
    generate_ac, newton_label, perturb, write_dataset, PerturbSpec, Provenance,
};
use resopf_core::dcopf::{build_dc, solve_dc, DcStatus};
use resopf_core::gnn::{load_checkpoint, prepare_scenario, save_checkpoint, GraphData, HeadMode};
use resopf_core::network::{build_admittance, import_opfdata, parse_case, to_json, Network};
use resopf_core::train::{evaluate, train_with_init, write_report_csvs, TrainConfig};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "resopf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Residual,
    Direct,
}

impl From<ModeArg> for HeadMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Residual => HeadMode::Residual,
            ModeArg::Direct => HeadMode::Direct,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelsArg {
    Newton,
    Model,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the DC optimal power flow of a scenario.
    SolveDc {
        case: PathBuf,
        /// Write the solution JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate AC power-flow residuals, limit violations, and the
    /// feasibility distance of an operating point.
    Check { case: PathBuf, point: PathBuf },
    /// Train the residual model on a labeled dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// TOML or JSON training configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Continue from an existing checkpoint (fine-tuning).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a labeled dataset directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Directory for report.json and the CSV tables.
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate a perturbed dataset with Newton or model labels.
    GenData {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        count: usize,
        /// Load-scale range lo:hi.
        #[arg(long, default_value = "0.8:1.2")]
        range: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "newton")]
        labels: LabelsArg,
        /// Checkpoint for --labels model.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// One shared scale factor per scenario instead of per load.
        #[arg(long)]
        global_scale: bool,
    },
    /// Convert a native OPFData-style record into the scenario schema.
    ImportOpfdata {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_case(path: &Path) -> Result<(Network, Option<OperatingPoint>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_case(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_graphs(dir: &Path) -> Result<Vec<GraphData>> {
    let scenarios = resopf_core::datagen::load_dataset(dir)
        .with_context(|| format!("loading dataset from {}", dir.display()))?;
    if scenarios.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    let mut graphs = Vec::with_capacity(scenarios.len());
    for (i, (net, label)) in scenarios.into_iter().enumerate() {
        let g = prepare_scenario(&net, label)
            .with_context(|| format!("preparing scenario {i} (DC pipeline)"))?;
        graphs.push(g);
    }
    Ok(graphs)
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let config: TrainConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).context("parsing TOML config")?,
        _ => serde_json::from_str(&text).context("parsing JSON config")?,
    };
    Ok(config)
}

fn parse_range(range: &str) -> Result<(f64, f64)> {
    let (lo, hi) = range
        .split_once(':')
        .with_context(|| format!("range `{range}` is not lo:hi"))?;
    Ok((lo.parse()?, hi.parse()?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::SolveDc { case, out } => {
            let (net, _) = read_case(&case)?;
            let sys = build_dc(&net);
            let sol = solve_dc(&sys, &net)?;
            let text = serde_json::to_string_pretty(&sol)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            if sol.status != DcStatus::Optimal {
                bail!("DC-OPF not optimal: {:?}", sol.status);
            }
        }
        Command::Check { case, point } => {
            let (net, _) = read_case(&case)?;
            let text = std::fs::read_to_string(&point)
                .with_context(|| format!("reading {}", point.display()))?;
            let pt: OperatingPoint = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", point.display()))?;
            if !pt.matches(&net) {
                bail!("operating point dimensions do not match the network");
            }
            let y = build_admittance(&net);
            let residual = resopf_core::acpf::pf_residual(&net, &y, &pt);
            let report = resopf_core::acpf::violations(&net, &pt, None);
            let feasibility = resopf_core::acpf::feasibility_distance(&net, &y, &pt);
            let out = serde_json::json!({
                "pf_residual": {
                    "norm_inf": residual.norm_inf(),
                    "r_p": residual.r_p,
                    "r_q": residual.r_q,
                },
                "violations": report,
                "feasibility_distance": feasibility,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Train {
            data,
            config,
            mode,
            out,
            init,
        } => {
            let mut config = load_train_config(config.as_deref())?;
            if let Some(mode) = mode {
                config.mode = mode.into();
            }
            let graphs = load_graphs(&data)?;
            let init_params = match init {
                Some(path) => Some(load_checkpoint(&std::fs::read_to_string(&path)?)?),
                None => None,
            };
            eprintln!(
                "training on {} samples, mode {:?}",
                graphs.len(),
                config.mode
            );
            let (params, report) = train_with_init(&graphs, &config, init_params)?;
            eprintln!("model has {} parameters", params.n_scalars());
            std::fs::write(&out, save_checkpoint(&params))?;
            let report_path = out.with_extension("report.json");
            std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
            eprintln!(
                "trained {} epochs (best {} @ val {:.6}), diverged: {}",
                report.epochs.len(),
                report.best_epoch,
                report.best_val,
                report.diverged
            );
            eprintln!(
                "checkpoint: {} / report: {}",
                out.display(),
                report_path.display()
            );
        }
        Command::Eval { ckpt, data, report } => {
            let params = load_checkpoint(&std::fs::read_to_string(&ckpt)?)?;
            let graphs = load_graphs(&data)?;
            let metrics = evaluate(&params, &graphs).map_err(anyhow::Error::msg)?;
            std::fs::create_dir_all(&report)?;
            std::fs::write(
                report.join("report.json"),
                serde_json::to_string_pretty(&metrics)?,
            )?;
            write_report_csvs(&metrics, &report)?;
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({
                "mse_bus_voltage": metrics.mse_bus_voltage,
                "mse_bus_power": metrics.mse_bus_power,
                "mse_branch_flow": metrics.mse_branch_flow,
                "feasibility": metrics.feasibility,
                "warm_feasibility": metrics.warm_feasibility,
                "cost_gap": metrics.cost_gap,
            }))?);
        }
        Command::GenData {
            base,
            count,
            range,
            seed,
            labels,
            ckpt,
            out,
            global_scale,
        } => {
            let (net, _) = read_case(&base)?;
            let (lo, hi) = parse_range(&range)?;
            let spec = PerturbSpec {
                lo,
                hi,
                per_load: !global_scale,
                count,
                seed,
            };
            let scenarios = perturb(&net, &spec)?;
            let mut samples = Vec::with_capacity(scenarios.len());
            match labels {
                LabelsArg::Newton => {
                    for s in scenarios {
                        let (_, label) = newton_label(&s)?;
                        samples.push((s, label, Provenance::NewtonLabel));
                    }
                }
                LabelsArg::Model => {
                    let ckpt = ckpt.context("--labels model requires --ckpt")?;
                    let params = load_checkpoint(&std::fs::read_to_string(&ckpt)?)?;
                    for s in scenarios {
                        let sample = generate_ac(&params, &s)?;
                        samples.push((s, sample.predicted, Provenance::ModelGenerated));
                    }
                }
            }
            let kind = match labels {
                LabelsArg::Newton => "newton",
                LabelsArg::Model => "model",
            };
            let manifest = write_dataset(&out, &samples, &spec, kind)?;
            eprintln!(
                "wrote {} scenarios + manifest.json to {}",
                manifest.files.len(),
                out.display()
            );
        }
        Command::ImportOpfdata { input, out } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let (doc, warnings) = import_opfdata(&text)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let (net, labels) = doc.into_network()?;
            std::fs::write(&out, to_json(&net, labels.as_ref()))?;
            eprintln!("imported scenario written to {}", out.display());
        }
    }
    Ok(())
}
