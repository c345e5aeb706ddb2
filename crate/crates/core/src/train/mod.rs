//! Training loop: Adam with gradient clipping, seeded splits, early
//! stopping on validation loss, and the residual/direct ablation switch.

mod adam;
mod loss;
mod metrics;

pub use adam::{clip_global_norm, Adam};
pub use loss::{build_loss, taped_reconstruct, LossBreakdown, LossVars, LossWeights, Normalizers};
pub use metrics::{ecdf, evaluate, quantile, write_report_csvs, EvalTiming, MetricsReport};

use crate::autodiff::{Tape, Tensor};
use crate::gnn::{Forward, GraphBatch, GraphData, HeadMode, ModelConfig, ModelParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dataset rejected: {0}")]
    Dataset(String),
    #[error("batch construction failed: {0}")]
    Batch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early stopping: epochs without validation improvement.
    pub patience: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub seed: u64,
    /// Train/val/test fractions, summing to 1.
    pub split: [f64; 3],
    pub mode: HeadMode,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            batch_size: 32,
            max_epochs: 60,
            patience: 10,
            clip_norm: 5.0,
            seed: 1,
            split: [0.8, 0.1, 0.1],
            mode: HeadMode::Residual,
            model: ModelConfig::default(),
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(TrainError::Config("split fractions must sum to 1".into()));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be >= 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::Config(
                "batch_size and max_epochs must be >= 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0)
            || !(self.clip_norm.is_finite() && self.clip_norm > 0.0)
        {
            return Err(TrainError::Config(
                "learning_rate and clip_norm must be > 0".into(),
            ));
        }
        self.weights.validate().map_err(TrainError::Config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train: LossBreakdown,
    pub val: LossBreakdown,
}

/// Wall-clock measurements, kept apart from the deterministic payload.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTiming {
    pub total_s: f64,
    pub per_epoch_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub diverged: bool,
    pub split_train: Vec<usize>,
    pub split_val: Vec<usize>,
    pub split_test: Vec<usize>,
    pub normalizers: Normalizers,
    /// Excluded from [`TrainReport::deterministic_json`].
    pub timing: TrainTiming,
}

impl TrainReport {
    /// Serialization of everything reproducible under a fixed seed
    /// (wall-clock timings excluded).
    pub fn deterministic_json(&self) -> String {
        #[derive(Serialize)]
        struct Det<'a> {
            epochs: &'a [EpochRecord],
            best_epoch: usize,
            best_val: f64,
            diverged: bool,
            split_train: &'a [usize],
            split_val: &'a [usize],
            split_test: &'a [usize],
            normalizers: &'a Normalizers,
        }
        serde_json::to_string(&Det {
            epochs: &self.epochs,
            best_epoch: self.best_epoch,
            best_val: self.best_val,
            diverged: self.diverged,
            split_train: &self.split_train,
            split_val: &self.split_val,
            split_test: &self.split_test,
            normalizers: &self.normalizers,
        })
        .expect("report serialization cannot fail")
    }
}

/// Seeded shuffle split into train/val/test index lists.
pub fn split_dataset(n: usize, fractions: [f64; 3], seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = ((n as f64) * fractions[0]).round() as usize;
    let n_val = ((n as f64) * fractions[1]).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);
    let train = idx[..n_train].to_vec();
    let val = idx[n_train..n_train + n_val].to_vec();
    let test = idx[n_train + n_val..].to_vec();
    (train, val, test)
}

fn batch_loss_and_grads(
    params: &ModelParams,
    graphs: Vec<GraphData>,
    config: &TrainConfig,
    norms: &Normalizers,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<Vec<Tensor>>), TrainError> {
    let batch = GraphBatch::new(graphs, params.config.y_dc_width).map_err(TrainError::Batch)?;
    let mut tape = Tape::new();
    let fwd = Forward::new(&mut tape, params);
    let (out, _) = fwd.run(&mut tape, &batch, params.config.layers);
    let loss = build_loss(&mut tape, &batch, &out, config.mode, &config.weights, norms);
    let breakdown = loss.read(&tape);
    if !with_grads {
        return Ok((breakdown, None));
    }
    let grads = tape.backward(loss.total);
    let g = fwd
        .param_vars()
        .iter()
        .map(|&v| grads.get(&tape, v))
        .collect();
    Ok((breakdown, Some(g)))
}

fn eval_split(
    params: &ModelParams,
    dataset: &[GraphData],
    indices: &[usize],
    config: &TrainConfig,
    norms: &Normalizers,
) -> Result<LossBreakdown, TrainError> {
    let mut acc = LossBreakdown {
        total: 0.0,
        sup: 0.0,
        pf: 0.0,
        box_: 0.0,
        obj: 0.0,
        res: 0.0,
    };
    let mut n = 0.0;
    for chunk in indices.chunks(config.batch_size) {
        let graphs: Vec<GraphData> = chunk.iter().map(|&i| dataset[i].clone()).collect();
        let w = graphs.len() as f64;
        let (b, _) = batch_loss_and_grads(params, graphs, config, norms, false)?;
        acc.total += b.total * w;
        acc.sup += b.sup * w;
        acc.pf += b.pf * w;
        acc.box_ += b.box_ * w;
        acc.obj += b.obj * w;
        acc.res += b.res * w;
        n += w;
    }
    Ok(LossBreakdown {
        total: acc.total / n,
        sup: acc.sup / n,
        pf: acc.pf / n,
        box_: acc.box_ / n,
        obj: acc.obj / n,
        res: acc.res / n,
    })
}

/// Trains from a fresh seeded initialization.
pub fn train(
    dataset: &[GraphData],
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    train_with_init(dataset, config, None)
}

/// Trains, optionally continuing from existing parameters (fine-tuning).
/// Returns the parameters of the best validation epoch. On NaN loss the
/// run aborts and the last finite best state is returned with
/// `diverged = true`.
pub fn train_with_init(
    dataset: &[GraphData],
    config: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<(ModelParams, TrainReport), TrainError> {
    config.validate()?;
    if dataset.iter().any(|g| g.label.is_none()) {
        return Err(TrainError::Dataset(
            "every training sample needs AC labels".into(),
        ));
    }
    let (train_idx, val_idx, test_idx) = split_dataset(dataset.len(), config.split, config.seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(TrainError::Config(format!(
            "empty split: {} train / {} val samples",
            train_idx.len(),
            val_idx.len()
        )));
    }

    let norms = Normalizers::from_labels(train_idx.iter().map(|&i| &dataset[i]));
    let mut params = match init {
        Some(p) => p,
        None => {
            let mut model = config.model.clone();
            model.mode = config.mode;
            model.seed = config.seed;
            ModelParams::init(model)
        }
    };
    let mut opt = Adam::new(config.learning_rate, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));

    let started = std::time::Instant::now();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val: f64::INFINITY,
        diverged: false,
        split_train: train_idx.clone(),
        split_val: val_idx.clone(),
        split_test: test_idx,
        normalizers: norms,
        timing: TrainTiming::default(),
    };
    let mut best_params = params.clone();
    let mut stale = 0usize;

    'epochs: for epoch in 0..config.max_epochs {
        let epoch_start = std::time::Instant::now();
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);

        let mut train_acc = LossBreakdown {
            total: 0.0,
            sup: 0.0,
            pf: 0.0,
            box_: 0.0,
            obj: 0.0,
            res: 0.0,
        };
        let mut seen = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let graphs: Vec<GraphData> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let w = graphs.len() as f64;
            let (b, grads) = batch_loss_and_grads(&params, graphs, config, &norms, true)?;
            if !b.total.is_finite() {
                report.diverged = true;
                break 'epochs;
            }
            let mut grads = grads.unwrap();
            clip_global_norm(&mut grads, config.clip_norm);
            opt.step(&mut params, &grads);
            train_acc.total += b.total * w;
            train_acc.sup += b.sup * w;
            train_acc.pf += b.pf * w;
            train_acc.box_ += b.box_ * w;
            train_acc.obj += b.obj * w;
            train_acc.res += b.res * w;
            seen += w;
        }
        let train_rec = LossBreakdown {
            total: train_acc.total / seen,
            sup: train_acc.sup / seen,
            pf: train_acc.pf / seen,
            box_: train_acc.box_ / seen,
            obj: train_acc.obj / seen,
            res: train_acc.res / seen,
        };
        let val_rec = eval_split(&params, dataset, &val_idx, config, &norms)?;
        report.epochs.push(EpochRecord {
            train: train_rec,
            val: val_rec,
        });
        report.timing.per_epoch_s.push(epoch_start.elapsed().as_secs_f64());

        if !val_rec.total.is_finite() {
            report.diverged = true;
            break;
        }
        if val_rec.total < report.best_val {
            report.best_val = val_rec.total;
            report.best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    report.timing.total_s = started.elapsed().as_secs_f64();
    Ok((best_params, report))
}
