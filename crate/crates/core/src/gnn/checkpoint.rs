//! Versioned JSON checkpoints: config plus named parameter tensors.

use super::{ModelConfig, ModelError, ModelParams};
use crate::autodiff::Tensor;
use serde::{Deserialize, Serialize};

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    version: u32,
    config: ModelConfig,
    tensors: Vec<TensorDoc>,
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn save_checkpoint(params: &ModelParams) -> String {
    let doc = CheckpointDoc {
        version: CHECKPOINT_VERSION,
        config: params.config.clone(),
        tensors: params
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(name, t)| TensorDoc {
                name: name.clone(),
                shape: t.shape.clone(),
                data: t.data.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("checkpoint serialization cannot fail")
}

/// Rebuilds parameters from a checkpoint, rejecting version, name, or
/// shape mismatches.
pub fn load_checkpoint(text: &str) -> Result<ModelParams, ModelError> {
    let doc: CheckpointDoc =
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {}, expected {CHECKPOINT_VERSION}",
            doc.version
        )));
    }
    let mut params = ModelParams::init(doc.config);
    if doc.tensors.len() != params.names().len() {
        return Err(ModelError::Checkpoint(format!(
            "expected {} tensors, found {}",
            params.names().len(),
            doc.tensors.len()
        )));
    }
    for td in doc.tensors {
        let expected = {
            let names = params.names();
            match names.iter().position(|n| *n == td.name) {
                Some(i) => params.tensors()[i].shape.clone(),
                None => {
                    return Err(ModelError::Checkpoint(format!(
                        "unknown tensor `{}`",
                        td.name
                    )))
                }
            }
        };
        if expected != td.shape {
            return Err(ModelError::Checkpoint(format!(
                "tensor `{}` has shape {:?}, expected {:?}",
                td.name, td.shape, expected
            )));
        }
        if td.data.len() != td.shape.iter().product::<usize>() {
            return Err(ModelError::Checkpoint(format!(
                "tensor `{}` data length {} does not match shape {:?}",
                td.name,
                td.data.len(),
                td.shape
            )));
        }
        *params.get_mut(&td.name) = Tensor {
            shape: td.shape,
            data: td.data,
        };
    }
    Ok(params)
}
