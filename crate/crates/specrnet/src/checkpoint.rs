//! Model and optimizer files. Both use the named-tensor container; the
//! optimizer moments live in their own file so a model checkpoint stays
//! loadable on its own.

use std::fs;
use std::path::Path;

use specrnet_core::container::{self, NamedTensor};
use specrnet_core::model::SpecRNet;
use specrnet_core::nn::{Adam, AdamConfig};
use specrnet_core::Tensor;

use crate::fsutil::write_atomic;
use crate::{Error, Result};

pub fn save_model(path: &Path, model: &SpecRNet<f32>) -> Result<()> {
    let bytes = container::encode_model(model).map_err(|source| Error::Checkpoint { path: path.into(), source })?;
    write_atomic(path, &bytes)
}

pub fn load_model(path: &Path) -> Result<SpecRNet<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    container::decode_model(&bytes).map_err(|source| Error::Checkpoint { path: path.into(), source })
}

const STEP_TENSOR: &str = "adam.step";
const HYPER_TENSOR: &str = "adam.config";

/// Moments are stored under their parameter names so a load can check
/// them against the model.
pub fn save_optimizer(path: &Path, adam: &Adam<f32>, model: &SpecRNet<f32>) -> Result<()> {
    let c = adam.config;
    let mut tensors: Vec<NamedTensor> = vec![
        (STEP_TENSOR.into(), Tensor::from_vec(&[4], split_u64(adam.step_count)).map_err(Error::Core)?),
        (
            HYPER_TENSOR.into(),
            Tensor::from_vec(&[5], [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay].map(|v| v as f32).to_vec())
                .map_err(Error::Core)?,
        ),
    ];
    for (i, p) in model.params().iter().enumerate() {
        if let (Some(m), Some(v)) = (adam.first_moment.get(i), adam.second_moment.get(i)) {
            tensors.push((format!("{}.m", p.name), m.clone()));
            tensors.push((format!("{}.v", p.name), v.clone()));
        }
    }
    let bytes = container::encode(&tensors).map_err(|source| Error::Checkpoint { path: path.into(), source })?;
    write_atomic(path, &bytes)
}

/// Restores moments and step count; `config` supplies the exact
/// hyperparameters (the file keeps an f32 copy for reference only).
pub fn load_optimizer(path: &Path, model: &SpecRNet<f32>, config: AdamConfig) -> Result<Adam<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |msg: String| Error::Checkpoint { path: path.into(), source: specrnet_core::Error::CountMismatch(msg) };
    let tensors = container::decode(&bytes).map_err(|source| Error::Checkpoint { path: path.into(), source })?;
    let find = |name: &str| tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t);
    let step = find(STEP_TENSOR).filter(|t| t.len() == 4).ok_or_else(|| corrupt("missing step count".into()))?;
    let mut adam = Adam::new(config);
    adam.step_count = join_u64(step.data());
    if adam.step_count == 0 {
        return Ok(adam);
    }
    for p in model.params() {
        let get = |suffix: &str| {
            find(&format!("{}.{suffix}", p.name))
                .filter(|t| t.shape() == p.value.shape())
                .cloned()
                .ok_or_else(|| corrupt(format!("moment {suffix} of {} missing or misshapen", p.name)))
        };
        adam.first_moment.push(get("m")?);
        adam.second_moment.push(get("v")?);
    }
    if tensors.len() != 2 + 2 * adam.first_moment.len() {
        return Err(corrupt("unexpected tensors in optimizer state".into()));
    }
    Ok(adam)
}

/// Step count as four 16-bit limbs, each exact in an f32.
fn split_u64(v: u64) -> Vec<f32> {
    (0..4).map(|i| ((v >> (16 * i)) & 0xffff) as f32).collect()
}

fn join_u64(d: &[f32]) -> u64 {
    d.iter().enumerate().fold(0, |acc, (i, &limb)| acc | ((limb as u64) << (16 * i)))
}
