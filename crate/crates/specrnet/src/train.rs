//! Supervised training with per-epoch validation and checkpointing.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use specrnet_core::audio::STANDARD_CLIP_LEN;
use specrnet_core::manifest::{oversample_balance, DatasetManifest, ManifestRecord, Split};
use specrnet_core::metrics::EvalReport;
use specrnet_core::model::{SpecRNet, SpecRNetConfig, MIN_FRAMES};
use specrnet_core::nn::{bce_loss, Adam, AdamConfig, Mode};

use crate::checkpoint::{save_model, save_optimizer};
use crate::evaluate::score_records;
use crate::features::FeatureExtractor;
use crate::fsutil::write_atomic;
use crate::{Error, Result};

pub const LOG_FILE: &str = "train_log.csv";
pub const OPTIMIZER_FILE: &str = "optimizer.srnw";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
    pub clip_len: usize,
    pub train_fraction: f64,
    pub excluded_attacks: BTreeSet<String>,
    /// Balance test and eval as well as train.
    pub oversample_all_splits: bool,
    /// Batch size used when scoring the test split.
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 128,
            epochs: 10,
            weight_decay: 1e-4,
            seed: 0,
            checkpoint_dir: PathBuf::from("checkpoints"),
            clip_len: STANDARD_CLIP_LEN,
            train_fraction: 1.0,
            excluded_attacks: BTreeSet::new(),
            oversample_all_splits: false,
            eval_batch_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, extractor: &FeatureExtractor) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction must be in (0, 1], got {}", self.train_fraction));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return bad("lr must be positive and weight_decay non-negative".into());
        }
        let frames = extractor.config().n_frames(self.clip_len).unwrap_or(0);
        if frames < MIN_FRAMES {
            return bad(format!("clip_len {} gives {frames} frames; the network needs {MIN_FRAMES}", self.clip_len));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_eer: f64,
    pub test_auc: f64,
    pub checkpoint_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub best_checkpoint: PathBuf,
    pub best_epoch: usize,
    pub best_test: EvalReport,
    pub epochs: Vec<EpochLog>,
    pub log_path: PathBuf,
    /// Records per split of the run manifest (after exclusion, subsampling
    /// and oversampling).
    pub train_records: usize,
    pub test_records: usize,
    /// Every attack tag that reached the model, train and test scoring
    /// included.
    pub attacks_seen: BTreeSet<String>,
}

/// Applies exclusion, seeded subsampling of train and test, and
/// oversampling. Eval keeps every non-excluded record.
pub fn prepare_manifest(manifest: &DatasetManifest, cfg: &TrainConfig) -> Result<DatasetManifest> {
    let mut m = manifest.excluding_attacks(&cfg.excluded_attacks);
    m = m.subsample(&[Split::Train, Split::Test], cfg.train_fraction, cfg.seed);
    for (split, name) in [(Split::Train, "train"), (Split::Test, "test")] {
        if m.in_split(split).next().is_none() {
            return Err(Error::EmptySplit(name));
        }
    }
    m = oversample_balance(&m, Split::Train, cfg.seed)?;
    if cfg.oversample_all_splits {
        m = oversample_balance(&m, Split::Test, cfg.seed.wrapping_add(1))?;
        if m.in_split(Split::Eval).next().is_some() {
            m = oversample_balance(&m, Split::Eval, cfg.seed.wrapping_add(2))?;
        }
    }
    Ok(m)
}

/// Batches of the shuffled training order; the last may be short.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn check_excluded(records: &[&ManifestRecord], cfg: &TrainConfig, seen: &mut BTreeSet<String>) -> Result<()> {
    for r in records {
        if cfg.excluded_attacks.contains(&r.attack) {
            return Err(Error::ExcludedAttack(r.attack.clone()));
        }
        seen.insert(r.attack.clone());
    }
    Ok(())
}

/// Trains a fresh default SpecRNet. After every epoch the test split is
/// scored in eval mode and a checkpoint written; the report points at the
/// checkpoint with the lowest test EER (earliest epoch on ties).
pub fn train(manifest: &DatasetManifest, cfg: &TrainConfig, extractor: &FeatureExtractor) -> Result<TrainReport> {
    cfg.validate(extractor)?;
    let m = prepare_manifest(manifest, cfg)?;
    let train: Vec<&ManifestRecord> = m.in_split(Split::Train).collect();
    let test: Vec<&ManifestRecord> = m.in_split(Split::Test).collect();
    std::fs::create_dir_all(&cfg.checkpoint_dir).map_err(|e| Error::io(&cfg.checkpoint_dir, e))?;
    log::info!("training on {} records, validating on {}", train.len(), test.len());

    let mut model = SpecRNet::<f32>::build(SpecRNetConfig::default(), cfg.seed);
    let mut adam = Adam::new(cfg.adam());
    let mut seen = BTreeSet::new();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, EvalReport)> = None;
    let log_path = cfg.checkpoint_dir.join(LOG_FILE);

    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        for batch in epoch_batches(train.len(), cfg.batch_size, cfg.seed, epoch) {
            let records: Vec<&ManifestRecord> = batch.iter().map(|&i| train[i]).collect();
            check_excluded(&records, cfg, &mut seen)?;
            let paths: Vec<&str> = records.iter().map(|r| r.path.as_str()).collect();
            let x = extractor.batch(&paths, cfg.clip_len)?;
            let targets: Vec<f64> = records.iter().map(|r| r.label.target()).collect();
            let scores = model.forward(&x, Mode::Train)?;
            let (loss, grad) = bce_loss(&scores, &targets)?;
            model.zero_grad();
            model.backward(&grad)?;
            adam.step(&mut model.params_mut());
            loss_sum += loss * records.len() as f64;
        }
        model.clear_tape();
        let train_loss = loss_sum / train.len() as f64;

        check_excluded(&test, cfg, &mut seen)?;
        let report = score_records(&model, &test, extractor, cfg.clip_len, cfg.eval_batch_size)?.report()?;
        let checkpoint_path = cfg.checkpoint_dir.join(format!("epoch_{epoch:03}.srnw"));
        save_model(&checkpoint_path, &model)?;
        save_optimizer(&cfg.checkpoint_dir.join(OPTIMIZER_FILE), &adam, &model)?;
        log::info!(
            "epoch {epoch}: loss {train_loss:.6}, test EER {:.4}%, AUC {:.4}%",
            report.eer_percent,
            report.auc_percent
        );
        if best.as_ref().is_none_or(|(_, b)| report.eer_percent < b.eer_percent) {
            best = Some((epoch, report));
        }
        epochs.push(EpochLog {
            epoch,
            train_loss,
            test_eer: report.eer_percent,
            test_auc: report.auc_percent,
            checkpoint_path,
        });
        write_atomic(&log_path, epoch_log_csv(&epochs).as_bytes())?;
    }

    let (best_epoch, best_test) = best.expect("at least one epoch");
    Ok(TrainReport {
        best_checkpoint: epochs[best_epoch - 1].checkpoint_path.clone(),
        best_epoch,
        best_test,
        epochs,
        log_path,
        train_records: train.len(),
        test_records: test.len(),
        attacks_seen: seen,
    })
}

/// `epoch,train_loss,test_eer,test_auc,checkpoint_path`
pub fn epoch_log_csv(epochs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,test_eer,test_auc,checkpoint_path\n");
    for e in epochs {
        let path = csv_field(&e.checkpoint_path.to_string_lossy());
        writeln!(out, "{},{},{},{},{}", e.epoch, e.train_loss, e.test_eer, e.test_auc, path).expect("string write");
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Directory-safe label for per-run checkpoint folders.
pub fn run_dir(base: &Path, parts: &[&str]) -> PathBuf {
    parts.iter().fold(base.to_path_buf(), |p, part| {
        p.join(part.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect::<String>())
    })
}
