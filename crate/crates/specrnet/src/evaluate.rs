//! Scoring manifests with a trained model.

use std::path::Path;

use serde::Serialize;
use specrnet_core::manifest::{DatasetManifest, Label, ManifestRecord, Split};
use specrnet_core::metrics::{evaluate, EvalReport, ScoredSet};
use specrnet_core::model::SpecRNet;

use crate::checkpoint::load_model;
use crate::features::FeatureExtractor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scored {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    /// Time frames of every scored feature map.
    pub frames: usize,
}

impl Scored {
    pub fn report(&self) -> Result<EvalReport> {
        Ok(evaluate(&ScoredSet::new(self.scores.clone(), self.labels.clone())?)?)
    }
}

/// Eval-mode scores of `records`, `batch` at a time, in record order.
pub fn score_records(
    model: &SpecRNet<f32>,
    records: &[&ManifestRecord],
    extractor: &FeatureExtractor,
    clip_len: usize,
    batch: usize,
) -> Result<Scored> {
    let mut scores = Vec::with_capacity(records.len());
    let mut frames = 0;
    for chunk in records.chunks(batch.max(1)) {
        let paths: Vec<&str> = chunk.iter().map(|r| r.path.as_str()).collect();
        let x = extractor.batch(&paths, clip_len)?;
        frames = x.shape()[3];
        scores.extend(model.predict(&x)?.data().iter().map(|&s| s as f64));
    }
    Ok(Scored { scores, labels: records.iter().map(|r| r.label).collect(), frames })
}

pub fn score_split(
    model: &SpecRNet<f32>,
    manifest: &DatasetManifest,
    split: Split,
    extractor: &FeatureExtractor,
    clip_len: usize,
) -> Result<Scored> {
    let records: Vec<&ManifestRecord> = manifest.in_split(split).collect();
    if records.is_empty() {
        return Err(Error::EmptySplit(split.as_str()));
    }
    score_records(model, &records, extractor, clip_len, EVAL_BATCH)
}

const EVAL_BATCH: usize = 32;

/// Loads `checkpoint` and reports EER/AUC on `split`.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    manifest: &DatasetManifest,
    split: Split,
    clip_len: usize,
    extractor: &FeatureExtractor,
) -> Result<EvalReport> {
    let model = load_model(checkpoint)?;
    score_split(&model, manifest, split, extractor, clip_len)?.report()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores_give_perfect_report() {
        let s = Scored {
            scores: vec![0.1, 0.9, 0.1, 0.9],
            labels: vec![Label::Bonafide, Label::Fake, Label::Bonafide, Label::Fake],
            frames: 402,
        };
        let r = s.report().unwrap();
        assert_eq!((r.eer_percent, r.auc_percent), (0.0, 100.0));
        let single = Scored { labels: vec![Label::Fake; 4], ..s };
        assert!(matches!(single.report(), Err(Error::Core(specrnet_core::Error::SingleClass))));
    }
}
