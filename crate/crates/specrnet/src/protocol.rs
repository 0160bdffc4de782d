//! The four benchmark protocols: full training, leave-one-attack-out,
//! one-second utterances and 10% training data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use specrnet_core::manifest::{DatasetManifest, Split};
use specrnet_core::metrics::EvalReport;

use crate::checkpoint::load_model;
use crate::evaluate::score_split;
use crate::features::FeatureExtractor;
use crate::train::{run_dir, train, TrainConfig, TrainReport};
use crate::{Error, Result};

pub const SHORT_CLIP_LEN: usize = 16_000;
pub const SCARCE_FRACTION: f64 = 0.1;
pub const SCARCE_EPOCHS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Full,
    LimitedAttacks,
    ShortUtterances,
    DataScarcity,
}

impl Protocol {
    pub const ALL: [Protocol; 4] =
        [Protocol::Full, Protocol::LimitedAttacks, Protocol::ShortUtterances, Protocol::DataScarcity];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Full => "full",
            Protocol::LimitedAttacks => "limited_attacks",
            Protocol::ShortUtterances => "short_utterances",
            Protocol::DataScarcity => "data_scarcity",
        }
    }

    /// The base configuration with this protocol's overrides applied.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Protocol::Full | Protocol::LimitedAttacks => {}
            Protocol::ShortUtterances => cfg.clip_len = SHORT_CLIP_LEN,
            Protocol::DataScarcity => {
                cfg.train_fraction = SCARCE_FRACTION;
                cfg.epochs = SCARCE_EPOCHS;
            }
        }
        cfg
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| Error::UnknownProtocol(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlannedRun {
    pub seed: u64,
    /// The attack left out of every split, for `limited_attacks`.
    pub excluded_attack: Option<String>,
    pub config: TrainConfig,
}

/// One run per seed, or per (seed, attack) for `limited_attacks`. Each run
/// gets its own checkpoint directory under the base one.
pub fn plan(protocol: Protocol, manifest: &DatasetManifest, base: &TrainConfig, seeds: &[u64]) -> Result<Vec<PlannedRun>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let cfg = protocol.configure(base);
    let attacks: Vec<Option<String>> = match protocol {
        Protocol::LimitedAttacks => {
            let attacks = manifest.attacks();
            if attacks.len() < 2 {
                return Err(Error::InvalidConfig(format!(
                    "limited_attacks needs at least two attack tags, the manifest has {}",
                    attacks.len()
                )));
            }
            attacks.into_iter().map(Some).collect()
        }
        _ => vec![None],
    };
    let mut runs = Vec::new();
    for &seed in seeds {
        for attack in &attacks {
            let mut c = cfg.clone();
            c.seed = seed;
            let seed_dir = format!("seed_{seed}");
            let mut parts = vec![protocol.as_str(), seed_dir.as_str()];
            if let Some(a) = attack {
                c.excluded_attacks.insert(a.clone());
                parts.push(a);
            }
            c.checkpoint_dir = run_dir(&base.checkpoint_dir, &parts);
            runs.push(PlannedRun { seed, excluded_attack: attack.clone(), config: c });
        }
    }
    Ok(runs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    pub plan: PlannedRun,
    pub train: TrainReport,
    pub eval: EvalReport,
    /// Eval records scored, and the time frames of each feature map.
    pub eval_records: usize,
    pub eval_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single value.
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() { f64::NAN } else { values.iter().sum::<f64>() / n };
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { values, mean, std }
    }
}

/// Metrics across seeds for one group of runs (one excluded attack, or all
/// runs for the other protocols).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub excluded_attack: Option<String>,
    pub eer_percent: Aggregate,
    pub auc_percent: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunOutcome>,
    pub groups: Vec<GroupSummary>,
}

/// Trains every planned run, evaluates its best checkpoint on the eval
/// split (minus the excluded attacks, never subsampled) and aggregates.
pub fn run_protocol(
    protocol: Protocol,
    manifest: &DatasetManifest,
    base: &TrainConfig,
    seeds: &[u64],
    extractor: &FeatureExtractor,
) -> Result<ProtocolReport> {
    let mut runs = Vec::new();
    for p in plan(protocol, manifest, base, seeds)? {
        log::info!("{protocol}: seed {}, excluded {:?}", p.seed, p.excluded_attack);
        let report = train(manifest, &p.config, extractor)?;
        let eval_manifest = manifest.excluding_attacks(&p.config.excluded_attacks);
        if let Some(r) = eval_manifest.in_split(Split::Eval).find(|r| p.config.excluded_attacks.contains(&r.attack)) {
            return Err(Error::ExcludedAttack(r.attack.clone()));
        }
        let model = load_model(&report.best_checkpoint)?;
        let scored = score_split(&model, &eval_manifest, Split::Eval, extractor, p.config.clip_len)?;
        let eval = scored.report()?;
        runs.push(RunOutcome { eval_records: scored.scores.len(), eval_frames: scored.frames, plan: p, train: report, eval });
    }
    let mut groups: Vec<GroupSummary> = Vec::new();
    let mut keys: Vec<Option<String>> = Vec::new();
    for r in &runs {
        if !keys.contains(&r.plan.excluded_attack) {
            keys.push(r.plan.excluded_attack.clone());
        }
    }
    for key in keys {
        let of = |f: fn(&EvalReport) -> f64| {
            Aggregate::of(runs.iter().filter(|r| r.plan.excluded_attack == key).map(|r| f(&r.eval)).collect())
        };
        groups.push(GroupSummary {
            eer_percent: of(|e| e.eer_percent),
            auc_percent: of(|e| e.auc_percent),
            excluded_attack: key,
        });
    }
    Ok(ProtocolReport { protocol, seeds: seeds.to_vec(), runs, groups })
}
