//! The `specrnet` command line. Reports go to stdout as JSON, logs to
//! stderr; see [`crate::error::exit`] for the status codes.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use specrnet_core::audio::STANDARD_CLIP_LEN;
use specrnet_core::manifest::{oversample_balance, split_manifest, Split, SplitRatios};
use specrnet_core::model::{SpecRNet, SpecRNetConfig};

use crate::bench::{bench_inference, BenchConfig};
use crate::checkpoint::load_model;
use crate::dataset::{build_manifest, read_manifest, summarize, validate_paths, write_manifest, AttackLayout};
use crate::error::exit;
use crate::evaluate::evaluate_checkpoint;
use crate::features::{feature_container, FeatureCache, FeatureExtractor};
use crate::fsutil::write_atomic;
use crate::protocol::{plan, run_protocol, Protocol};
use crate::train::{train, TrainConfig};
use crate::wav::load_wav;
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "specrnet", version, about = "Audio DeepFake detection with SpecRNet")]
pub struct Cli {
    /// Threads for feature extraction.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a manifest CSV from a corpus directory, split it and optionally
    /// balance one split.
    Manifest {
        #[arg(long)]
        root: PathBuf,
        /// JSON object mapping subdirectory to attack tag, inline or as a
        /// file path.
        #[arg(long)]
        layout: String,
        /// Train, test and eval fractions.
        #[arg(long, value_delimiter = ',', default_values_t = [0.70, 0.15, 0.15])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Oversample the minority class of this split.
        #[arg(long)]
        balance: Option<Split>,
        #[arg(long, default_value = "manifest.csv")]
        out: PathBuf,
    },
    /// Write one LFCC container per manifest record.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = STANDARD_CLIP_LEN)]
        clip_len: usize,
    },
    /// Train and report the best checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON run configuration (training fields; `protocol` and `seeds`
        /// are ignored here).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// EER and AUC of a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "eval")]
        split: Split,
        #[arg(long, default_value_t = STANDARD_CLIP_LEN)]
        clip_len: usize,
    },
    /// Run a benchmark protocol over several seeds.
    Protocol {
        #[arg(long, value_parser = parse_protocol)]
        name: Protocol,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
        seeds: Vec<u64>,
        #[arg(long, required_unless_present = "dry_run")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the effective configuration (and planned runs when a
        /// manifest is given) without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Score one WAV file.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Verdict is "fake" iff score >= threshold.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = STANDARD_CLIP_LEN)]
        clip_len: usize,
    },
    /// Inference latency per batch size.
    Bench {
        /// Weights to load; a freshly initialised model otherwise (timing
        /// does not depend on the weights).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 16, 32])]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long)]
        measure_lfcc: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Model facts.
    Info {
        /// Print the trainable parameter count.
        #[arg(long)]
        params: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn parse_protocol(s: &str) -> std::result::Result<Protocol, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Configuration file: training fields plus an optional protocol name and
/// seed list.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub protocol: Option<String>,
    pub seeds: Option<Vec<u64>>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::read(p, e))?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

/// Parses `args`, runs the command and returns the exit status. Output and
/// logs go to the given writers.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(cli) {
        Ok(json) => {
            let _ = writeln!(stdout, "{json}");
            exit::OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn execute(cli: Cli) -> Result<String> {
    let extractor = || FeatureExtractor::new(FeatureCache::from_env()).map(|fx| fx.with_workers(cli.workers));
    match cli.command {
        Command::Manifest { root, layout, ratios, seed, balance, out } => {
            let [train, test, eval] = ratios[..] else {
                return Err(Error::InvalidConfig(format!("--ratios needs three values, got {}", ratios.len())));
            };
            let layout = parse_layout(&layout)?;
            let built = build_manifest(&root, &layout)?;
            let ratios = SplitRatios { train, test, eval };
            let mut m = split_manifest(&built.manifest, ratios, seed)?;
            if let Some(split) = balance {
                m = oversample_balance(&m, split, seed)?;
            }
            write_manifest(&out, &m)?;
            log::info!("wrote {} records to {}", m.records.len(), out.display());
            to_json(&serde_json::json!({
                "manifest": out,
                "summary": summarize(&m, built.empty_attack_dirs),
            }))
        }
        Command::Extract { manifest, out_dir, clip_len } => {
            let m = read_manifest(&manifest)?;
            validate_paths(&m)?;
            let fx = extractor()?;
            let mut seen = BTreeSet::new();
            let unique: Vec<&str> = m.records.iter().map(|r| r.path.as_str()).filter(|p| seen.insert(*p)).collect();
            let maps = fx.many(&unique, clip_len)?;
            let mut index = String::from("path,feature_file,frames\n");
            for (path, map) in unique.iter().zip(&maps) {
                let name = feature_file_name(path);
                write_atomic(&out_dir.join(&name), &feature_container(map)?)?;
                index.push_str(&format!("{},{name},{}\n", csv_quote(path), map.shape()[2]));
            }
            write_atomic(&out_dir.join("features.csv"), index.as_bytes())?;
            to_json(&serde_json::json!({
                "out_dir": out_dir,
                "features": maps.len(),
                "frames": maps.first().map(|m| m.shape()[2]),
            }))
        }
        Command::Train { manifest, config, seed } => {
            let mut cfg = RunConfig::load(config.as_deref())?.train;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let m = read_manifest(&manifest)?;
            to_json(&train(&m, &cfg, &extractor()?)?)
        }
        Command::Eval { checkpoint, manifest, split, clip_len } => {
            let m = read_manifest(&manifest)?;
            to_json(&evaluate_checkpoint(&checkpoint, &m, split, clip_len, &extractor()?)?)
        }
        Command::Protocol { name, seeds, manifest, config, dry_run } => {
            let base = RunConfig::load(config.as_deref())?.train;
            let effective = name.configure(&base);
            if dry_run {
                let runs = match &manifest {
                    Some(p) => Some(plan(name, &read_manifest(p)?, &base, &seeds)?),
                    None => None,
                };
                return to_json(&serde_json::json!({
                    "protocol": name,
                    "seeds": seeds,
                    "config": effective,
                    "runs": runs,
                }));
            }
            let m = read_manifest(manifest.as_deref().expect("clap enforces --manifest"))?;
            to_json(&run_protocol(name, &m, &base, &seeds, &extractor()?)?)
        }
        Command::Score { checkpoint, input, threshold, clip_len } => {
            let model = load_model(&checkpoint)?;
            let clip = load_wav(&input)?;
            let fx = extractor()?;
            let features = fx.from_clip(&clip, clip_len)?;
            let (c, n) = (features.shape()[1], features.shape()[2]);
            let x = features.reshape(&[1, 1, c, n])?;
            let score = model.predict(&x)?.data()[0] as f64;
            to_json(&serde_json::json!({ "score": score, "verdict": verdict(score, threshold) }))
        }
        Command::Bench { checkpoint, batch_sizes, iterations, warmup, measure_lfcc, seed } => {
            let model = match &checkpoint {
                Some(p) => load_model(p)?,
                None => SpecRNet::build(SpecRNetConfig::default(), seed),
            };
            let report = bench_inference(&model, &BenchConfig { batch_sizes, iterations, warmup, measure_lfcc, seed })?;
            log::info!("device: {}", report.device);
            to_json(&report.rows)
        }
        Command::Info { params, checkpoint } => {
            let model = match &checkpoint {
                Some(p) => load_model(p)?,
                None => SpecRNet::<f32>::build(SpecRNetConfig::default(), 0),
            };
            if params {
                return Ok(model.count_parameters().to_string());
            }
            let c = model.config();
            to_json(&serde_json::json!({
                "parameters": model.count_parameters(),
                "input_coeffs": c.input_coeffs,
                "block_channels": c.block_channels,
                "gru_hidden": c.gru_hidden,
                "fc_hidden": c.fc_hidden,
                "leaky_slope": c.leaky_slope,
                "fms": format!("{:?}", c.fms),
            }))
        }
    }
}

pub fn verdict(score: f64, threshold: f64) -> &'static str {
    if score >= threshold {
        "fake"
    } else {
        "bonafide"
    }
}

fn parse_layout(arg: &str) -> Result<AttackLayout> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| Error::read(arg, e))?
    };
    serde_json::from_str(&text).map_err(|e| Error::InvalidLayout(e.to_string()))
}

/// Stable per-path file name: file stem plus a short hash of the full path.
fn feature_file_name(path: &str) -> String {
    let digest = Sha256::digest(path.as_bytes());
    let tag: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    let stem: String = Path::new(path)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("clip")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{stem}-{tag}.lfcc")
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
