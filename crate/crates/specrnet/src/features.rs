//! WAV file -> LFCC feature map, with a content-addressed cache and a small
//! worker pool for batches.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};
use specrnet_core::audio::{preprocess, AudioClip};
use specrnet_core::container;
use specrnet_core::lfcc::{Lfcc, LfccConfig};
use specrnet_core::{FeatureMap, Tensor};

use crate::fsutil::write_atomic;
use crate::wav::decode_wav;
use crate::{Error, Result};

/// Overrides the on-disk cache location.
pub const CACHE_ENV: &str = "SPECRNET_CACHE_DIR";
/// Name of the single tensor inside a feature container.
pub const FEATURE_TENSOR: &str = "lfcc";
const KEY_DOMAIN: &[u8] = b"specrnet-lfcc-v1";

pub type CacheKey = [u8; 32];

pub enum FeatureCache {
    /// Process-local map; nothing touches the disk.
    Memory(Mutex<HashMap<CacheKey, Arc<FeatureMap>>>),
    /// One container file per key under the directory.
    Disk(PathBuf),
}

impl FeatureCache {
    pub fn memory() -> Self {
        FeatureCache::Memory(Mutex::new(HashMap::new()))
    }

    pub fn disk(dir: impl Into<PathBuf>) -> Self {
        FeatureCache::Disk(dir.into())
    }

    /// Disk cache at `$SPECRNET_CACHE_DIR`, else `specrnet-lfcc` in the
    /// system temporary directory.
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => Self::disk(dir),
            _ => Self::disk(std::env::temp_dir().join("specrnet-lfcc")),
        }
    }

    fn get(&self, key: &CacheKey) -> Option<Arc<FeatureMap>> {
        match self {
            FeatureCache::Memory(map) => map.lock().expect("cache lock").get(key).cloned(),
            FeatureCache::Disk(dir) => {
                let path = dir.join(key_file(key));
                let bytes = fs::read(&path).ok()?;
                match read_feature_container(&bytes) {
                    Ok(f) => Some(Arc::new(f)),
                    Err(e) => {
                        log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                        None
                    }
                }
            }
        }
    }

    fn put(&self, key: &CacheKey, features: &Arc<FeatureMap>) -> Result<()> {
        match self {
            FeatureCache::Memory(map) => {
                map.lock().expect("cache lock").insert(*key, features.clone());
                Ok(())
            }
            FeatureCache::Disk(dir) => write_atomic(&dir.join(key_file(key)), &feature_container(features)?),
        }
    }
}

fn key_file(key: &CacheKey) -> String {
    let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
    format!("{hex}.lfcc")
}

/// Encodes one feature map as a named-tensor container.
pub fn feature_container(features: &FeatureMap) -> Result<Vec<u8>> {
    Ok(container::encode(&[(FEATURE_TENSOR.to_string(), features.clone())])?)
}

pub fn read_feature_container(bytes: &[u8]) -> Result<FeatureMap> {
    let mut tensors = container::decode(bytes)?;
    match tensors.pop() {
        Some((name, t)) if tensors.is_empty() && name == FEATURE_TENSOR && t.shape().len() == 3 => Ok(t),
        _ => Err(specrnet_core::Error::CorruptContainer("expected a single lfcc tensor".into()).into()),
    }
}

pub struct FeatureExtractor {
    lfcc: Lfcc,
    cache: FeatureCache,
    workers: usize,
    computed: AtomicUsize,
}

impl FeatureExtractor {
    pub fn new(cache: FeatureCache) -> Result<Self> {
        Self::with_config(LfccConfig::default(), cache)
    }

    pub fn with_config(cfg: LfccConfig, cache: FeatureCache) -> Result<Self> {
        Ok(Self { lfcc: Lfcc::new(cfg)?, cache, workers: 1, computed: AtomicUsize::new(0) })
    }

    /// Caps the threads used by [`Self::batch`] (at least one).
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn config(&self) -> &LfccConfig {
        self.lfcc.config()
    }

    /// How many feature maps were computed rather than served from cache.
    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }

    /// Preprocess (16 kHz, silence shortening, trim/tile to `clip_len`) and
    /// LFCC: `[1, n_lfcc, frames]`.
    pub fn from_clip(&self, clip: &AudioClip, clip_len: usize) -> Result<FeatureMap> {
        let clip = preprocess(clip, clip_len)?;
        Ok(self.lfcc.compute(&clip.samples)?)
    }

    pub fn cache_key(&self, wav_bytes: &[u8], clip_len: usize) -> CacheKey {
        let mut h = Sha256::new();
        h.update(KEY_DOMAIN);
        h.update((clip_len as u64).to_le_bytes());
        h.update(serde_json::to_vec(self.lfcc.config()).expect("config serializes"));
        h.update(wav_bytes);
        h.finalize().into()
    }

    pub fn for_file(&self, path: impl AsRef<Path>, clip_len: usize) -> Result<Arc<FeatureMap>> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
        let key = self.cache_key(&bytes, clip_len);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let features = Arc::new(self.from_clip(&decode_wav(&bytes, path)?, clip_len)?);
        self.computed.fetch_add(1, Ordering::Relaxed);
        self.cache.put(&key, &features)?;
        Ok(features)
    }

    /// Feature maps for many files, computed by up to `workers` threads.
    /// Output order follows `paths`.
    pub fn many(&self, paths: &[&str], clip_len: usize) -> Result<Vec<Arc<FeatureMap>>> {
        let workers = self.workers.min(paths.len()).max(1);
        if workers == 1 {
            return paths.iter().map(|p| self.for_file(p, clip_len)).collect();
        }
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<Result<Arc<FeatureMap>>>> = (0..paths.len()).map(|_| None).collect();
        let done: Vec<Vec<(usize, Result<Arc<FeatureMap>>)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut out = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            if i >= paths.len() {
                                break out;
                            }
                            out.push((i, self.for_file(paths[i], clip_len)));
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("feature worker panicked")).collect()
        });
        for (i, r) in done.into_iter().flatten() {
            slots[i] = Some(r);
        }
        slots.into_iter().map(|s| s.expect("every index claimed")).collect()
    }

    /// Stacks the features of `paths` into a `[B, 1, n_lfcc, frames]` batch.
    pub fn batch(&self, paths: &[&str], clip_len: usize) -> Result<Tensor<f32>> {
        stack(&self.many(paths, clip_len)?)
    }
}

/// `[1, C, N]` maps of equal shape -> `[B, 1, C, N]`.
pub fn stack(maps: &[Arc<FeatureMap>]) -> Result<Tensor<f32>> {
    let first = maps.first().ok_or(Error::EmptySplit("batch"))?;
    let shape = first.shape().to_vec();
    let mut data = Vec::with_capacity(maps.len() * first.len());
    for m in maps {
        if m.shape() != shape.as_slice() {
            return Err(specrnet_core::Error::ShapeMismatch(format!("batch mixes {:?} and {:?}", shape, m.shape())).into());
        }
        data.extend_from_slice(m.data());
    }
    Ok(Tensor::from_vec(&[maps.len(), 1, shape[1], shape[2]], data)?)
}
