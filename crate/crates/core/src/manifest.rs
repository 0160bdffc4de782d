//! Dataset manifests: labelled records, stratified splitting, class
//! balancing and the protocol filters (attack exclusion, subsampling).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const BONAFIDE_TAG: &str = "bonafide";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Label {
    Bonafide = 0,
    Fake = 1,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Fake => "fake",
        }
    }

    /// Training target: bonafide 0, fake 1.
    pub fn target(self) -> f64 {
        self as u8 as f64
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "fake" => Ok(Label::Fake),
            other => Err(alloc::format!("unknown label {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Test,
    Eval,
    Unset,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Eval => "eval",
            Split::Unset => "unset",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "eval" => Ok(Split::Eval),
            "unset" => Ok(Split::Unset),
            other => Err(alloc::format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ManifestRecord {
    pub path: String,
    pub label: Label,
    pub attack: String,
    pub split: Split,
}

impl ManifestRecord {
    pub fn new(path: impl Into<String>, attack: impl Into<String>) -> Self {
        let attack = attack.into();
        let label = if attack == BONAFIDE_TAG { Label::Bonafide } else { Label::Fake };
        Self { path: path.into(), label, attack, split: Split::Unset }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub eval: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.70, test: 0.15, eval: 0.15 }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let r = [self.train, self.test, self.eval];
        if r.iter().any(|v| !(*v >= 0.0)) || ((r[0] + r[1] + r[2]) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(r));
        }
        Ok(())
    }

    /// Per-split sizes for a stratum of `n` records: floors first, then the
    /// leftover records go to the largest fractional parts, ties resolved in
    /// train, test, eval order.
    pub fn allocate(&self, n: usize) -> [usize; 3] {
        let ratios = [self.train, self.test, self.eval];
        let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
        let mut counts = [0usize; 3];
        for i in 0..3 {
            counts[i] = num_traits::Float::floor(exact[i] + 1e-9) as usize;
        }
        let mut left = n.saturating_sub(counts.iter().sum());
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = exact[a] - counts[a] as f64;
            let fb = exact[b] - counts[b] as f64;
            fb.partial_cmp(&fa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>) -> Self {
        Self { records, seed: 0 }
    }

    /// Checks the label/attack correspondence of every record.
    pub fn validate_labels(&self) -> Result<()> {
        for r in &self.records {
            if (r.label == Label::Bonafide) != (r.attack == BONAFIDE_TAG) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "record {} has label {} but attack {:?}",
                    r.path, r.label, r.attack
                )));
            }
        }
        Ok(())
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.in_split(split).filter(|r| r.label == label).count()
    }

    /// Distinct attack tags (bonafide excluded), sorted.
    pub fn attacks(&self) -> Vec<String> {
        let set: BTreeSet<&str> =
            self.records.iter().filter(|r| r.label == Label::Fake).map(|r| r.attack.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Removes every record whose attack tag is in `excluded`.
    pub fn excluding_attacks(&self, excluded: &BTreeSet<String>) -> Self {
        Self {
            records: self.records.iter().filter(|r| !excluded.contains(&r.attack)).cloned().collect(),
            seed: self.seed,
        }
    }

    /// Keeps `round(n * fraction)` (at least one) records of every
    /// (split, label) group in `splits`, chosen by a seeded shuffle. Records
    /// in other splits are untouched. Original order is preserved.
    pub fn subsample(&self, splits: &[Split], fraction: f64, seed: u64) -> Self {
        if fraction >= 1.0 {
            return self.clone();
        }
        let mut groups: BTreeMap<(Split, Label), Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if splits.contains(&r.split) {
                groups.entry((r.split, r.label)).or_default().push(i);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca7_c17e);
        let mut keep = alloc::vec![true; self.records.len()];
        for idx in groups.values_mut() {
            idx.iter().for_each(|&i| keep[i] = false);
            let n = (num_traits::Float::round(idx.len() as f64 * fraction) as usize).clamp(1, idx.len());
            idx.shuffle(&mut rng);
            idx[..n].iter().for_each(|&i| keep[i] = true);
        }
        Self {
            records: self.records.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r.clone()).collect(),
            seed: self.seed,
        }
    }
}

/// Stratified split per (label, attack): each stratum is shuffled with the
/// seed and cut according to [`SplitRatios::allocate`].
pub fn split_manifest(m: &DatasetManifest, ratios: SplitRatios, seed: u64) -> Result<DatasetManifest> {
    ratios.validate()?;
    let mut strata: BTreeMap<(Label, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        strata.entry((r.label, r.attack.as_str())).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = m.clone();
    out.seed = seed;
    for idx in strata.values_mut() {
        idx.shuffle(&mut rng);
        let [n_train, n_test, _] = ratios.allocate(idx.len());
        for (pos, &i) in idx.iter().enumerate() {
            out.records[i].split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_test {
                Split::Test
            } else {
                Split::Eval
            };
        }
    }
    Ok(out)
}

/// Duplicates randomly drawn minority-class records of `split` (with
/// replacement) until both classes have the same count there. Duplicates
/// are appended; no record is removed.
pub fn oversample_balance(m: &DatasetManifest, split: Split, seed: u64) -> Result<DatasetManifest> {
    let of = |label| m.records.iter().filter(|r| r.split == split && r.label == label).cloned().collect::<Vec<_>>();
    let bona = of(Label::Bonafide);
    let fake = of(Label::Fake);
    if bona.is_empty() || fake.is_empty() {
        return Err(Error::MissingClass(split.as_str()));
    }
    let (minority, deficit) = if bona.len() < fake.len() {
        let d = fake.len() - bona.len();
        (bona, d)
    } else {
        let d = bona.len() - fake.len();
        (fake, d)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0ba1_a2ce);
    let mut out = m.clone();
    for _ in 0..deficit {
        let pick = rng.random_range(0..minority.len());
        out.records.push(minority[pick].clone());
    }
    Ok(out)
}
