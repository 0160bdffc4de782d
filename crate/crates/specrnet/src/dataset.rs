//! Manifests on disk: building one from a corpus directory, and the CSV
//! file format `path,label,attack,split`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specrnet_core::manifest::{DatasetManifest, Label, ManifestRecord, BONAFIDE_TAG};
use walkdir::WalkDir;

use crate::fsutil::write_atomic;
use crate::{Error, Result};

/// Subdirectory of the corpus root -> attack tag. Exactly one directory maps
/// to `"bonafide"`.
pub type AttackLayout = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManifestSummary {
    pub records: usize,
    pub bonafide: usize,
    pub fake: usize,
    /// Directories of the layout that hold no WAV file.
    pub empty_attack_dirs: Vec<String>,
}

#[derive(Debug)]
pub struct BuiltManifest {
    pub manifest: DatasetManifest,
    pub empty_attack_dirs: Vec<String>,
}

impl BuiltManifest {
    pub fn summary(&self) -> ManifestSummary {
        summarize(&self.manifest, self.empty_attack_dirs.clone())
    }
}

pub fn summarize(m: &DatasetManifest, empty_attack_dirs: Vec<String>) -> ManifestSummary {
    let bonafide = m.records.iter().filter(|r| r.attack == BONAFIDE_TAG).count();
    ManifestSummary { records: m.records.len(), bonafide, fake: m.records.len() - bonafide, empty_attack_dirs }
}

/// One record per `.wav` file (searched recursively, sorted by path) under
/// each layout directory. Splits are left unset. Empty directories are not
/// an error; they are reported back and logged.
pub fn build_manifest(root: &Path, layout: &AttackLayout) -> Result<BuiltManifest> {
    let bonafide_dirs = layout.values().filter(|t| *t == BONAFIDE_TAG).count();
    if bonafide_dirs == 0 {
        return Err(Error::NoBonafideDir);
    }
    if bonafide_dirs > 1 {
        return Err(Error::InvalidLayout(format!("{bonafide_dirs} directories are mapped to \"bonafide\"")));
    }
    if let Some(dir) = layout.iter().find(|(_, t)| t.is_empty() || t.contains([',', '\n', '"'])).map(|(d, _)| d) {
        return Err(Error::InvalidLayout(format!("directory {dir:?} has an unusable attack tag")));
    }
    let mut records = Vec::new();
    let mut empty = Vec::new();
    for (dir, attack) in layout {
        let base = root.join(dir);
        if !base.is_dir() {
            return Err(Error::read(&base, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
        }
        let mut files = Vec::new();
        for entry in WalkDir::new(&base).follow_links(true) {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(&base).to_path_buf();
                Error::read(path, e.into())
            })?;
            if entry.file_type().is_file() && is_wav(entry.path()) {
                files.push(entry.into_path());
            }
        }
        files.sort();
        if files.is_empty() {
            log::warn!("EmptyAttackDir: {} holds no WAV files", base.display());
            empty.push(dir.clone());
        }
        for f in files {
            records.push(ManifestRecord::new(path_string(&f)?, attack.clone()));
        }
    }
    Ok(BuiltManifest { manifest: DatasetManifest::new(records), empty_attack_dirs: empty })
}

fn is_wav(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn path_string(p: &Path) -> Result<String> {
    p.to_str().map(String::from).ok_or_else(|| Error::InvalidLayout(format!("path {} is not UTF-8", p.display())))
}

/// Fails on the first record whose file does not exist.
pub fn validate_paths(m: &DatasetManifest) -> Result<()> {
    for r in &m.records {
        if !Path::new(&r.path).is_file() {
            return Err(Error::read(&r.path, std::io::Error::new(std::io::ErrorKind::NotFound, "missing audio file")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Row {
    path: String,
    label: String,
    attack: String,
    split: String,
}

pub fn manifest_to_csv(m: &DatasetManifest) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &m.records {
        w.serialize(Row {
            path: r.path.clone(),
            label: r.label.to_string(),
            attack: r.attack.clone(),
            split: r.split.to_string(),
        })
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    if m.records.is_empty() {
        w.write_record(["path", "label", "attack", "split"]).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Atomic write (temporary file, then rename).
pub fn write_manifest(path: &Path, m: &DatasetManifest) -> Result<()> {
    write_atomic(path, &manifest_to_csv(m)?)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    parse_manifest(&bytes, path)
}

/// Parses manifest CSV; relative record paths are kept as written. The
/// label must agree with the attack tag.
pub fn parse_manifest(bytes: &[u8], path: &Path) -> Result<DatasetManifest> {
    let bad = |line: u64, reason: String| Error::InvalidManifest {
        path: PathBuf::from(path),
        reason: format!("line {line}: {reason}"),
    };
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "label", "attack", "split"] {
        return Err(bad(1, format!("expected header path,label,attack,split, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        let mut rec = ManifestRecord::new(row.path, row.attack);
        let label: Label = row.label.parse().map_err(|e: String| bad(line, e))?;
        if label != rec.label {
            return Err(bad(line, format!("label {} does not match attack {:?}", row.label, rec.attack)));
        }
        rec.split = row.split.parse().map_err(|e: String| bad(line, e))?;
        records.push(rec);
    }
    Ok(DatasetManifest::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use specrnet_core::manifest::{Label, Split};

    fn touch(p: &Path) {
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, b"").unwrap();
    }

    fn layout(pairs: &[(&str, &str)]) -> AttackLayout {
        pairs.iter().map(|(d, t)| (d.to_string(), t.to_string())).collect()
    }

    #[test]
    fn counts_records_per_directory() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..2 {
            touch(&dir.path().join(format!("ljspeech/{i}.wav")));
        }
        for i in 0..3 {
            touch(&dir.path().join(format!("melgan/{i}.WAV")));
        }
        touch(&dir.path().join("melgan/notes.txt"));
        let built = build_manifest(dir.path(), &layout(&[("ljspeech", "bonafide"), ("melgan", "melgan")])).unwrap();
        let s = built.summary();
        assert_eq!((s.records, s.bonafide, s.fake), (5, 2, 3));
        assert!(built.manifest.records.iter().all(|r| r.split == Split::Unset));
        assert_eq!(built.manifest.records[2].label, Label::Fake);
    }

    #[test]
    fn missing_bonafide_mapping() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("melgan/a.wav"));
        assert!(matches!(build_manifest(dir.path(), &layout(&[("melgan", "melgan")])), Err(Error::NoBonafideDir)));
        let two = layout(&[("a", "bonafide"), ("b", "bonafide")]);
        assert!(matches!(build_manifest(dir.path(), &two), Err(Error::InvalidLayout(_))));
    }

    #[test]
    fn duplicate_file_in_two_dirs_gives_two_records() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("real/x.wav"));
        touch(&dir.path().join("pwg/x.wav"));
        touch(&dir.path().join("hifigan/x.wav"));
        let l = layout(&[("real", "bonafide"), ("pwg", "pwg"), ("hifigan", "pwg")]);
        let m = build_manifest(dir.path(), &l).unwrap().manifest;
        assert_eq!(m.records.len(), 3);
        assert_ne!(m.records[1].path, m.records[2].path);
    }

    #[test]
    fn empty_attack_dir_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("real/x.wav"));
        fs::create_dir_all(dir.path().join("melgan")).unwrap();
        let built = build_manifest(dir.path(), &layout(&[("real", "bonafide"), ("melgan", "melgan")])).unwrap();
        assert_eq!(built.empty_attack_dirs, ["melgan"]);
        let missing = layout(&[("real", "bonafide"), ("nope", "melgan")]);
        assert!(matches!(build_manifest(dir.path(), &missing), Err(Error::ReadData { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let mut a = ManifestRecord::new("d/a, b.wav", "bonafide");
        a.split = Split::Train;
        let mut b = ManifestRecord::new("d/c.wav", "melgan");
        b.split = Split::Eval;
        let m = DatasetManifest::new(vec![a, b, ManifestRecord::new("e.wav", "pwg")]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_manifest(&p, &m).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("path,label,attack,split\n"));
        assert!(text.contains("d/c.wav,fake,melgan,eval"));
        assert_eq!(read_manifest(&p).unwrap(), m);
        write_manifest(&p, &DatasetManifest::default()).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), DatasetManifest::default());
    }

    #[test]
    fn csv_rejects_inconsistent_rows() {
        let p = Path::new("m.csv");
        let cases: [&[u8]; 4] = [
            b"path,label,attack,split\na.wav,fake,bonafide,train\n",
            b"path,label,attack,split\na.wav,fake,melgan,holdout\n",
            b"path,label,attack\na.wav,fake,melgan\n",
            b"path,label,attack,split\na.wav,fake\n",
        ];
        for bytes in cases {
            assert!(matches!(parse_manifest(bytes, p), Err(Error::InvalidManifest { .. })));
        }
    }

    #[test]
    fn validate_paths_reports_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        touch(&p);
        let mut m = DatasetManifest::new(vec![ManifestRecord::new(p.to_str().unwrap(), "bonafide")]);
        validate_paths(&m).unwrap();
        m.records.push(ManifestRecord::new(dir.path().join("b.wav").to_str().unwrap(), "melgan"));
        assert!(matches!(validate_paths(&m), Err(Error::ReadData { .. })));
    }
}
