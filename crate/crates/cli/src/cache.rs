//! Content-addressed stage units.
//!
//! A unit is one directory of outputs produced from a set of input files and
//! a slice of the configuration. Its key hashes the stage, the config slice
//! and the SHA-256 of every input it reads, so a rerun is skipped exactly
//! when nothing it depends on has changed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CACHE_FORMAT: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub stage: String,
    pub unit: String,
    pub key: String,
    pub config: serde_json::Value,
    /// Input name → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub rows: u64,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// A stage input: an artifact of an earlier stage (relative to the output
/// directory) or a file supplied by the user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Input {
    Artifact { producer: &'static str, rel: String },
    External(PathBuf),
}

impl Input {
    pub fn artifact(producer: &'static str, rel: impl Into<String>) -> Self {
        Input::Artifact { producer, rel: rel.into() }
    }

    fn name(&self) -> String {
        match self {
            Input::Artifact { rel, .. } => rel.clone(),
            Input::External(p) => format!("file:{}", p.display()),
        }
    }
}

/// A stage was asked to run before the stage producing its input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyError {
    /// Subcommand that failed.
    pub stage: String,
    /// Subcommand to run first.
    pub run_first: String,
    pub artifact: String,
}

impl fmt::Display for DependencyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "`{}` needs {}, which has not been produced; run `placelab {}` first",
            self.stage, self.artifact, self.run_first
        )
    }
}

impl std::error::Error for DependencyError {}

pub struct UnitSpec {
    /// Subcommand name, for logs and errors.
    pub stage: &'static str,
    /// Output directory relative to the pipeline root, e.g. `features/bp`.
    pub unit: String,
    pub config: serde_json::Value,
    pub inputs: Vec<Input>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitOutcome {
    pub stage: &'static str,
    pub unit: String,
    pub cached: bool,
    pub rows: u64,
}

/// Paths handed to a unit body.
pub struct UnitIo<'a> {
    root: &'a Path,
    dir: PathBuf,
}

impl UnitIo<'_> {
    /// Artifact of an earlier stage.
    pub fn input(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.output(name), bytes).with_context(|| format!("writing {}", self.output(name).display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

fn output_hashes(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST || !entry.file_type()?.is_file() {
            continue;
        }
        out.insert(name, sha256_file(&entry.path())?);
    }
    Ok(out)
}

fn read_manifest(path: &Path) -> Option<Manifest> {
    serde_json::from_slice(&fs::read(path).ok()?).ok()
}

pub fn unit_manifest(root: &Path, unit: &str) -> Option<Manifest> {
    read_manifest(&root.join(unit).join(MANIFEST))
}

fn is_fresh(dir: &Path, key: &str) -> Option<Manifest> {
    let m = read_manifest(&dir.join(MANIFEST))?;
    if m.format != CACHE_FORMAT || m.key != key {
        return None;
    }
    let fresh = m.outputs.iter().all(|(name, hash)| sha256_file(&dir.join(name)).is_ok_and(|h| &h == hash));
    fresh.then_some(m)
}

/// Run `body` unless an up-to-date manifest exists. The unit directory is
/// emptied first, so it only ever holds what the body wrote.
pub fn run_unit<F>(root: &Path, spec: UnitSpec, body: F) -> Result<UnitOutcome>
where
    F: FnOnce(&UnitIo<'_>) -> Result<u64>,
{
    let started = Instant::now();
    let mut inputs = BTreeMap::new();
    for input in &spec.inputs {
        let path = match input {
            Input::Artifact { producer, rel } => {
                let p = root.join(rel);
                if !p.is_file() {
                    return Err(DependencyError { stage: spec.stage.to_string(), run_first: producer.to_string(), artifact: rel.clone() }.into());
                }
                p
            }
            Input::External(p) => p.clone(),
        };
        let hash = sha256_file(&path).with_context(|| format!("hashing {}", path.display()))?;
        inputs.insert(input.name(), hash);
    }
    let key_doc = serde_json::json!({
        "format": CACHE_FORMAT,
        "stage": spec.stage,
        "unit": spec.unit,
        "config": spec.config,
        "inputs": inputs,
    });
    let key = sha256_bytes(&serde_json::to_vec(&key_doc)?);
    let dir = root.join(&spec.unit);

    if let Some(m) = is_fresh(&dir, &key) {
        tracing::info!(stage = spec.stage, unit = %spec.unit, cached = true, rows = m.rows, duration_ms = started.elapsed().as_millis() as u64, "stage done");
        return Ok(UnitOutcome { stage: spec.stage, unit: spec.unit, cached: true, rows: m.rows });
    }

    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let io = UnitIo { root, dir: dir.clone() };
    let rows = body(&io).with_context(|| format!("stage `{}` ({})", spec.stage, spec.unit))?;
    let manifest = Manifest {
        format: CACHE_FORMAT,
        stage: spec.stage.to_string(),
        unit: spec.unit.clone(),
        key,
        config: spec.config,
        inputs,
        outputs: output_hashes(&dir)?,
        rows,
    };
    io.write_json(MANIFEST, &manifest)?;
    tracing::info!(stage = spec.stage, unit = %spec.unit, cached = false, rows, duration_ms = started.elapsed().as_millis() as u64, "stage done");
    Ok(UnitOutcome { stage: spec.stage, unit: spec.unit, cached: false, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(inputs: Vec<Input>, config: serde_json::Value) -> UnitSpec {
        UnitSpec { stage: "t", unit: "t/u".into(), config, inputs }
    }

    #[test]
    fn reruns_only_on_change() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        let ext = root.join("in.txt");
        fs::write(&ext, "a").unwrap();
        let calls = std::cell::Cell::new(0);
        let body = |io: &UnitIo<'_>| {
            calls.set(calls.get() + 1);
            io.write("o.txt", b"x")?;
            Ok(1)
        };
        let run = |cfg: serde_json::Value| run_unit(root, spec(vec![Input::External(ext.clone())], cfg), body).unwrap();
        assert!(!run(serde_json::json!(1)).cached);
        assert!(run(serde_json::json!(1)).cached);
        fs::write(&ext, "b").unwrap();
        assert!(!run(serde_json::json!(1)).cached);
        assert!(!run(serde_json::json!(2)).cached);
        // a tampered output is not trusted
        fs::write(root.join("t/u/o.txt"), "y").unwrap();
        assert!(!run(serde_json::json!(2)).cached);
        assert_eq!(calls.get(), 4);
    }

    #[test]
    fn missing_artifact_names_the_producer() {
        let tmp = tempfile::tempdir().unwrap();
        let err = run_unit(tmp.path(), spec(vec![Input::artifact("measure", "artwork/metrics.csv")], serde_json::Value::Null), |_| Ok(0))
            .unwrap_err();
        let dep = err.downcast_ref::<DependencyError>().unwrap();
        assert_eq!(dep.run_first, "measure");
        assert!(err.to_string().contains("run `placelab measure` first"));
    }
}
