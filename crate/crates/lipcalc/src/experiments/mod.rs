//! Numbered experiments E1–E7, run manifests and replay.
//!
//! An experiment is a pure function of `(space spec, parameters, seed)` that
//! returns CSV tables and named checks. [`run`] writes the tables and a JSON
//! manifest recording their SHA-256 digests; [`replay`] regenerates the
//! tables from a manifest and reports every byte-level difference.

mod degeneration;
mod differential;
mod doubling;
mod embedding;
mod hajlasz;
mod leibniz;
pub mod liplip;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use lipcalc_core::SpaceSpec;

use crate::io;

/// One CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Table {
    pub fn new(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Self> {
        let head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        Ok(Table { name: name.to_string(), bytes: io::csv_bytes(&head, rows)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub struct Experiment {
    pub id: &'static str,
    pub title: &'static str,
    pub default_space: fn() -> SpaceSpec,
    pub default_params: fn() -> Value,
    validate: fn(&Value) -> Result<()>,
    run: fn(&SpaceSpec, &Value, u64) -> Result<Outcome>,
}

impl Experiment {
    /// Defaults merged with `overrides` (a JSON object), validated.
    pub fn params(&self, overrides: &Value) -> Result<Value> {
        let mut p = (self.default_params)();
        merge(&mut p, overrides);
        (self.validate)(&p)?;
        Ok(p)
    }

    pub fn execute(&self, space: &SpaceSpec, params: &Value, seed: u64) -> Result<Outcome> {
        (self.run)(space, params, seed)
    }
}

fn validate<P: DeserializeOwned>(params: &Value) -> Result<()> {
    parse::<P>(params).map(drop)
}

fn defaults<P: Serialize + Default>() -> Value {
    serde_json::to_value(P::default()).unwrap()
}

pub(crate) fn parse<P: DeserializeOwned>(params: &Value) -> Result<P> {
    serde_json::from_value(params.clone()).context("invalid experiment parameters")
}

fn merge(base: &mut Value, overrides: &Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) if !o.is_null() => *b = o.clone(),
        _ => {}
    }
}

static REGISTRY: [Experiment; 7] = [
    Experiment {
        id: "E1",
        title: "doubling constant sweep",
        default_space: doubling::default_space,
        default_params: defaults::<doubling::Params>,
        validate: validate::<doubling::Params>,
        run: doubling::run,
    },
    Experiment {
        id: "E2",
        title: "Lip/lip ratio statistics, Euclidean grids vs Cantor set",
        default_space: liplip::default_space,
        default_params: defaults::<liplip::Params>,
        validate: validate::<liplip::Params>,
        run: liplip::run,
    },
    Experiment {
        id: "E3",
        title: "derivation rank vs scale and degeneration on snowflakes",
        default_space: degeneration::default_space,
        default_params: defaults::<degeneration::Params>,
        validate: validate::<degeneration::Params>,
        run: degeneration::run,
    },
    Experiment {
        id: "E4",
        title: "Assouad embedding distortion and composite approximation",
        default_space: embedding::default_space,
        default_params: defaults::<embedding::Params>,
        validate: validate::<embedding::Params>,
        run: embedding::run,
    },
    Experiment {
        id: "E5",
        title: "differentials vs analytic gradient on a planar grid",
        default_space: differential::default_space,
        default_params: defaults::<differential::Params>,
        validate: validate::<differential::Params>,
        run: differential::run,
    },
    Experiment {
        id: "E6",
        title: "Leibniz defect scaling",
        default_space: leibniz::default_space,
        default_params: defaults::<leibniz::Params>,
        validate: validate::<leibniz::Params>,
        run: leibniz::run,
    },
    Experiment {
        id: "E7",
        title: "Hajłasz gradients vs brute-force oracles",
        default_space: hajlasz::default_space,
        default_params: defaults::<hajlasz::Params>,
        validate: validate::<hajlasz::Params>,
        run: hajlasz::run,
    },
];

pub fn registry() -> &'static [Experiment] {
    &REGISTRY
}

pub fn find(id: &str) -> Result<&'static Experiment> {
    REGISTRY.iter().find(|e| e.id.eq_ignore_ascii_case(id)).ok_or_else(|| {
        let known: Vec<String> = REGISTRY.iter().map(|e| format!("  {}  {}", e.id, e.title)).collect();
        anyhow!("unknown experiment `{id}`; registered experiments:\n{}", known.join("\n"))
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    /// Replaces the experiment's default space.
    pub space: Option<SpaceSpec>,
    /// JSON object merged over the default parameters.
    pub overrides: Value,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub title: String,
    pub space: SpaceSpec,
    pub params: Value,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<OutputRecord>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub wall_clock_secs: f64,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs an experiment, writing its tables and `manifest.json` into
/// `run_dir`.
pub fn run(id: &str, config: &RunConfig, run_dir: &Path) -> Result<RunManifest> {
    let exp = find(id)?;
    let space = config.space.clone().unwrap_or_else(exp.default_space);
    let params = exp.params(&config.overrides)?;
    let start = Instant::now();
    let outcome = exp.execute(&space, &params, config.seed).with_context(|| format!("experiment {} failed to run", exp.id))?;
    let wall = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(run_dir).with_context(|| format!("cannot create {}", run_dir.display()))?;
    let mut outputs = Vec::new();
    for t in &outcome.tables {
        let name = format!("{}.csv", t.name);
        io::write_bytes(&run_dir.join(&name), &t.bytes)?;
        outputs.push(OutputRecord { path: name, sha256: digest(&t.bytes) });
    }
    let manifest = RunManifest {
        experiment: exp.id.to_string(),
        title: exp.title.to_string(),
        space,
        params,
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
        passed: outcome.passed(),
        checks: outcome.checks,
        wall_clock_secs: wall,
    };
    io::write_json(&run_dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub identical: bool,
    pub differences: Vec<String>,
}

/// Re-runs the experiment recorded in a manifest and compares the
/// regenerated tables with the recorded digests and the files on disk.
pub fn replay(manifest_path: &Path) -> Result<ReplayReport> {
    let manifest: RunManifest = io::read_json(manifest_path)?;
    let dir: PathBuf = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    for o in &manifest.outputs {
        let p = dir.join(&o.path);
        if !p.is_file() {
            bail!("recorded output {} is missing", p.display());
        }
    }
    let exp = find(&manifest.experiment)?;
    let outcome = exp.execute(&manifest.space, &manifest.params, manifest.seed)?;
    let mut differences = Vec::new();
    if manifest.version != env!("CARGO_PKG_VERSION") {
        differences.push(format!("toolkit version {} differs from recorded {}", env!("CARGO_PKG_VERSION"), manifest.version));
    }
    let names: Vec<String> = outcome.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
    for o in &manifest.outputs {
        if !names.contains(&o.path) {
            differences.push(format!("{}: recorded but not regenerated", o.path));
        }
    }
    for (t, name) in outcome.tables.iter().zip(&names) {
        let Some(rec) = manifest.outputs.iter().find(|o| &o.path == name) else {
            differences.push(format!("{name}: regenerated but not recorded"));
            continue;
        };
        let fresh = digest(&t.bytes);
        if fresh != rec.sha256 {
            differences.push(format!("{name}: digest {fresh} differs from recorded {}", rec.sha256));
        }
        let on_disk = io::read_bytes(&dir.join(name))?;
        if on_disk != t.bytes {
            differences.push(describe_diff(name, &on_disk, &t.bytes));
        }
    }
    Ok(ReplayReport { identical: differences.is_empty(), differences })
}

fn describe_diff(name: &str, old: &[u8], new: &[u8]) -> String {
    let old = String::from_utf8_lossy(old);
    let new = String::from_utf8_lossy(new);
    let mut a = old.lines();
    let mut b = new.lines();
    let mut line = 1;
    loop {
        match (a.next(), b.next()) {
            (Some(x), Some(y)) if x == y => line += 1,
            (x, y) => {
                return format!("{name}: first difference at line {line}: recorded `{}`, regenerated `{}`", x.unwrap_or("<eof>"), y.unwrap_or("<eof>"));
            }
        }
    }
}

pub(crate) fn f(v: f64) -> String {
    v.to_string()
}
