//! One module per experiment kind. Each returns its main table, a JSON
//! block of results and its verdicts; [`run`] writes them out.

mod dos;
mod fracmom;
mod geometry;
mod minami;
mod oracle;
mod process;
mod wegner;

use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::output::{json_bytes, write_file, FileDigest, Table, Verdict};
use crate::runner::Pool;

pub struct ExperimentOutput {
    pub table: Table,
    pub results: Value,
    pub verdicts: Vec<Verdict>,
    /// Additional files, `(name, bytes)`.
    pub extra: Vec<(String, Vec<u8>)>,
}

pub fn execute(cfg: &ExperimentConfig, pool: &Pool) -> LabResult<ExperimentOutput> {
    cfg.validate()?;
    match &cfg.experiment {
        Experiment::Geometry(k) => geometry::run(cfg, k),
        Experiment::Oracle(k) => oracle::run(cfg, k, pool),
        Experiment::Wegner(k) => wegner::run(cfg, k, pool),
        Experiment::Minami(k) => minami::run(cfg, k, pool),
        Experiment::Fracmom(k) => fracmom::run(cfg, k, pool),
        Experiment::Dos(k) => dos::run(cfg, k, pool),
        Experiment::Process(k) => process::run(cfg, k, pool),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub kind: String,
    pub config: ExperimentConfig,
    pub started: String,
    pub finished: String,
    pub workers: usize,
    pub outputs: Vec<FileDigest>,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl RunManifest {
    /// `(file, sha256)` pairs; equal for reruns of one config and seed.
    pub fn digests(&self) -> Vec<(String, String)> {
        self.outputs.iter().map(|d| (d.file.clone(), d.sha256.clone())).collect()
    }
}

pub const MANIFEST: &str = "manifest.json";

fn timestamp() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

/// Runs the experiment and writes `<kind>.csv`, `<kind>_summary.json`, any
/// extra files and `manifest.json` into the configured output directory.
pub fn run(cfg: &ExperimentConfig) -> LabResult<RunManifest> {
    cfg.validate()?;
    let started = timestamp();
    let pool = Pool::new(cfg.workers)?;
    let out = execute(cfg, &pool)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let kind = cfg.kind().name();
    let pass = out.verdicts.iter().all(|v| v.pass);
    let mut outputs = vec![write_file(dir, &format!("{kind}.csv"), &out.table.to_bytes()?)?];
    let summary = json!({
        "kind": kind,
        "config": cfg.result_echo(),
        "results": out.results,
        "verdicts": out.verdicts,
        "pass": pass,
    });
    outputs.push(write_file(dir, &format!("{kind}_summary.json"), &json_bytes(&summary)?)?);
    for (name, bytes) in &out.extra {
        outputs.push(write_file(dir, name, bytes)?);
    }
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind: kind.to_string(),
        config: cfg.clone(),
        started,
        finished: timestamp(),
        workers: pool.workers(),
        outputs,
        verdicts: out.verdicts,
        pass,
    };
    write_file(dir, MANIFEST, &json_bytes(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &std::path::Path) -> LabResult<RunManifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| LabError::MissingInput(format!("{} (run an experiment first)", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Combined standard error of a difference.
pub(crate) fn combined(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}
