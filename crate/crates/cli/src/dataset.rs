//! Datasets on disk: one UAI file per instance plus a JSON label sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fg_core::exact::{enumerate, ExactResult, DEFAULT_STATE_CAP};
use fg_core::generators::{generate, DatasetSpec};
use fg_core::graph::ZeroClamp;
use fg_core::uai::{read_uai, write_uai};
use fg_core::{FactorGraph, FgError};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: u64,
    pub family: String,
    pub index: usize,
    pub oracle_marginals: Option<Vec<Vec<f64>>>,
    #[serde(rename = "oracle_log_Z")]
    pub oracle_log_z: Option<f64>,
    pub oracle_map: Option<Vec<usize>>,
    pub oracle_map_log_score: Option<f64>,
}

impl Sidecar {
    pub fn oracle(&self) -> Option<ExactResult> {
        Some(ExactResult {
            log_z: self.oracle_log_z?,
            marginals: self.oracle_marginals.clone()?,
            map_assignment: self.oracle_map.clone()?,
            map_log_score: self.oracle_map_log_score?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInstance {
    pub name: String,
    pub graph: FactorGraph,
    pub sidecar: Option<Sidecar>,
}

impl LoadedInstance {
    /// Labels from the sidecar, or by enumeration when the state space is
    /// small enough.
    pub fn oracle(&self) -> Result<ExactResult> {
        if let Some(o) = self.sidecar.as_ref().and_then(|s| s.oracle()) {
            return Ok(o);
        }
        Ok(enumerate(&self.graph, DEFAULT_STATE_CAP)?)
    }
}

pub fn instance_stem(index: usize) -> String {
    format!("instance_{index:05}")
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Generates `spec` and writes it to `dir`, returning the number of files.
pub fn write_generated(spec: &DatasetSpec, dir: &Path) -> Result<usize> {
    let instances = generate(spec, DEFAULT_STATE_CAP)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for inst in &instances {
        let stem = instance_stem(inst.index);
        let o = inst.oracle.as_ref();
        let sidecar = Sidecar {
            seed: spec.seed,
            family: spec.family.name().to_string(),
            index: inst.index,
            oracle_marginals: o.map(|o| o.marginals.clone()),
            oracle_log_z: o.and_then(|o| finite(o.log_z)),
            oracle_map: o.map(|o| o.map_assignment.clone()),
            oracle_map_log_score: o.and_then(|o| finite(o.map_log_score)),
        };
        write_file(&dir.join(format!("{stem}.uai")), &write_uai(&inst.graph))?;
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
        write_file(&dir.join(format!("{stem}.json")), &(json + "\n"))?;
    }
    Ok(instances.len())
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Reads every `*.uai` file in `dir` (sorted by name) with its sidecar when
/// present.
pub fn read_dataset(dir: &Path, clamp: ZeroClamp) -> Result<Vec<LoadedInstance>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "uai"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::BadInput(format!("{} contains no .uai files", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
            let graph = read_uai(&bytes, clamp).map_err(|e| match e {
                FgError::Parse(m) => CliError::BadInput(format!("{}: {m}", p.display())),
                other => other.into(),
            })?;
            let side = p.with_extension("json");
            let sidecar = if side.exists() {
                let text = read_file(&side)?;
                Some(
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::BadInput(format!("{}: {e}", side.display())))?,
                )
            } else {
                None
            };
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(LoadedInstance { name, graph, sidecar })
        })
        .collect()
}
