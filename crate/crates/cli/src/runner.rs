//! Running any supported algorithm on a graph and loading trained models.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use fg_core::bp::{decode_map, run_bp, BpConfig, BpMode};
use fg_core::exact::{enumerate, DEFAULT_STATE_CAP};
use fg_core::search::{beam_search, best_first_search, SearchConfig};
use fg_core::FactorGraph;
use fg_models::{FeGnnConfig, FeGnnModel, FeNbpConfig, FeNbpModel};

use crate::dataset::{read_file, write_file};
use crate::error::{CliError, Result};
use crate::metrics::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Exact,
    Bp,
    Fenbp,
    Fegnn,
    Beam,
    Bestfirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fenbp,
    Fegnn,
}

/// A trained (or freshly initialised) learned model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Fenbp(FeNbpModel),
    Fegnn(FeGnnModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelConfig {
    Fenbp(FeNbpConfig),
    Fegnn(FeGnnConfig),
}

/// Sidecar path holding the architecture of a checkpoint.
pub fn config_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

impl Model {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::Fenbp(c) => Model::Fenbp(FeNbpModel::new(*c, seed)?),
            ModelConfig::Fegnn(c) => Model::Fegnn(FeGnnModel::new(*c, seed)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Fenbp(m) => ModelConfig::Fenbp(m.config),
            Model::Fegnn(m) => ModelConfig::Fegnn(m.config),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Fenbp(_) => ModelKind::Fenbp,
            Model::Fegnn(_) => ModelKind::Fegnn,
        }
    }

    /// Writes the parameter checkpoint and its architecture sidecar.
    pub fn save(&self, ckpt: &Path) -> Result<()> {
        let params = match self {
            Model::Fenbp(m) => m.to_json()?,
            Model::Fegnn(m) => m.to_json()?,
        };
        write_file(ckpt, &params)?;
        let cfg = serde_json::to_string_pretty(&self.config()).expect("config serialises");
        write_file(&config_path(ckpt), &(cfg + "\n"))
    }

    /// Loads a checkpoint; the architecture comes from the sidecar when it
    /// exists and from `fallback` otherwise.
    pub fn load(ckpt: &Path, fallback: &ModelConfig) -> Result<Self> {
        let cfg_file = config_path(ckpt);
        let config = if cfg_file.exists() {
            serde_json::from_str(&read_file(&cfg_file)?)
                .map_err(|e| CliError::BadInput(format!("{}: {e}", cfg_file.display())))?
        } else {
            fallback.clone()
        };
        let mut model = Model::init(&config, 0)?;
        let text = read_file(ckpt)?;
        match &mut model {
            Model::Fenbp(m) => m.load_json(&text)?,
            Model::Fegnn(m) => m.load_json(&text)?,
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: BpMode,
    pub damping: f64,
    pub iters: usize,
    pub beam_size: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: BpMode::Sum,
            damping: 0.0,
            iters: 200,
            beam_size: 10,
            seed: 0,
        }
    }
}

fn from_bp(mode: BpMode, beliefs: Vec<Vec<f64>>) -> Estimate {
    let map = beliefs.iter().map(|r| fg_core::bp::argmax(r)).collect();
    match mode {
        BpMode::Sum => Estimate {
            marginals: Some(beliefs),
            map: Some(map),
        },
        BpMode::Max => Estimate {
            marginals: None,
            map: Some(map),
        },
    }
}

/// Runs `algo` on `g`. Learned algorithms need `model`.
pub fn run(algo: Algo, g: &FactorGraph, opts: &RunOptions, model: Option<&Model>) -> Result<Estimate> {
    Ok(match algo {
        Algo::Exact => {
            let r = enumerate(g, DEFAULT_STATE_CAP)?;
            match opts.mode {
                BpMode::Sum => Estimate {
                    marginals: Some(r.marginals),
                    map: Some(r.map_assignment),
                },
                BpMode::Max => Estimate {
                    marginals: None,
                    map: Some(r.map_assignment),
                },
            }
        }
        Algo::Bp => {
            let r = run_bp(
                g,
                &BpConfig {
                    mode: opts.mode,
                    max_iters: opts.iters,
                    ..BpConfig::damped(opts.damping)
                },
            );
            let map = decode_map(&r.beliefs);
            let mut e = from_bp(opts.mode, r.beliefs.variable_beliefs);
            e.map = Some(map);
            e
        }
        Algo::Fenbp => match model {
            Some(Model::Fenbp(m)) => from_bp(m.config.mode, m.forward(g)?.beliefs.variable_beliefs),
            _ => return Err(CliError::BadInput("fenbp needs an fenbp checkpoint".into())),
        },
        Algo::Fegnn => match model {
            Some(Model::Fegnn(m)) => from_bp(BpMode::Sum, m.forward(g)?),
            _ => return Err(CliError::BadInput("fegnn needs an fegnn checkpoint".into())),
        },
        Algo::Beam | Algo::Bestfirst => {
            let cfg = SearchConfig {
                cache_size: opts.beam_size,
                seed: opts.seed,
                ..SearchConfig::default()
            };
            let r = if algo == Algo::Beam {
                beam_search(g, &cfg)
            } else {
                best_first_search(g, &cfg)
            };
            Estimate {
                marginals: None,
                map: Some(r.assignment),
            }
        }
    })
}
