use std::path::{Path, PathBuf};

use oblivious_bab::exact::DEFAULT_NODE_CAP;
use oblivious_bab::framework::FrameworkConfig;
use oblivious_bab::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Settings readable from a TOML file; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub beta_init: Option<f64>,
    pub beta_steps: Option<u32>,
    pub bit_budget: Option<u32>,
    pub c_target: Option<f64>,
    pub rob_trials: Option<u32>,
    pub node_cap: Option<usize>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Effective settings after merging flags over the file over defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub gamma: f64,
    pub seed: Option<u64>,
    pub beta_init: f64,
    pub beta_steps: u32,
    pub bit_budget: u32,
    pub c_target: f64,
    pub rob_trials: u32,
    pub node_cap: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fw = FrameworkConfig::default();
        RunConfig {
            gamma: fw.gamma,
            seed: None,
            beta_init: fw.beta_init,
            beta_steps: fw.beta_steps,
            bit_budget: fw.bit_budget,
            c_target: fw.c_target,
            rob_trials: fw.rob_trials,
            node_cap: DEFAULT_NODE_CAP,
            out: None,
            report: None,
        }
    }
}

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    toml::from_str(&text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| {
                let before = &text[..s.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
                (line, column)
            })
            .unwrap_or((0, 0));
        Error::Parse { line, column, message: e.message().to_string() }
    })
}

impl RunConfig {
    /// Applies `file` over the defaults, then `flags` over the result.
    pub fn resolve(file: Option<&FileConfig>, flags: &FileConfig) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for layer in file.into_iter().chain(std::iter::once(flags)) {
            if let Some(v) = layer.gamma {
                cfg.gamma = v;
            }
            if let Some(v) = layer.seed {
                cfg.seed = Some(v);
            }
            if let Some(v) = layer.beta_init {
                cfg.beta_init = v;
            }
            if let Some(v) = layer.beta_steps {
                cfg.beta_steps = v;
            }
            if let Some(v) = layer.bit_budget {
                cfg.bit_budget = v;
            }
            if let Some(v) = layer.c_target {
                cfg.c_target = v;
            }
            if let Some(v) = layer.rob_trials {
                cfg.rob_trials = v;
            }
            if let Some(v) = layer.node_cap {
                cfg.node_cap = v;
            }
            if let Some(v) = &layer.out {
                cfg.out = Some(v.clone());
            }
            if let Some(v) = &layer.report {
                cfg.report = Some(v.clone());
            }
        }
        cfg.framework(0).validate()?;
        Ok(cfg)
    }

    /// The seed, required by every randomized command.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Validation("a seed is required (--seed or `seed` in the config file)".into()))
    }

    pub fn framework(&self, seed: u64) -> FrameworkConfig {
        FrameworkConfig {
            gamma: self.gamma,
            seed,
            beta_init: self.beta_init,
            beta_steps: self.beta_steps,
            bit_budget: self.bit_budget,
            c_target: self.c_target,
            rob_trials: self.rob_trials,
            exact_node_cap: Some(self.node_cap),
        }
    }

    /// SHA-256 of the canonical JSON form, in hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
