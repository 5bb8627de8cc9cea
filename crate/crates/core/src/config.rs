//! Pipeline configuration: one JSON document with full defaults and dotted
//! `key=value` overrides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::augment::{AugmentPolicy, SmotePolicy};
use crate::classifier::GridPlan;
use crate::error::{Error, Result};
use crate::ingest::SyncOptions;
use crate::model::DurationStats;
use crate::postprocess::DEFAULT_VALLEY_MARGIN_S;
use crate::synth::SimConfig;
use crate::windowing::WindowSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Primary window sizes to sweep, in seconds.
    pub primary_s: Vec<f64>,
    /// Window multiples to sweep (odd).
    pub n_values: Vec<usize>,
    pub augment: AugmentPolicy,
    pub smote: SmotePolicy,
    pub durations: DurationStats,
    pub mrmr_k: usize,
    pub grid: GridPlan,
    pub vote_windows: usize,
    pub valley_margin_s: f64,
    pub folds: usize,
    /// Also evaluate with load-cell features removed from the selection
    /// universe.
    pub ablation: bool,
    pub seed: u64,
    pub sync: SyncOptions,
    pub simulate: SimConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            primary_s: vec![0.4],
            n_values: vec![5],
            augment: AugmentPolicy::default(),
            smote: SmotePolicy::default(),
            durations: DurationStats::default(),
            mrmr_k: 20,
            grid: GridPlan::single(200, 5),
            vote_windows: 5,
            valley_margin_s: DEFAULT_VALLEY_MARGIN_S,
            folds: 4,
            ablation: true,
            seed: 42,
            sync: SyncOptions::default(),
            simulate: SimConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Window specs in sweep order (primary size major).
    pub fn window_specs(&self) -> Result<Vec<WindowSpec>> {
        let mut out = Vec::new();
        for &p in &self.primary_s {
            for &n in &self.n_values {
                out.push(WindowSpec::new(p, n)?);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("window sweep is empty".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.window_specs()?;
        self.augment.validate()?;
        self.durations.validate()?;
        self.grid.validate()?;
        if self.smote.k_neighbors == 0 {
            return Err(Error::Config("smote.k_neighbors must be at least 1".into()));
        }
        if self.mrmr_k == 0 {
            return Err(Error::Config("mrmr_k must be at least 1".into()));
        }
        if self.vote_windows == 0 || self.vote_windows % 2 == 0 {
            return Err(Error::Config(format!("vote_windows must be odd, got {}", self.vote_windows)));
        }
        if !(self.valley_margin_s >= 0.0 && self.valley_margin_s.is_finite()) {
            return Err(Error::Config("valley_margin_s must be finite and >= 0".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if !(self.sync.sample_rate > 0.0 && self.sync.tap_window_s > 0.0) {
            return Err(Error::Config("sync options must be positive".into()));
        }
        Ok(())
    }

    /// Applies `a.b.c=value`. The value is parsed as JSON when possible and
    /// otherwise taken as a string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).map_err(|e| Error::json("config", e))?;
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("`{}` is not an object", parts[..i].join("."))))?;
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            node = obj.get_mut(*part).expect("checked");
        }
        *node = value;
        let updated: PipelineConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(format!("override `{assignment}`: {e}")))?;
        *self = updated;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}
