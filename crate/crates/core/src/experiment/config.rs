//! Experiment configuration: one JSON document, optionally layered over a
//! named profile.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::runs::Variant;
use crate::data::{AugmentationPolicy, SyntheticConfig};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::objectives::LossConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 64×64 inputs, D=32, L=4, 300 iterations on synthetic data.
    #[default]
    Desk,
    /// D=128, L=12, 3000 iterations, 256×256 inputs.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Multiplier applied every `decay_interval` iterations.
    pub lr_decay: f64,
    pub decay_interval: usize,
    pub iterations: usize,
    pub batch_size: usize,
    /// Iterations between validation passes; the last iteration is always
    /// evaluated.
    pub eval_interval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV manifest; when absent the synthetic generator is used.
    pub manifest: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub augmentation: AugmentationPolicy,
    /// Tail of each shuffled training set held out for checkpoint selection.
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Kfold,
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub scheme: Scheme,
    /// Fold count for `kfold`.
    pub k: usize,
    /// Test share for `holdout`.
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    /// Every row is run once per seed.
    pub seeds: Vec<u64>,
    pub rows: Vec<Variant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub data: DataConfig,
    pub evaluation: EvaluationConfig,
    pub comparison: ComparisonConfig,
}

impl Profile {
    pub fn defaults(self) -> ExperimentConfig {
        match self {
            Profile::Desk => ExperimentConfig {
                profile: self,
                seed: 0,
                output_dir: PathBuf::from("runs/desk"),
                model: ModelConfig::desk(),
                loss: LossConfig::default(),
                optimizer: OptimizerConfig {
                    lr: 0.002,
                    momentum: 0.9,
                    lr_decay: 0.1,
                    decay_interval: 250,
                    iterations: 300,
                    batch_size: 16,
                    eval_interval: 50,
                },
                data: DataConfig {
                    manifest: None,
                    synthetic: SyntheticConfig::default(),
                    augmentation: AugmentationPolicy::IDENTITY,
                    validation_fraction: 0.1,
                },
                evaluation: EvaluationConfig { scheme: Scheme::Kfold, k: 5, test_fraction: 0.2 },
                comparison: ComparisonConfig { seeds: vec![0, 1, 2], rows: Variant::ALL.to_vec() },
            },
            Profile::Paper => {
                let desk = Profile::Desk.defaults();
                ExperimentConfig {
                    profile: self,
                    output_dir: PathBuf::from("runs/paper"),
                    model: ModelConfig::paper(),
                    optimizer: OptimizerConfig {
                        lr: 1e-3,
                        decay_interval: 1000,
                        iterations: 3000,
                        eval_interval: 250,
                        ..desk.optimizer
                    },
                    data: DataConfig {
                        synthetic: SyntheticConfig { image_size: [256, 256], ..SyntheticConfig::default() },
                        augmentation: AugmentationPolicy::standard(),
                        ..desk.data
                    },
                    ..desk
                }
            }
        }
    }
}

/// Recursively overlays `patch` on `base`: objects merge key by key, any
/// other value replaces.
pub fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Parses a config document. `profile` selects the defaults (desk when
    /// omitted); every other key overrides them. Unknown keys are errors.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::config(format!("invalid JSON: {e}")))?;
        let Value::Object(_) = doc else {
            return Err(Error::config("config must be a JSON object"));
        };
        let profile: Profile = match doc.get("profile") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| Error::config(format!("profile: {e}")))?,
            None => Profile::default(),
        };
        let mut merged = serde_json::to_value(profile.defaults())?;
        deep_merge(&mut merged, doc);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.data.augmentation.validate()?;
        self.data.synthetic.validate()?;
        let o = &self.optimizer;
        if !(o.lr.is_finite() && o.lr > 0.0) {
            return Err(Error::config("optimizer.lr must be > 0"));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return Err(Error::config("optimizer.momentum must lie in [0, 1)"));
        }
        if !(o.lr_decay.is_finite() && o.lr_decay > 0.0) {
            return Err(Error::config("optimizer.lr_decay must be > 0"));
        }
        if o.decay_interval == 0 || o.iterations == 0 || o.batch_size == 0 || o.eval_interval == 0 {
            return Err(Error::config("optimizer counts must be ≥ 1"));
        }
        if self.data.manifest.is_none() && self.data.synthetic.image_size != self.model.image_size {
            return Err(Error::config(format!(
                "data.synthetic.image_size {:?} differs from model.image_size {:?}",
                self.data.synthetic.image_size, self.model.image_size
            )));
        }
        if !(0.0..0.5).contains(&self.data.validation_fraction) {
            return Err(Error::config("data.validation_fraction must lie in [0, 0.5)"));
        }
        let e = &self.evaluation;
        match e.scheme {
            Scheme::Kfold if e.k < 2 => return Err(Error::config("evaluation.k must be ≥ 2")),
            Scheme::Holdout if !(e.test_fraction > 0.0 && e.test_fraction < 1.0) => {
                return Err(Error::config("evaluation.test_fraction must lie in (0, 1)"))
            }
            _ => {}
        }
        if self.comparison.rows.is_empty() {
            return Err(Error::config("comparison.rows must not be empty"));
        }
        if self.comparison.seeds.is_empty() {
            return Err(Error::config("comparison.seeds must not be empty"));
        }
        Ok(())
    }
}

/// `base_lr · decay^floor(iteration / interval)`.
pub fn lr_at(iteration: usize, base_lr: f64, decay: f64, interval: usize) -> f64 {
    base_lr * decay.powi((iteration / interval) as i32)
}
