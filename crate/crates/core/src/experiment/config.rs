//! JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::editor::{EditRule, EditStreamOptions};
use crate::error::{Error, Result};
use crate::metrics::MetricSettings;
use crate::prune::RestraintConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditRuleKind {
    RankOne,
    Covariance,
}

/// One experiment. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: usize,
    pub q: usize,
    pub num_pairs: usize,
    pub num_edits: usize,
    pub edit_rule: EditRuleKind,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub restraint: Option<RestraintConfig>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_gen_samples")]
    pub gen_samples: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Defaults to half the edits.
    #[serde(default)]
    pub first_m: Option<usize>,
    /// Shared target directions for the edit stream; 0 draws independent targets.
    #[serde(default)]
    pub target_pool: usize,
    #[serde(default = "default_target_noise")]
    pub target_noise: f64,
}

fn default_ridge() -> f64 {
    1e-2
}
fn default_noise() -> f64 {
    0.05
}
fn default_gen_samples() -> usize {
    8
}
fn default_tol() -> f64 {
    0.1
}
fn default_checkpoint_every() -> usize {
    10
}
fn default_target_noise() -> f64 {
    0.1
}

impl ExperimentConfig {
    /// Config with every optional key at its default.
    pub fn new(p: usize, q: usize, num_pairs: usize, num_edits: usize, seed: u64) -> Self {
        ExperimentConfig {
            p,
            q,
            num_pairs,
            num_edits,
            edit_rule: EditRuleKind::RankOne,
            ridge: default_ridge(),
            restraint: None,
            noise: default_noise(),
            gen_samples: default_gen_samples(),
            tol: default_tol(),
            checkpoint_every: default_checkpoint_every(),
            seed,
            first_m: None,
            target_pool: 0,
            target_noise: default_target_noise(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("config")
                .to_string();
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!("must be a finite number > 0, got {x}"),
                ))
            }
        };
        if self.p == 0 {
            return Err(Error::config("p", "must be >= 1"));
        }
        if self.p >= self.q {
            return Err(Error::config("q", format!("must exceed p = {}", self.p)));
        }
        if self.num_pairs == 0 || self.num_pairs > self.q {
            return Err(Error::config(
                "num_pairs",
                format!("must be in 1..={}", self.q),
            ));
        }
        if self.num_edits == 0 {
            return Err(Error::config("num_edits", "must be >= 1"));
        }
        positive("ridge", self.ridge)?;
        positive("tol", self.tol)?;
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise", "must be a finite number >= 0"));
        }
        if !(self.target_noise >= 0.0 && self.target_noise.is_finite()) {
            return Err(Error::config(
                "target_noise",
                "must be a finite number >= 0",
            ));
        }
        if self.gen_samples == 0 {
            return Err(Error::config("gen_samples", "must be >= 1"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every", "must be >= 1"));
        }
        if let Some(m) = self.first_m {
            if m == 0 || m > self.num_edits {
                return Err(Error::config(
                    "first_m",
                    format!("must be in 1..={}", self.num_edits),
                ));
            }
        }
        if let Some(r) = &self.restraint {
            r.validate()?;
        }
        Ok(())
    }

    pub fn rule(&self) -> EditRule {
        match self.edit_rule {
            EditRuleKind::RankOne => EditRule::RankOne,
            EditRuleKind::Covariance => EditRule::Covariance { ridge: self.ridge },
        }
    }

    pub fn first_m(&self) -> usize {
        self.first_m.unwrap_or((self.num_edits / 2).max(1))
    }

    pub fn metric_settings(&self) -> MetricSettings {
        MetricSettings {
            tol: self.tol,
            noise: self.noise,
            gen_samples: self.gen_samples,
            seed: self.seed,
        }
    }

    pub fn stream_options(&self) -> EditStreamOptions {
        EditStreamOptions {
            target_pool: self.target_pool,
            target_noise: self.target_noise,
            ..EditStreamOptions::default()
        }
    }
}
