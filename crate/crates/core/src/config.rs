//! Experiment configuration: TOML on disk, validated ranges, and
//! resolution of density/switching registry specs into live objects.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{DensityError, SplittingDensity, SwitchingFunction};
use crate::pointproc::{PointError, TruncationPolicy};

#[derive(Debug, Clone, Error)]
pub enum ConfigError {
    #[error("could not read config file {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field {field} out of range: {message}")]
    Range { field: &'static str, message: String },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Point(#[from] PointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    #[serde(default)]
    pub grow: GrowSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub master_seed: u64,
    pub replicates: u64,
    /// 0 means all available cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_out_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `brownian`, `beta(a,b)`, `beta(a,b,scale)` or `file:<path>`.
    pub density: String,
    /// `none`, `size-biased`, `bigger-block` or `const(c)`.
    pub switching: String,
    pub alpha: f64,
    pub epsilon: f64,
    pub tail_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowSection {
    pub steps: usize,
    pub checkpoints: Vec<usize>,
}

impl Default for GrowSection {
    fn default() -> Self {
        GrowSection { steps: 64, checkpoints: vec![16, 32, 64] }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_string(), message: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if !(m.epsilon > 0.0 && m.epsilon < 1.0) {
            return Err(ConfigError::Range {
                field: "model.epsilon",
                message: format!("need 0 < epsilon < 1, got {}", m.epsilon),
            });
        }
        if !(m.tail_tol > 0.0 && m.tail_tol < 1.0) {
            return Err(ConfigError::Range {
                field: "model.tail_tol",
                message: format!("need 0 < tail_tol < 1, got {}", m.tail_tol),
            });
        }
        if !(m.alpha > 0.0) {
            return Err(ConfigError::Range {
                field: "model.alpha",
                message: format!("need alpha > 0, got {}", m.alpha),
            });
        }
        if self.grow.steps < 1 {
            return Err(ConfigError::Range {
                field: "grow.steps",
                message: "need at least one step".to_string(),
            });
        }
        for &c in &self.grow.checkpoints {
            if c < 1 || c > self.grow.steps {
                return Err(ConfigError::Range {
                    field: "grow.checkpoints",
                    message: format!("checkpoint {c} outside 1..={}", self.grow.steps),
                });
            }
        }
        if self.grow.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Range {
                field: "grow.checkpoints",
                message: "checkpoints must be strictly increasing".to_string(),
            });
        }
        Ok(())
    }

    /// Instantiate the density, switching function and truncation policy.
    pub fn resolve(&self) -> Result<ResolvedModel, ConfigError> {
        let density = SplittingDensity::from_spec(&self.model.density)?;
        let switching = SwitchingFunction::from_spec(&self.model.switching)?;
        let policy = TruncationPolicy::new(&density, self.model.epsilon)?;
        Ok(ResolvedModel {
            density,
            switching,
            policy,
            alpha: self.model.alpha,
            tail_tol: self.model.tail_tol,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub density: SplittingDensity,
    pub switching: SwitchingFunction,
    pub policy: TruncationPolicy,
    pub alpha: f64,
    pub tail_tol: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[experiment]
master_seed = 42
replicates = 1000
workers = 2
out_dir = "out"

[model]
density = "brownian"
switching = "size-biased"
alpha = 0.5
epsilon = 1e-3
tail_tol = 1e-6

[grow]
steps = 64
checkpoints = [16, 32, 64]
"#;

    #[test]
    fn round_trips_bit_exactly() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let once = cfg.to_toml();
        let twice = ExperimentConfig::from_toml(&once).unwrap().to_toml();
        assert_eq!(once, twice);
        assert_eq!(cfg, ExperimentConfig::from_toml(&once).unwrap());
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let bad = SAMPLE.replace("epsilon = 1e-3", "epsilon = 1.5");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad),
            Err(ConfigError::Range { field: "model.epsilon", .. })
        ));
        let bad = SAMPLE.replace("checkpoints = [16, 32, 64]", "checkpoints = [16, 128]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SAMPLE.replace("alpha = 0.5", "alpha = -1.0");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SAMPLE.replace("density = \"brownian\"", "density = \"nonsense\"");
        // spec errors surface at resolve time
        let cfg = ExperimentConfig::from_toml(&bad).unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = SAMPLE.replace("workers = 2", "workers = 2\ntypo_field = 1");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn resolve_builds_model() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let m = cfg.resolve().unwrap();
        assert_eq!(m.density.label(), "brownian");
        assert_eq!(m.switching.label(), "size-biased");
        assert!(m.policy.bias_bound > 0.0);
    }
}
