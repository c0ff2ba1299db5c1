//! Declarative experiment descriptions: serializable environment, kernel,
//! and parameter specs that validate into the live types.
//!
//! A config plus the crate version pins a run completely; nothing here
//! carries hidden state, so serializing a config and rebuilding from it
//! reproduces outputs bit for bit.

use serde::{Deserialize, Serialize};

use crate::product::HoroProduct;
use crate::tree::{EnvError, PointedTreeEnv};
use crate::walk::{Kernel, DEFAULT_SUPPORT_BUDGET};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("config: {0}")]
    Invalid(String),
}

/// Tree environment descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Every vertex gets the same number of forward children.
    Homogeneous { children: u32 },
    /// Offspring counts drawn per vertex from a seeded law;
    /// `weights[i]` is the relative mass of `i + 1` children.
    GaltonWatson { weights: Vec<f64>, seed: u64 },
}

impl EnvSpec {
    pub fn build(&self, label: &str) -> Result<PointedTreeEnv, ConfigError> {
        match self {
            EnvSpec::Homogeneous { children } => {
                Ok(PointedTreeEnv::homogeneous(*children, label)?)
            }
            EnvSpec::GaltonWatson { weights, seed } => {
                Ok(PointedTreeEnv::galton_watson(weights, *seed, label)?)
            }
        }
    }

    /// The same environment with its seed replaced, for resampling random
    /// environments; homogeneous specs come back unchanged.
    pub fn reseeded(&self, seed: u64) -> EnvSpec {
        match self {
            EnvSpec::Homogeneous { .. } => self.clone(),
            EnvSpec::GaltonWatson { weights, .. } => EnvSpec::GaltonWatson {
                weights: weights.clone(),
                seed,
            },
        }
    }
}

/// Walk kernel descriptor. The function-valued kernel has no serializable
/// form and is deliberately absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    Simple,
    HeightBiased { up: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel, ConfigError> {
        match self {
            KernelSpec::Simple => Ok(Kernel::Simple),
            KernelSpec::HeightBiased { up } => {
                if !(*up > 0.0 && *up <= 1.0) {
                    return Err(ConfigError::Invalid(format!(
                        "up probability {up} outside (0, 1]"
                    )));
                }
                Ok(Kernel::HeightBiased { up: *up })
            }
        }
    }
}

/// Run parameters. Every field has a default, so configs only spell out
/// what they change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Master seed; everything derived fans out from it.
    pub seed: u64,
    /// Steps per sampled walk.
    pub n: usize,
    /// Number of sampled walks.
    pub walks: usize,
    /// Ball radius for distance verification.
    pub radius: u32,
    /// Horizon of the exact n-step program.
    pub n_max: usize,
    /// State cap for the exact n-step program.
    pub budget: usize,
    /// Boundary-address prefix depth for convergence statistics.
    pub prefix_depth: usize,
    /// Environments averaged over when entropy is taken over a random
    /// environment law; 1 means just the configured one.
    pub env_samples: usize,
    /// How many walks the path CSV records (reports still use all walks).
    pub csv_walks: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            seed: 1,
            n: 10_000,
            walks: 200,
            radius: 6,
            n_max: 12,
            budget: DEFAULT_SUPPORT_BUDGET,
            prefix_depth: 10,
            env_samples: 1,
            csv_walks: 3,
        }
    }
}

/// Output destinations; commands fall back to these when no flag is given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub csv: Option<String>,
    pub json: Option<String>,
}

/// A full experiment description: the product of two tree environments, a
/// kernel, run parameters, and output paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub left: EnvSpec,
    pub right: EnvSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: Outputs,
}

impl ExperimentConfig {
    /// Product of homogeneous trees with `p` and `q` forward children.
    pub fn dl(p: u32, q: u32) -> ExperimentConfig {
        ExperimentConfig {
            left: EnvSpec::Homogeneous { children: p },
            right: EnvSpec::Homogeneous { children: q },
            kernel: KernelSpec::Simple,
            params: Params::default(),
            output: Outputs::default(),
        }
    }

    pub fn build_product(&self) -> Result<HoroProduct, ConfigError> {
        self.check_params()?;
        Ok(HoroProduct::new(
            self.left.build("left")?,
            self.right.build("right")?,
        ))
    }

    pub fn build_kernel(&self) -> Result<Kernel, ConfigError> {
        self.kernel.build()
    }

    fn check_params(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        for (name, v) in [
            ("n", p.n),
            ("walks", p.walks),
            ("n_max", p.n_max),
            ("budget", p.budget),
            ("prefix_depth", p.prefix_depth),
            ("env_samples", p.env_samples),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_and_roundtrip() {
        let cfg = ExperimentConfig::dl(2, 3);
        let g = cfg.build_product().unwrap();
        assert_eq!(g.degree(&g.origin()), 5);
        assert!(matches!(cfg.build_kernel().unwrap(), Kernel::Simple));
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn galton_watson_spec_builds_and_reseeds() {
        let spec = EnvSpec::GaltonWatson {
            weights: vec![1.0, 1.0, 1.0],
            seed: 42,
        };
        let env = spec.build("l").unwrap();
        let o = crate::tree::TreeVertexAddr::root();
        let c = env.offspring(&o);
        assert!((1..=3).contains(&c));
        assert_eq!(spec.reseeded(42), spec);
        assert_ne!(spec.reseeded(7), spec);
        let homog = EnvSpec::Homogeneous { children: 2 };
        assert_eq!(homog.reseeded(7), homog);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ExperimentConfig::dl(2, 3);
        cfg.kernel = KernelSpec::HeightBiased { up: 0.0 };
        assert!(cfg.build_kernel().is_err());
        cfg.kernel = KernelSpec::HeightBiased { up: 1.0 };
        assert!(cfg.build_kernel().is_ok());
        cfg.params.walks = 0;
        assert!(cfg.build_product().is_err());

        let bad = ExperimentConfig {
            left: EnvSpec::Homogeneous { children: 0 },
            ..ExperimentConfig::dl(2, 2)
        };
        assert!(bad.build_product().is_err());

        // unknown fields are config errors, not silently dropped
        let r: Result<ExperimentConfig, _> = serde_json::from_str(
            r#"{"left":{"kind":"homogeneous","children":2},
                "right":{"kind":"homogeneous","children":2},
                "params":{"wa1ks":5}}"#,
        );
        assert!(r.is_err());
    }
}
