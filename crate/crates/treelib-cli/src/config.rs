//! Run configuration: TOML schema, defaults, validation, and the content
//! hash that ties emitted artifacts to the configuration that produced
//! them.

use serde::{Deserialize, Serialize};
use treelib_core::problems::{kdv_parameter_box, HilbertProblem, ParameterBox, TrainingSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub kdv: KdvConfig,
    pub training: TrainingConfig,
    pub algorithm: AlgorithmConfig,
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Smooth two-parameter diffusion; `alpha` controls coercivity.
    Diff1 { alpha: f64 },
    /// Piecewise-constant-in-x diffusion with discontinuous parameter
    /// dependence.
    Diff2,
    /// Convection-diffusion with convection strength up to `y_max`.
    CvDiff { y_max: f64 },
    /// Two-soliton KdV densities in Wasserstein space.
    Kdv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Number of uniform cells on (0, 1).
    pub cells: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { cells: 1024 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdvConfig {
    /// Spatial window; must capture the solitons over the whole parameter
    /// box.
    pub x_lo: f64,
    pub x_hi: f64,
    /// Number of spatial grid points.
    pub grid: usize,
    /// Number of quantile quadrature nodes.
    pub s: usize,
}

impl Default for KdvConfig {
    fn default() -> Self {
        KdvConfig {
            x_lo: -2.0,
            x_hi: 4.0,
            grid: 4096,
            s: 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrainingConfig {
    /// Tensor grid with the given per-dimension counts (endpoints
    /// included).
    Grid { counts: Vec<usize> },
    /// Seeded uniform samples.
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AlgorithmConfig {
    /// Single greedy run over the whole training set.
    Plain {
        #[serde(default)]
        n_max: Option<usize>,
    },
    /// Dyadic parameter-domain splitting.
    Ycart {
        n_max: usize,
        #[serde(default = "default_rule")]
        rule: SplitRuleConfig,
    },
    /// Snapshot-driven splitting.
    Mbased {
        #[serde(default = "default_extra_steps")]
        extra_steps: usize,
        #[serde(default)]
        n_max: Option<usize>,
    },
}

fn default_rule() -> SplitRuleConfig {
    SplitRuleConfig::Best
}

fn default_extra_steps() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRuleConfig {
    Best,
    Alternate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    pub output_dir: String,
}

fn default_max_depth() -> usize {
    12
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.run.epsilon > 0.0) {
            return Err(format!("run.epsilon must be positive, got {}", self.run.epsilon));
        }
        if self.run.max_depth == 0 {
            return Err("run.max_depth must be at least 1".into());
        }
        match &self.problem {
            ProblemConfig::Diff1 { alpha } => {
                HilbertProblem::diff1(*alpha).map_err(|e| e.to_string())?;
            }
            ProblemConfig::CvDiff { y_max } => {
                HilbertProblem::cvdiff(*y_max).map_err(|e| e.to_string())?;
            }
            ProblemConfig::Kdv => {
                if !(self.kdv.x_lo < self.kdv.x_hi) || self.kdv.grid < 16 || self.kdv.s < 16 {
                    return Err("kdv window/grid/s settings are invalid".into());
                }
            }
            ProblemConfig::Diff2 => {}
        }
        let dim = self.parameter_box().dim();
        match &self.training {
            TrainingConfig::Grid { counts } => {
                if counts.len() != dim {
                    return Err(format!(
                        "training.counts has {} entries but the problem has {dim} parameters",
                        counts.len()
                    ));
                }
            }
            TrainingConfig::Random { count, .. } => {
                if *count < 2 {
                    return Err("training.count must be at least 2".into());
                }
            }
        }
        if let AlgorithmConfig::Mbased { extra_steps, .. } = &self.algorithm {
            if *extra_steps < 2 {
                return Err("algorithm.extra_steps must be at least 2".into());
            }
        }
        if matches!(self.problem, ProblemConfig::Kdv)
            && matches!(self.algorithm, AlgorithmConfig::Ycart { .. })
        {
            return Err("ycart is not available for the kdv problem".into());
        }
        Ok(())
    }

    pub fn problem_id(&self) -> &'static str {
        match self.problem {
            ProblemConfig::Diff1 { .. } => "diff1",
            ProblemConfig::Diff2 => "diff2",
            ProblemConfig::CvDiff { .. } => "cvdiff",
            ProblemConfig::Kdv => "kdv",
        }
    }

    pub fn algorithm_id(&self) -> &'static str {
        match self.algorithm {
            AlgorithmConfig::Plain { .. } => "plain",
            AlgorithmConfig::Ycart { .. } => "ycart",
            AlgorithmConfig::Mbased { .. } => "mbased",
        }
    }

    pub fn hilbert_problem(&self) -> Option<HilbertProblem> {
        match &self.problem {
            ProblemConfig::Diff1 { alpha } => Some(HilbertProblem::diff1(*alpha).expect("validated")),
            ProblemConfig::Diff2 => Some(HilbertProblem::diff2()),
            ProblemConfig::CvDiff { y_max } => {
                Some(HilbertProblem::cvdiff(*y_max).expect("validated"))
            }
            ProblemConfig::Kdv => None,
        }
    }

    pub fn parameter_box(&self) -> ParameterBox {
        match &self.problem {
            ProblemConfig::Kdv => kdv_parameter_box(),
            _ => self.hilbert_problem().expect("hilbert problem").parameter_box(),
        }
    }

    pub fn kdv_grid(&self) -> Result<treelib_core::wasserstein1d::Grid1d, String> {
        treelib_core::wasserstein1d::Grid1d::new(self.kdv.x_lo, self.kdv.x_hi, self.kdv.grid)
            .map_err(|e| e.to_string())
    }

    pub fn training_spec(&self) -> TrainingSpec {
        match &self.training {
            TrainingConfig::Grid { counts } => TrainingSpec::Grid {
                counts: counts.clone(),
            },
            TrainingConfig::Random { count, seed } => TrainingSpec::Random {
                count: *count,
                seed: *seed,
            },
        }
    }

    /// FNV-1a hash of the canonical TOML serialization; recorded in every
    /// artifact so stale files are detectable.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in canonical.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// Default configuration used by `show-defaults`: the smooth diffusion
/// problem with a plain greedy.
pub fn default_config() -> RunConfig {
    RunConfig {
        problem: ProblemConfig::Diff1 { alpha: 1.0 },
        mesh: MeshConfig::default(),
        kdv: KdvConfig::default(),
        training: TrainingConfig::Grid {
            counts: vec![50, 50],
        },
        algorithm: AlgorithmConfig::Plain { n_max: None },
        run: RunSection {
            epsilon: 1e-6,
            seed: 1,
            max_depth: default_max_depth(),
            output_dir: "out".into(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let config = default_config();
        config.validate().unwrap();
        let text = toml::to_string_pretty(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.hash(), config.hash());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = default_config();
        let mut b = default_config();
        b.run.epsilon = 1e-7;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = default_config();
        c.run.epsilon = 0.0;
        assert!(c.validate().is_err());
        let mut c = default_config();
        c.training = TrainingConfig::Grid { counts: vec![50] };
        assert!(c.validate().is_err());
        let mut c = default_config();
        c.problem = ProblemConfig::Diff1 { alpha: 0.01 };
        assert!(c.validate().is_err());
        let mut c = default_config();
        c.problem = ProblemConfig::Kdv;
        c.training = TrainingConfig::Random { count: 10, seed: 1 };
        c.algorithm = AlgorithmConfig::Ycart {
            n_max: 5,
            rule: SplitRuleConfig::Best,
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
            [problem]
            kind = "diff2"
            [training]
            kind = "grid"
            counts = [10, 10]
            [algorithm]
            kind = "plain"
            [run]
            epsilon = 1e-6
            seed = 1
            output_dir = "out"
            typo_field = 3
        "#;
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }
}
