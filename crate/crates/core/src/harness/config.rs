//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! episodes_per_instance = 50
//!
//! [suite]
//! family = "blockwords"      # blockwords | rearrange | chain | file
//! word_length = 4
//! count = 10
//!
//! [executor]
//! check_interval = 2
//! max_depth = 4
//! # max_steps = 400          # absent: 4 * V*(s0, g) * max_depth per instance
//! max_backtracks = 3
//!
//! [policy]
//! competence_radius = 3
//! slip_probability = 0.0
//!
//! [anticipation]
//! kind = "oracle"            # oracle | two_stage
//! max_regenerations = 3
//! split_fraction = 0.5
//! hallucination_rate = 0.0
//!
//! [ablation]
//! no_target_state = false
//! no_descriptor = false
//! no_recursive = false
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::anticipation::AnticipationConfig;
use crate::envs::generate;
use crate::envs::instance::{Suite, SuiteError};
use crate::policy::FaultPolicyConfig;
use crate::value::ProgressThresholds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum SuiteSource {
    Blockwords { word_length: usize, count: usize },
    Rearrange { objects: usize, plates: usize, count: usize },
    Chain { length: u32, count: usize },
    File { path: PathBuf },
}

impl SuiteSource {
    /// Generates or loads the suite. Generated suites are seeded by `seed`.
    pub fn load(&self, seed: u64) -> Result<Suite, SuiteError> {
        Ok(match self {
            SuiteSource::Blockwords { word_length, count } => generate::blockwords_suite(*word_length, *count, seed),
            SuiteSource::Rearrange { objects, plates, count } => {
                generate::rearrange_suite(*objects, *plates, *count, seed)
            }
            SuiteSource::Chain { length, count } => generate::chain_suite(*length, *count, seed),
            SuiteSource::File { path } => Suite::load(path)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorSettings {
    pub check_interval: u32,
    pub max_depth: u32,
    /// Per-episode step budget. Absent: `4 * V*(s0, g) * max_depth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(default = "default_backtracks")]
    pub max_backtracks: u32,
    #[serde(default)]
    pub thresholds: ProgressThresholds,
}

fn default_backtracks() -> u32 {
    3
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnticipatorKind {
    #[default]
    Oracle,
    TwoStage,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnticipationSettings {
    #[serde(default)]
    pub kind: AnticipatorKind,
    #[serde(flatten)]
    pub config: AnticipationConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablation {
    /// Refined goals reach the policy without their target state.
    #[serde(default)]
    pub no_target_state: bool,
    /// Refined goals reach the policy without their descriptor.
    #[serde(default)]
    pub no_descriptor: bool,
    /// A fixed plan of atomic subgoals from the initial state replaces
    /// recursive refinement.
    #[serde(default)]
    pub no_recursive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub episodes_per_instance: u64,
    pub suite: SuiteSource,
    pub executor: ExecutorSettings,
    #[serde(default)]
    pub policy: FaultPolicyConfig,
    #[serde(default)]
    pub anticipation: AnticipationSettings,
    #[serde(default)]
    pub ablation: Ablation,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Rejects conflicting settings before any episode runs.
    pub fn validate(&self) -> Result<(), String> {
        if self.episodes_per_instance == 0 {
            return Err("episodes_per_instance must be positive".into());
        }
        if self.executor.check_interval == 0 {
            return Err("check_interval must be at least 1".into());
        }
        if self.executor.max_depth == 0 {
            return Err("max_depth must be at least 1".into());
        }
        if self.policy.competence_radius == Some(0) {
            return Err("competence_radius must be at least 1".into());
        }
        self.policy.validate()?;
        if self.ablation.no_recursive && self.executor.max_depth < 2 {
            return Err("no_recursive needs max_depth >= 2 to hold the fixed plan's subgoals".into());
        }
        if self.ablation.no_recursive && self.anticipation.kind != AnticipatorKind::Oracle {
            return Err("no_recursive replaces the anticipator; set kind = \"oracle\"".into());
        }
        Ok(())
    }

    /// Stack depth actually used: the fixed plan only ever holds one subgoal
    /// above the task.
    pub fn effective_depth(&self) -> u32 {
        if self.ablation.no_recursive {
            2
        } else {
            self.executor.max_depth
        }
    }
}

/// The full system and its single-change variants.
pub fn ablation_variants(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let mut full = base.clone();
    full.ablation = Ablation::default();
    let with = |f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = full.clone();
        f(&mut c);
        c
    };
    vec![
        ("full".to_string(), full.clone()),
        ("no_target_state".to_string(), with(&|c| c.ablation.no_target_state = true)),
        ("no_descriptor".to_string(), with(&|c| c.ablation.no_descriptor = true)),
        (
            "no_recursive".to_string(),
            with(&|c| {
                c.ablation.no_recursive = true;
                c.anticipation.kind = AnticipatorKind::Oracle;
            }),
        ),
        ("flat".to_string(), with(&|c| c.executor.max_depth = 1)),
    ]
}
