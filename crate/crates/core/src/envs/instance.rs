//! Instance files.
//!
//! A suite is a TOML document with `format_version = 1` and one `[[instance]]`
//! table per instance. Each table carries a `name`, a `family` tag
//! (`chain`, `blockwords` or `rearrange`) and the family's fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::blockwords::{BlockWords, BlockWordsSpec};
use super::chain::ChainEnv;
use super::rearrange::{Rearrange, RearrangeSpec};
use super::SkillLibrary;
use crate::gmdp::{EnvError, Goal};

pub const SUITE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub length: u32,
    pub start: u32,
    pub goal: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum InstanceSpec {
    Chain(ChainSpec),
    Blockwords(BlockWordsSpec),
    Rearrange(RearrangeSpec),
}

impl InstanceSpec {
    pub fn family(&self) -> &'static str {
        match self {
            InstanceSpec::Chain(_) => "chain",
            InstanceSpec::Blockwords(_) => "blockwords",
            InstanceSpec::Rearrange(_) => "rearrange",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedInstance {
    pub name: String,
    #[serde(flatten)]
    pub spec: InstanceSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suite {
    pub format_version: u32,
    #[serde(default, rename = "instance")]
    pub instances: Vec<NamedInstance>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialize: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unsupported suite format version {0}")]
    Version(u32),
    #[error("instance {name}: {source}")]
    Instance { name: String, source: EnvError },
}

impl Suite {
    pub fn new(instances: Vec<NamedInstance>) -> Self {
        Self { format_version: SUITE_FORMAT_VERSION, instances }
    }

    pub fn from_toml(text: &str) -> Result<Self, SuiteError> {
        let suite: Suite = toml::from_str(text)?;
        if suite.format_version != SUITE_FORMAT_VERSION {
            return Err(SuiteError::Version(suite.format_version));
        }
        Ok(suite)
    }

    pub fn to_toml(&self) -> Result<String, SuiteError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SuiteError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Builds every instance, failing on the first invalid one.
    pub fn build(&self, cap: usize) -> Result<Vec<Instance>, SuiteError> {
        self.instances
            .iter()
            .map(|n| {
                Instance::build(n, cap).map_err(|source| SuiteError::Instance { name: n.name.clone(), source })
            })
            .collect()
    }
}

/// A built environment together with its level-0 task goal.
pub struct Instance {
    pub name: String,
    pub spec: InstanceSpec,
    pub env: Box<dyn SkillLibrary>,
    pub task_goal: Goal,
}

impl Instance {
    pub fn build(named: &NamedInstance, cap: usize) -> Result<Self, EnvError> {
        let (env, task_goal): (Box<dyn SkillLibrary>, Goal) = match &named.spec {
            InstanceSpec::Chain(c) => {
                let env = ChainEnv::new(c.length, c.start)?;
                if c.goal >= c.length {
                    return Err(EnvError::InvalidInstance(format!("goal {} off the chain", c.goal)));
                }
                let g = env.position_goal(c.goal);
                (Box::new(env), g)
            }
            InstanceSpec::Blockwords(spec) => {
                let env = BlockWords::new(spec.clone(), cap)?;
                let g = env.task_goal();
                (Box::new(env), g)
            }
            InstanceSpec::Rearrange(spec) => {
                let env = Rearrange::new(spec.clone(), cap)?;
                let g = env.task_goal();
                (Box::new(env), g)
            }
        };
        Ok(Self { name: named.name.clone(), spec: named.spec.clone(), env, task_goal })
    }
}
