//! Goal-conditioned MDP domain types and the model interfaces the planner
//! consumes.
//!
//! States and actions are opaque, environment-scoped indices. A [`Goal`] is an
//! (instruction, target state) pair in which at least one component is
//! present; the constructors refuse the vacuous pair, so no value of type
//! `Goal` can ever carry neither.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{ProgressLabel, ValueError, ValueTable};

/// Fully observable discrete state, dense index into an environment's
/// enumerated state set.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One primitive action of an environment.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u16);

impl ActionId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoalError {
    #[error("a goal needs an instruction or a target state")]
    Vacuous,
}

/// True iff neither component is present. Blank instructions count as absent.
pub fn goal_is_vacuous(instruction: Option<&str>, target_state: Option<StateId>) -> bool {
    let has_text = instruction.is_some_and(|t| !t.trim().is_empty());
    !has_text && target_state.is_none()
}

/// A non-vacuous goal at hierarchy level `level` (0 is the task itself).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Goal {
    instruction: Option<String>,
    target_state: Option<StateId>,
    level: u32,
}

impl Goal {
    pub fn new(
        instruction: Option<String>,
        target_state: Option<StateId>,
        level: u32,
    ) -> Result<Self, GoalError> {
        if goal_is_vacuous(instruction.as_deref(), target_state) {
            return Err(GoalError::Vacuous);
        }
        let instruction = instruction.filter(|t| !t.trim().is_empty());
        Ok(Self { instruction, target_state, level })
    }

    /// Language-only goal.
    pub fn instruction_only(text: impl Into<String>, level: u32) -> Result<Self, GoalError> {
        Self::new(Some(text.into()), None, level)
    }

    /// Observation-only goal. Always valid.
    pub fn target_only(state: StateId, level: u32) -> Self {
        Self { instruction: None, target_state: Some(state), level }
    }

    /// A refinement of `self`: one level finer.
    pub fn refine_to(
        &self,
        instruction: Option<String>,
        target_state: Option<StateId>,
    ) -> Result<Self, GoalError> {
        Self::new(instruction, target_state, self.level + 1)
    }

    pub fn instruction(&self) -> Option<&str> {
        self.instruction.as_deref()
    }

    pub fn target_state(&self) -> Option<StateId> {
        self.target_state
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Copy with the instruction dropped, unless that would leave it vacuous.
    pub fn without_instruction(&self) -> Self {
        match self.target_state {
            Some(_) => Self { instruction: None, ..self.clone() },
            None => self.clone(),
        }
    }

    /// Copy with the target state dropped, unless that would leave it vacuous.
    pub fn without_target(&self) -> Self {
        match self.instruction {
            Some(_) => Self { target_state: None, ..self.clone() },
            None => self.clone(),
        }
    }

    /// Level-independent identity, used to key value tables.
    pub fn key(&self) -> GoalKey {
        GoalKey { instruction: self.instruction.clone(), target_state: self.target_state }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[h={}] ", self.level)?;
        match (&self.instruction, self.target_state) {
            (Some(t), Some(s)) => write!(f, "{t:?} @ {s}"),
            (Some(t), None) => write!(f, "{t:?}"),
            (None, Some(s)) => write!(f, "@ {s}"),
            (None, None) => unreachable!("vacuous goal"),
        }
    }
}

/// Goal identity without the hierarchy level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GoalKey {
    pub instruction: Option<String>,
    pub target_state: Option<StateId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("unparseable instruction: {0:?}")]
    UnparseableInstruction(String),
    #[error("state {0} is not part of this environment")]
    UnknownState(StateId),
    #[error("state space exceeds the capacity limit of {limit} states")]
    Capacity { limit: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("no hierarchy below {0:?}")]
    NoDecomposition(String),
    #[error("skill {descriptor:?} is not applicable in state {state}")]
    SkillInapplicable { descriptor: String, state: StateId },
}

/// Deterministic, fully enumerated discrete environment.
///
/// States are `0..num_states()`; `step` must be total over declared states
/// and actions. Implementations are immutable after construction.
pub trait EnvironmentModel: Send + Sync {
    fn name(&self) -> &str;

    fn num_states(&self) -> usize;

    fn num_actions(&self) -> usize;

    fn action_name(&self, action: ActionId) -> String;

    fn step(&self, state: StateId, action: ActionId) -> StateId;

    fn initial_state(&self) -> StateId;

    /// The action that leaves every state unchanged.
    fn noop_action(&self) -> ActionId;

    /// Goal predicate. Target-state goals are matched on the environment's
    /// goal-relevant projection; when both components are present both must
    /// hold.
    fn satisfied(&self, state: StateId, goal: &Goal) -> Result<bool, EnvError>;

    /// `satisfied` evaluated over every state.
    fn goal_mask(&self, goal: &Goal) -> Result<Vec<bool>, EnvError> {
        (0..self.num_states())
            .map(|s| self.satisfied(StateId(s as u32), goal))
            .collect()
    }

    fn render_state(&self, state: StateId) -> String {
        state.to_string()
    }

    /// Whether the environment can be restored to its initial state mid-episode.
    fn supports_reset(&self) -> bool {
        true
    }

    fn actions(&self) -> Vec<ActionId> {
        (0..self.num_actions()).map(|a| ActionId(a as u16)).collect()
    }
}

/// Low-level goal-conditioned controller.
pub trait PolicyModel: Send + Sync {
    fn act(&self, state: StateId, goal: &Goal, rng: &mut ChaCha8Rng) -> Result<ActionId, ModelError>;
}

/// Progress classifier over (previous state, current state, goal).
pub trait ValueModel: Send + Sync {
    fn classify(&self, prev: StateId, curr: StateId, goal: &Goal) -> Result<ProgressLabel, ModelError>;

    /// Classification plus the underlying value readings, when the model has
    /// them. Used for tracing only.
    fn assess(&self, prev: StateId, curr: StateId, goal: &Goal) -> Result<Assessment, ModelError> {
        Ok(Assessment { label: self.classify(prev, curr, goal)?, v_prev: None, v_curr: None })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Assessment {
    pub label: ProgressLabel,
    pub v_prev: Option<u32>,
    pub v_curr: Option<u32>,
}

/// Subgoal generator: maps (state, active goal) to a goal one level finer.
pub trait AnticipationModel: Send + Sync {
    fn refine(&self, curr: StateId, goal: &Goal, rng: &mut ChaCha8Rng) -> Result<Goal, ModelError>;

    /// Probability the model assigns to the subgoal it returned. Oracle
    /// anticipators are deterministic and report 1.
    fn proposal_probability(&self, _curr: StateId, _goal: &Goal, _proposal: &Goal) -> f64 {
        1.0
    }
}

/// Probability of a low-level action under the composed hierarchical policy:
/// the policy's probability given the subgoal times the anticipator's
/// probability of that subgoal given the task goal.
pub fn composed_probability(policy_prob: f64, anticipation_prob: f64) -> f64 {
    policy_prob * anticipation_prob
}

/// Errors surfaced by pluggable models. The executor records these in the
/// episode trace instead of propagating them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Anticipation(#[from] crate::anticipation::AnticipationError),
    #[error("{0}")]
    Other(String),
}

/// One-step improvement toward `goal`: `V*(s) - V*(s_next)` in distance form.
pub fn reward(
    state: StateId,
    next: StateId,
    goal: &Goal,
    values: &ValueTable,
) -> Result<i64, ValueError> {
    debug_assert_eq!(values.goal().key(), goal.key());
    let here = values.require(state)?;
    let there = values.require(next)?;
    Ok(i64::from(here) - i64::from(there))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vacuous_pair_is_detected() {
        assert!(goal_is_vacuous(None, None));
        assert!(!goal_is_vacuous(Some("spell CAT"), None));
        assert!(!goal_is_vacuous(None, Some(StateId(42))));
        assert!(goal_is_vacuous(Some("   "), None));
    }

    #[test]
    fn constructor_rejects_vacuous() {
        assert_eq!(Goal::new(None, None, 0), Err(GoalError::Vacuous));
        assert_eq!(Goal::new(Some(String::new()), None, 3), Err(GoalError::Vacuous));
        let g = Goal::new(Some("x".into()), None, 0).unwrap();
        assert_eq!(g.refine_to(None, Some(StateId(1))).unwrap().level(), 1);
    }

    #[test]
    fn blanking_never_produces_a_vacuous_goal() {
        let text = Goal::instruction_only("pick", 1).unwrap();
        assert_eq!(text.without_instruction(), text);
        let both = Goal::new(Some("pick".into()), Some(StateId(3)), 2).unwrap();
        assert_eq!(both.without_instruction().instruction(), None);
        assert_eq!(both.without_target().target_state(), None);
    }

    proptest! {
        #[test]
        fn constructed_goals_are_never_vacuous(
            text in proptest::option::of("[ a-z]{0,6}"),
            target in proptest::option::of(0u32..100),
            level in 0u32..8,
        ) {
            let target = target.map(StateId);
            match Goal::new(text.clone(), target, level) {
                Ok(g) => prop_assert!(!goal_is_vacuous(g.instruction(), g.target_state())),
                Err(_) => prop_assert!(goal_is_vacuous(text.as_deref(), target)),
            }
        }
    }
}
