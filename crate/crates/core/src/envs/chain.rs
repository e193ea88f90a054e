//! Line world `0..len`. Used for the smallest oracle checks and for the
//! always-stall configuration in executor tests.
//!
//! Grammar: `reach position <k>` (goal), `move to position <k>` (skill, also
//! a goal). Target-state goals match the position exactly.

use crate::anticipation::{normalize_descriptor, SubgoalDescriptor};
use crate::envs::{Boundary, SkillLibrary};
use crate::gmdp::{ActionId, EnvError, EnvironmentModel, Goal, StateId};

const LEFT: ActionId = ActionId(0);
const RIGHT: ActionId = ActionId(1);
const WAIT: ActionId = ActionId(2);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainEnv {
    len: u32,
    start: u32,
}

impl ChainEnv {
    pub fn new(len: u32, start: u32) -> Result<Self, EnvError> {
        if len == 0 || start >= len {
            return Err(EnvError::InvalidInstance(format!("chain of length {len} cannot start at {start}")));
        }
        Ok(Self { len, start })
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn position_goal(&self, k: u32) -> Goal {
        Goal::instruction_only(format!("reach position <{k}>"), 0).expect("non-empty")
    }

    fn parse_position(&self, text: &str) -> Result<u32, EnvError> {
        let norm = normalize_descriptor(text);
        let rest = norm
            .strip_prefix("reach position <")
            .or_else(|| norm.strip_prefix("move to position <"))
            .and_then(|r| r.strip_suffix('>'))
            .ok_or_else(|| EnvError::UnparseableInstruction(text.to_string()))?;
        rest.parse().map_err(|_| EnvError::UnparseableInstruction(text.to_string()))
    }

    fn predicate(&self, goal: &Goal) -> Result<impl Fn(StateId) -> bool, EnvError> {
        let pos = goal.instruction().map(|t| self.parse_position(t)).transpose()?;
        let target = goal.target_state();
        Ok(move |s: StateId| pos.is_none_or(|p| s.0 == p) && target.is_none_or(|t| s == t))
    }
}

impl EnvironmentModel for ChainEnv {
    fn name(&self) -> &str {
        "chain"
    }

    fn num_states(&self) -> usize {
        self.len as usize
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn action_name(&self, action: ActionId) -> String {
        match action {
            LEFT => "left",
            RIGHT => "right",
            _ => "wait",
        }
        .to_string()
    }

    fn step(&self, state: StateId, action: ActionId) -> StateId {
        match action {
            LEFT if state.0 > 0 => StateId(state.0 - 1),
            RIGHT if state.0 + 1 < self.len => StateId(state.0 + 1),
            _ => state,
        }
    }

    fn initial_state(&self) -> StateId {
        StateId(self.start)
    }

    fn noop_action(&self) -> ActionId {
        WAIT
    }

    fn satisfied(&self, state: StateId, goal: &Goal) -> Result<bool, EnvError> {
        if state.0 >= self.len {
            return Err(EnvError::UnknownState(state));
        }
        Ok(self.predicate(goal)?(state))
    }

    fn goal_mask(&self, goal: &Goal) -> Result<Vec<bool>, EnvError> {
        let p = self.predicate(goal)?;
        Ok((0..self.len).map(|s| p(StateId(s))).collect())
    }

    fn render_state(&self, state: StateId) -> String {
        format!("position {}", state.0)
    }
}

impl SkillLibrary for ChainEnv {
    fn applicable_skills(&self, state: StateId) -> Vec<SubgoalDescriptor> {
        (0..self.len)
            .filter(|&k| k != state.0)
            .map(|k| SubgoalDescriptor::new(format!("move to position <{k}>")))
            .collect()
    }

    fn run_skill(
        &self,
        state: StateId,
        descriptor: &SubgoalDescriptor,
    ) -> Result<Vec<(ActionId, StateId)>, EnvError> {
        let target = self.parse_position(descriptor.text())?;
        if target >= self.len || target == state.0 {
            return Err(EnvError::SkillInapplicable { descriptor: descriptor.text().into(), state });
        }
        let action = if target < state.0 { LEFT } else { RIGHT };
        let mut s = state;
        let mut out = Vec::new();
        while s.0 != target {
            s = self.step(s, action);
            out.push((action, s));
        }
        Ok(out)
    }

    fn longest_atomic_skill(&self) -> usize {
        self.len as usize - 1
    }

    fn hierarchy_boundaries(&self, _state: StateId, goal: &Goal) -> Result<Vec<Boundary>, EnvError> {
        Err(EnvError::NoDecomposition(goal.to_string()))
    }
}
