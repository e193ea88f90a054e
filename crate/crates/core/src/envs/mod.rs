//! Discrete benchmark environments with scripted skills and a natural subgoal
//! hierarchy.
//!
//! Every environment enumerates its reachable state set up front and answers
//! `step` from a transition table. Skills are deterministic action macros
//! named by descriptors from a closed per-environment grammar; for any ordered
//! state pair at most one skill connects them, which is what makes the
//! inverse-dynamics oracle exact.
//!
//! Descriptor grammars (placeholders in angle brackets):
//!
//! * chain: `reach position <k>`, `move to position <k>`.
//! * blockwords: `spell the word: <WORD> using the blocks on the table`,
//!   `place the block with letter <X> on the table`,
//!   `place the block with letter <X> to the right of the previous block`,
//!   `pick up the block with letter: <X>`, `place the block on the table`,
//!   `place the current block to the right of the previous block`,
//!   `put the block with letter <X> back`,
//!   `move the gripper to row <r> column <c>`; conditions
//!   `letter <X> in slot <k>` and `holding the block with letter <X>`.
//! * rearrange: `pick up the <object> and place it in <plate>`,
//!   `pick up <object> in <plate>`, `place it in <plate>`,
//!   `move the gripper to <plate>`, `rearrange the objects`; conditions
//!   `the <object> is in <plate>` and `holding the <object>`. Plates are named
//!   `<color> <shape> plate`.

pub mod blockwords;
pub mod chain;
pub mod generate;
pub mod instance;
pub mod rearrange;

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::anticipation::SubgoalDescriptor;
use crate::gmdp::{ActionId, EnvError, EnvironmentModel, Goal, StateId};

pub use instance::{Instance, InstanceSpec};

/// Default cap on enumerated states per instance.
pub const DEFAULT_STATE_CAP: usize = 200_000;

/// One step down the hierarchy: the subgoal's descriptor and the condition
/// that marks it complete.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Boundary {
    pub descriptor: SubgoalDescriptor,
    pub condition: Goal,
}

/// Scripted skills and task structure on top of an environment.
pub trait SkillLibrary: EnvironmentModel {
    /// Descriptors of every skill applicable in `state`, in a fixed order.
    fn applicable_skills(&self, state: StateId) -> Vec<SubgoalDescriptor>;

    /// Executes the skill's macro from `state`.
    fn run_skill(
        &self,
        state: StateId,
        descriptor: &SubgoalDescriptor,
    ) -> Result<Vec<(ActionId, StateId)>, EnvError>;

    fn skill_outcome(&self, state: StateId, descriptor: &SubgoalDescriptor) -> Result<StateId, EnvError> {
        Ok(self.run_skill(state, descriptor)?.last().map_or(state, |&(_, s)| s))
    }

    /// Canonical subgoal sequence one level below `goal`, evaluated from
    /// `state` (source locations of pick skills depend on it).
    fn hierarchy_boundaries(&self, state: StateId, goal: &Goal) -> Result<Vec<Boundary>, EnvError>;

    /// The descriptor a hallucinating grounding model would execute instead
    /// of `descriptor`. Defaults to a random other applicable skill with a
    /// different outcome.
    fn corrupt_descriptor(
        &self,
        state: StateId,
        descriptor: &SubgoalDescriptor,
        rng: &mut ChaCha8Rng,
    ) -> Option<SubgoalDescriptor> {
        let honest = self.skill_outcome(state, descriptor).ok();
        let others: Vec<SubgoalDescriptor> = self
            .applicable_skills(state)
            .into_iter()
            .filter(|d| !d.equivalent(descriptor))
            .filter(|d| self.skill_outcome(state, d).ok() != honest)
            .collect();
        others.choose(rng).cloned()
    }

    /// Length of the longest atomic skill macro over all states; a policy
    /// with at least this competence radius can run every atomic subgoal.
    fn longest_atomic_skill(&self) -> usize;

    /// Completion conditions of the level-1 stages of a task goal. A task
    /// without a hierarchy has no stages.
    fn stage_conditions(&self, goal: &Goal) -> Result<Vec<Goal>, EnvError> {
        match self.hierarchy_boundaries(self.initial_state(), goal) {
            Ok(b) => Ok(b.into_iter().map(|b| b.condition).collect()),
            Err(EnvError::NoDecomposition(_)) => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    }
}

/// Breadth-first enumeration of every configuration reachable from `initial`.
pub(crate) struct Enumerated<C> {
    pub states: Vec<C>,
    pub index: HashMap<C, StateId>,
    pub next: Vec<StateId>,
    pub num_actions: usize,
}

impl<C: Clone + Eq + Hash> Enumerated<C> {
    pub fn build(
        initial: C,
        num_actions: usize,
        cap: usize,
        mut apply: impl FnMut(&C, usize) -> C,
    ) -> Result<Self, EnvError> {
        let mut states = vec![initial.clone()];
        let mut index = HashMap::from([(initial, StateId(0))]);
        let mut next = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for a in 0..num_actions {
                let succ = apply(&states[i], a);
                let id = match index.get(&succ) {
                    Some(&id) => id,
                    None => {
                        if states.len() >= cap {
                            return Err(EnvError::Capacity { limit: cap });
                        }
                        let id = StateId(states.len() as u32);
                        states.push(succ.clone());
                        index.insert(succ, id);
                        queue.push_back(id.index());
                        id
                    }
                };
                // States are discovered in BFS order, so row i is filled in order.
                debug_assert_eq!(next.len(), i * num_actions + a);
                next.push(id);
            }
        }
        Ok(Self { states, index, next, num_actions })
    }

    pub fn step(&self, s: StateId, a: ActionId) -> StateId {
        self.next[s.index() * self.num_actions + a.index()]
    }

    pub fn get(&self, s: StateId) -> Option<&C> {
        self.states.get(s.index())
    }

    pub fn id(&self, c: &C) -> Option<StateId> {
        self.index.get(c).copied()
    }
}

/// Grid moves toward `target`, lexicographically least (up, down, left,
/// right) among shortest routes.
pub(crate) fn grid_route(from: (u8, u8), to: (u8, u8)) -> Vec<usize> {
    let (mut r, mut c) = from;
    let mut moves = Vec::new();
    while (r, c) != to {
        if to.0 < r {
            r -= 1;
            moves.push(0);
        } else if to.0 > r {
            r += 1;
            moves.push(1);
        } else if to.1 < c {
            c -= 1;
            moves.push(2);
        } else {
            c += 1;
            moves.push(3);
        }
    }
    moves
}

/// Applies an action macro, recording each visited state.
pub(crate) fn replay(
    env: &dyn EnvironmentModel,
    mut state: StateId,
    actions: impl IntoIterator<Item = ActionId>,
) -> Vec<(ActionId, StateId)> {
    actions
        .into_iter()
        .map(|a| {
            state = env.step(state, a);
            (a, state)
        })
        .collect()
}
