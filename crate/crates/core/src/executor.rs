//! Goal-stack executor.
//!
//! The policy acts on the goal at the top of the stack. Every `K` steps the
//! value model compares the state at the previous check with the current
//! one, and the stack changes at most once per check:
//!
//! * achieved: pop the goal;
//! * no progress below the depth limit: push a refinement;
//! * no progress at the depth limit: reset the environment and restart from
//!   the task goal, while backtracks remain;
//! * otherwise nothing changes and the episode goes on.
//!
//! An episode succeeds when the stack empties or the task goal holds when it
//! ends. It fails when the step budget runs out or a model errors.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anticipation::AnticipationError;
use crate::envs::SkillLibrary;
use crate::gmdp::{ActionId, AnticipationModel, EnvironmentModel, Goal, ModelError, PolicyModel, StateId, ValueModel};
use crate::value::{ProgressLabel, ProgressThresholds};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorConfig {
    /// Steps between value checks.
    pub check_interval: u32,
    #[serde(default)]
    pub thresholds: ProgressThresholds,
    /// Largest stack depth, counting the task goal.
    pub max_depth: u32,
    pub max_steps: u64,
    #[serde(default = "default_backtracks")]
    pub max_backtracks: u32,
}

fn default_backtracks() -> u32 {
    3
}

impl ExecutorConfig {
    pub fn new(check_interval: u32, max_depth: u32, max_steps: u64) -> Result<Self, String> {
        let c = Self {
            check_interval,
            thresholds: ProgressThresholds::default(),
            max_depth,
            max_steps,
            max_backtracks: default_backtracks(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.check_interval == 0 {
            return Err("check_interval must be at least 1".into());
        }
        if self.max_depth == 0 {
            return Err("max_depth must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Act,
    Pop,
    Push,
    Backtrack,
    CheckNoChange,
}

/// Instance index within a suite and episode index within the instance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EpisodeId {
    pub instance: u32,
    pub episode: u64,
}

/// One trace line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEvent {
    pub instance: u32,
    pub episode: u64,
    pub step: u64,
    pub kind: EventKind,
    /// Goal the event refers to: the acted-on goal, the popped or pushed goal,
    /// or the goal that was checked.
    pub goal_level: u32,
    pub goal_text: Option<String>,
    pub goal_target: Option<StateId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action: Option<ActionId>,
    pub v_prev: Option<u32>,
    pub v_curr: Option<u32>,
    pub label: Option<ProgressLabel>,
    pub state: StateId,
    /// Stack depth after the event.
    pub depth: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub instance: u32,
    pub episode: u64,
    pub success: bool,
    pub steps_used: u64,
    pub final_state: StateId,
    pub stack_depth_max: usize,
    pub backtrack_count: u32,
    pub pushes: u32,
    pub pops: u32,
    pub checks: u32,
    pub stage_completions: Vec<bool>,
    pub error: Option<String>,
    #[serde(skip)]
    pub events: Vec<EpisodeEvent>,
}

/// Goal masks of the task's stages, for staged completion scores.
#[derive(Clone, Debug, Default)]
pub struct StageTracker {
    masks: Vec<Vec<bool>>,
}

impl StageTracker {
    pub fn new(env: &dyn SkillLibrary, task: &Goal) -> Result<Self, ModelError> {
        let masks = env
            .stage_conditions(task)?
            .iter()
            .map(|g| env.goal_mask(g))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { masks })
    }

    pub fn from_masks(masks: Vec<Vec<bool>>) -> Self {
        Self { masks }
    }

    pub fn num_stages(&self) -> usize {
        self.masks.len()
    }

    /// Number of leading stages that hold together in `state`.
    pub fn prefix(&self, state: StateId) -> usize {
        self.masks.iter().take_while(|m| m.get(state.index()).copied().unwrap_or(false)).count()
    }
}

pub struct Executor<'a> {
    pub env: &'a dyn EnvironmentModel,
    pub policy: &'a dyn PolicyModel,
    pub value: &'a dyn ValueModel,
    pub anticipation: &'a dyn AnticipationModel,
    pub config: ExecutorConfig,
}

struct Trace {
    id: EpisodeId,
    events: Vec<EpisodeEvent>,
}

impl Trace {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        step: u64,
        kind: EventKind,
        goal: &Goal,
        state: StateId,
        depth: usize,
        reading: Option<crate::gmdp::Assessment>,
        action: Option<ActionId>,
        note: Option<String>,
    ) {
        self.events.push(EpisodeEvent {
            instance: self.id.instance,
            episode: self.id.episode,
            step,
            kind,
            goal_level: goal.level(),
            goal_text: goal.instruction().map(str::to_string),
            goal_target: goal.target_state(),
            action,
            v_prev: reading.and_then(|r| r.v_prev),
            v_curr: reading.and_then(|r| r.v_curr),
            label: reading.map(|r| r.label),
            state,
            depth,
            note,
        });
    }
}

impl Executor<'_> {
    pub fn run(&self, task: &Goal, id: EpisodeId, stages: &StageTracker, rng: &mut ChaCha8Rng) -> EpisodeResult {
        let cfg = &self.config;
        let s0 = self.env.initial_state();
        let mut stack = vec![task.clone()];
        let mut s = s0;
        let mut s_prev = s0;
        let mut t = 0u64;
        let mut trace = Trace { id, events: Vec::new() };
        let mut result = EpisodeResult {
            instance: id.instance,
            episode: id.episode,
            success: false,
            steps_used: 0,
            final_state: s0,
            stack_depth_max: 1,
            backtrack_count: 0,
            pushes: 0,
            pops: 0,
            checks: 0,
            stage_completions: Vec::new(),
            error: None,
            events: Vec::new(),
        };
        let mut best_stage = stages.prefix(s0);

        let outcome: Result<(), ModelError> = (|| {
            while let Some(goal) = stack.last().cloned() {
                if t >= cfg.max_steps {
                    break;
                }
                let a = self.policy.act(s, &goal, rng)?;
                s = self.env.step(s, a);
                t += 1;
                best_stage = best_stage.max(stages.prefix(s));
                trace.push(t, EventKind::Act, &goal, s, stack.len(), None, Some(a), None);
                if !t.is_multiple_of(u64::from(cfg.check_interval)) {
                    continue;
                }
                result.checks += 1;
                let reading = self.value.assess(s_prev, s, &goal)?;
                let depth = stack.len();
                match reading.label {
                    ProgressLabel::Achieved => {
                        stack.pop();
                        result.pops += 1;
                        trace.push(t, EventKind::Pop, &goal, s, stack.len(), Some(reading), None, None);
                    }
                    ProgressLabel::NoProgress if (depth as u32) < cfg.max_depth => {
                        match self.anticipation.refine(s, &goal, rng) {
                            Ok(sub) => {
                                stack.push(sub.clone());
                                result.pushes += 1;
                                result.stack_depth_max = result.stack_depth_max.max(stack.len());
                                trace.push(t, EventKind::Push, &sub, s, stack.len(), Some(reading), None, None);
                            }
                            Err(ModelError::Anticipation(e @ AnticipationError::VerificationExhausted { .. })) => {
                                let note = Some(e.to_string());
                                trace.push(t, EventKind::CheckNoChange, &goal, s, depth, Some(reading), None, note);
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    ProgressLabel::NoProgress
                        if result.backtrack_count < cfg.max_backtracks && self.env.supports_reset() =>
                    {
                        stack.clear();
                        stack.push(task.clone());
                        s = s0;
                        result.backtrack_count += 1;
                        trace.push(t, EventKind::Backtrack, task, s, stack.len(), Some(reading), None, None);
                    }
                    _ => {
                        trace.push(t, EventKind::CheckNoChange, &goal, s, depth, Some(reading), None, None);
                    }
                }
                s_prev = s;
            }
            Ok(())
        })();

        if let Err(e) = outcome {
            result.error = Some(e.to_string());
        }
        result.success = result.error.is_none()
            && (stack.is_empty() || self.env.satisfied(s, task).unwrap_or(false));
        result.steps_used = t;
        result.final_state = s;
        result.stage_completions = (0..stages.num_stages()).map(|i| i < best_stage).collect();
        result.events = trace.events;
        result
    }
}

/// Checks the structural invariants of one episode trace. Returns the first
/// violation found.
pub fn check_trace(events: &[EpisodeEvent], cfg: &ExecutorConfig) -> Result<(), String> {
    let mut depth = 1usize;
    let mut backtracks = 0u32;
    let mut last_check_step = None;
    let mut levels = vec![0u32];
    let mut acts = 0u64;
    for (i, e) in events.iter().enumerate() {
        let fail = |m: &str| Err(format!("event {i} (step {}): {m}", e.step));
        if e.depth as u32 > cfg.max_depth {
            return fail("depth exceeds the limit");
        }
        // Acts count from 1; a check carries the step of the act before it.
        if e.kind == EventKind::Act {
            acts += 1;
        }
        if e.step != acts {
            return fail("step number does not match the acts so far");
        }
        match e.kind {
            EventKind::Act => {
                if e.depth != depth {
                    return fail("act changed the stack");
                }
                if e.goal_level != *levels.last().unwrap_or(&0) {
                    return fail("acted on a goal other than the top of the stack");
                }
                continue;
            }
            _ => {
                if e.step % u64::from(cfg.check_interval) != 0 {
                    return fail("check off the check interval");
                }
                if last_check_step == Some(e.step) {
                    return fail("two stack transitions in one check");
                }
                last_check_step = Some(e.step);
            }
        }
        match e.kind {
            EventKind::Pop => {
                if e.label != Some(ProgressLabel::Achieved) || e.depth + 1 != depth {
                    return fail("pop without achievement");
                }
                levels.pop();
            }
            EventKind::Push => {
                if e.label != Some(ProgressLabel::NoProgress) || e.depth != depth + 1 {
                    return fail("push without a stall");
                }
                if e.goal_level != levels.last().copied().unwrap_or(0) + 1 {
                    return fail("pushed goal is not one level finer");
                }
                levels.push(e.goal_level);
            }
            EventKind::Backtrack => {
                if e.label != Some(ProgressLabel::NoProgress) || depth as u32 != cfg.max_depth {
                    return fail("backtrack below the depth limit");
                }
                backtracks += 1;
                if backtracks > cfg.max_backtracks || e.depth != 1 {
                    return fail("backtrack budget or reset violated");
                }
                levels = vec![0];
            }
            EventKind::CheckNoChange => {
                if e.depth != depth {
                    return fail("no-change check changed the stack");
                }
            }
            EventKind::Act => unreachable!(),
        }
        depth = e.depth;
        if depth == 0 && i + 1 != events.len() {
            return fail("events after the stack emptied");
        }
    }
    if acts > cfg.max_steps {
        return Err("step budget exceeded".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anticipation::{AnticipationConfig, OracleAnticipator};
    use crate::envs::chain::ChainEnv;
    use crate::policy::{FaultPolicyConfig, InertPolicy, OraclePolicy};
    use crate::value::{OracleValueModel, ValueOracle};
    use rand::SeedableRng;

    fn run_chain(policy: &dyn PolicyModel, depth: u32, steps: u64) -> EpisodeResult {
        let env = ChainEnv::new(21, 20).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let value = OracleValueModel::new(&oracle, ProgressThresholds::default());
        let ant = OracleAnticipator::new(&env, &oracle, AnticipationConfig::default());
        let exec = Executor {
            env: &env,
            policy,
            value: &value,
            anticipation: &ant,
            config: ExecutorConfig::new(1, depth, steps).unwrap(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        exec.run(&env.position_goal(0), EpisodeId::default(), &StageTracker::default(), &mut rng)
    }

    #[test]
    fn unbounded_policy_needs_no_refinement() {
        let env = ChainEnv::new(21, 20).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let policy = OraclePolicy::new(&oracle, FaultPolicyConfig::default());
        let r = run_chain(&policy, 3, 100);
        assert!(r.success);
        assert_eq!(r.steps_used, 20);
        assert_eq!(r.pushes, 0);
        assert_eq!(r.pops, 1);
    }

    #[test]
    fn short_radius_policy_succeeds_through_refinement() {
        let env = ChainEnv::new(21, 20).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let policy = OraclePolicy::new(&oracle, FaultPolicyConfig { competence_radius: Some(5), ..Default::default() });
        let r = run_chain(&policy, 3, 200);
        assert!(r.success, "{r:?}");
        assert!(r.pushes >= 1);
        check_trace(&r.events, &ExecutorConfig::new(1, 3, 200).unwrap()).unwrap();
    }

    #[test]
    fn inert_policy_backtracks_three_times_then_fails() {
        let r = run_chain(&InertPolicy::new(ActionId(2)), 3, 60);
        assert!(!r.success);
        assert_eq!(r.backtrack_count, 3);
        assert_eq!(r.steps_used, 60);
        check_trace(&r.events, &ExecutorConfig::new(1, 3, 60).unwrap()).unwrap();
    }
}
