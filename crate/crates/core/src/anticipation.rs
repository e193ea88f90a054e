//! Subgoal anticipation: refine the active goal into a nearer one.
//!
//! The oracle anticipator reads the task hierarchy against the optimal path
//! and only proposes subgoals that lie on it, checked with
//! `V(s, g) = V(s, g') + V(s_g', g)`. The two-stage anticipator wraps it with a
//! grounding stage that may hallucinate and a self-discriminative check that
//! rejects any grounded state whose inverse-dynamics description disagrees
//! with the proposed descriptor.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::SkillLibrary;
use crate::gmdp::{AnticipationModel, EnvError, Goal, GoalError, ModelError, StateId};
use crate::value::{optimal_path, ValueError, ValueOracle};

/// Natural-language subgoal descriptor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubgoalDescriptor {
    text: String,
}

impl SubgoalDescriptor {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Equality after [`normalize_descriptor`].
    pub fn equivalent(&self, other: &SubgoalDescriptor) -> bool {
        normalize_descriptor(&self.text) == normalize_descriptor(&other.text)
    }
}

impl std::fmt::Display for SubgoalDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

/// Canonical form used for descriptor comparison and grammar lookup:
/// lowercase, single spaces, no trailing period, no colon before a
/// placeholder and no spaces inside angle brackets.
pub fn normalize_descriptor(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let trimmed = collapsed.trim_end_matches('.').trim_end();
    let mut out = String::with_capacity(trimmed.len());
    let mut depth = 0usize;
    for ch in trimmed.chars() {
        match ch {
            '<' => {
                if out.ends_with(": ") {
                    out.truncate(out.len() - 2);
                    out.push(' ');
                } else if out.ends_with(':') {
                    out.pop();
                }
                depth += 1;
                out.push(ch);
            }
            '>' => {
                depth = depth.saturating_sub(1);
                out.push(ch);
            }
            ' ' if depth > 0 => {}
            _ => out.push(ch),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnticipationError {
    #[error("goal already achieved in the current state")]
    AlreadyAchieved,
    #[error("no verified subgoal on the optimal path")]
    NoBoundary,
    #[error("grounding failed: {0}")]
    GroundingFailure(String),
    #[error("no grounded subgoal passed verification after {attempts} attempts")]
    VerificationExhausted { attempts: u32 },
    #[error("no skill connects the two states")]
    NoSkill,
    #[error("{0} skills connect the two states")]
    Ambiguous(usize),
    #[error("invalid goal: {0}")]
    Goal(#[from] GoalError),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct AnticipationConfig {
    max_regenerations: u32,
    split_fraction: f64,
    hallucination_rate: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_regenerations")]
    max_regenerations: u32,
    #[serde(default = "default_split")]
    split_fraction: f64,
    #[serde(default)]
    hallucination_rate: f64,
}

fn default_regenerations() -> u32 {
    3
}

fn default_split() -> f64 {
    0.5
}

impl TryFrom<RawConfig> for AnticipationConfig {
    type Error = String;

    fn try_from(r: RawConfig) -> Result<Self, String> {
        Self::new(r.max_regenerations, r.split_fraction, r.hallucination_rate)
    }
}

impl From<AnticipationConfig> for RawConfig {
    fn from(c: AnticipationConfig) -> Self {
        Self {
            max_regenerations: c.max_regenerations,
            split_fraction: c.split_fraction,
            hallucination_rate: c.hallucination_rate,
        }
    }
}

impl Default for AnticipationConfig {
    fn default() -> Self {
        Self { max_regenerations: default_regenerations(), split_fraction: default_split(), hallucination_rate: 0.0 }
    }
}

impl AnticipationConfig {
    pub fn new(max_regenerations: u32, split_fraction: f64, hallucination_rate: f64) -> Result<Self, String> {
        if max_regenerations == 0 {
            return Err("max_regenerations must be at least 1".into());
        }
        if !(split_fraction > 0.0 && split_fraction < 1.0) {
            return Err(format!("split_fraction {split_fraction} outside (0, 1)"));
        }
        if !(0.0..=1.0).contains(&hallucination_rate) {
            return Err(format!("hallucination_rate {hallucination_rate} outside [0, 1]"));
        }
        Ok(Self { max_regenerations, split_fraction, hallucination_rate })
    }

    pub fn max_regenerations(&self) -> u32 {
        self.max_regenerations
    }

    pub fn split_fraction(&self) -> f64 {
        self.split_fraction
    }

    pub fn hallucination_rate(&self) -> f64 {
        self.hallucination_rate
    }
}

/// Inverse dynamics: the unique skill that takes `from` to `to`.
pub fn describe_transition<E: SkillLibrary + ?Sized>(
    env: &E,
    from: StateId,
    to: StateId,
) -> Result<SubgoalDescriptor, AnticipationError> {
    if from == to {
        return Err(AnticipationError::NoSkill);
    }
    let mut hits: Vec<SubgoalDescriptor> = env
        .applicable_skills(from)
        .into_iter()
        .filter(|d| env.skill_outcome(from, d).is_ok_and(|s| s == to))
        .collect();
    match hits.len() {
        0 => Err(AnticipationError::NoSkill),
        1 => Ok(hits.remove(0)),
        n => Err(AnticipationError::Ambiguous(n)),
    }
}

/// Accepts a grounded state only when inverse dynamics reproduces the
/// proposed descriptor.
pub fn self_discriminative_check<E: SkillLibrary + ?Sized>(
    env: &E,
    curr: StateId,
    grounded: StateId,
    descriptor: &SubgoalDescriptor,
) -> bool {
    describe_transition(env, curr, grounded).is_ok_and(|d| d.equivalent(descriptor))
}

/// A verified refinement: descriptor, grounded target and its distance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proposal {
    pub descriptor: SubgoalDescriptor,
    pub target: StateId,
    pub steps: u32,
    pub goal: Goal,
}

/// Waypoint indices to try, coarsest first: hierarchy boundaries from the top
/// down, then fractional splits of the remaining distance.
fn candidate_indices<E: SkillLibrary + ?Sized>(
    env: &E,
    curr: StateId,
    goal: &Goal,
    path: &[StateId],
    split: f64,
) -> Vec<usize> {
    let v = path.len() - 1;
    let mut out = Vec::new();
    let mut parent = goal.clone();
    // Bounded by the hierarchy depth; the guard only protects against cyclic
    // grammars.
    for _ in 0..16 {
        let Ok(boundaries) = env.hierarchy_boundaries(curr, &parent) else {
            break;
        };
        let Some(b) = boundaries.into_iter().find(|b| !env.satisfied(curr, &b.condition).unwrap_or(true)) else {
            break;
        };
        if let Some(k) = (1..=v).find(|&k| env.satisfied(path[k], &b.condition).unwrap_or(false)) {
            out.push(k);
        }
        match Goal::instruction_only(b.descriptor.text(), parent.level() + 1) {
            Ok(g) => parent = g,
            Err(_) => break,
        }
    }
    let first = ((split * v as f64).floor() as usize).max(1);
    out.extend((1..=first).rev());
    let mut seen = std::collections::HashSet::new();
    out.retain(|&k| k >= 1 && k <= v && !(k == v && v >= 2) && seen.insert(k));
    out
}

/// Deterministic refinement against exact values.
pub fn oracle_refine<E: SkillLibrary + ?Sized>(
    env: &E,
    oracle: &ValueOracle<'_>,
    curr: StateId,
    goal: &Goal,
    cfg: &AnticipationConfig,
) -> Result<Proposal, AnticipationError> {
    let values = oracle.table(goal)?;
    let v = values.require(curr)?;
    if v == 0 {
        return Err(AnticipationError::AlreadyAchieved);
    }
    let path = optimal_path(oracle.env(), &values, curr).ok_or(ValueError::UnknownState(curr))?;
    for k in candidate_indices(env, curr, goal, &path, cfg.split_fraction) {
        let Ok(descriptor) = describe_transition(env, curr, path[k]) else {
            continue;
        };
        let sub = goal.refine_to(Some(descriptor.text().to_string()), Some(path[k]))?;
        let sub_values = oracle.compute(&sub)?;
        if sub_values.get(curr) == Some(k as u32) && values.get(path[k]) == Some(v - k as u32) {
            return Ok(Proposal { descriptor, target: path[k], steps: k as u32, goal: sub });
        }
    }
    Err(AnticipationError::NoBoundary)
}

/// Outcome of one grounding attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grounding {
    pub executed: SubgoalDescriptor,
    pub state: StateId,
    pub corrupted: bool,
}

/// Grounds `descriptor` from `curr`. With probability `hallucination_rate`
/// the grounding stage executes a corrupted descriptor instead.
pub fn ground<E: SkillLibrary + ?Sized>(
    env: &E,
    curr: StateId,
    descriptor: &SubgoalDescriptor,
    hallucination_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Grounding, AnticipationError> {
    let draw: f64 = rng.gen();
    if draw < hallucination_rate {
        if let Some(bad) = env.corrupt_descriptor(curr, descriptor, rng) {
            let state = env.skill_outcome(curr, &bad).map_err(|e| AnticipationError::GroundingFailure(e.to_string()))?;
            return Ok(Grounding { executed: bad, state, corrupted: true });
        }
    }
    let state = env
        .skill_outcome(curr, descriptor)
        .map_err(|e| AnticipationError::GroundingFailure(e.to_string()))?;
    Ok(Grounding { executed: descriptor.clone(), state, corrupted: false })
}

/// Descriptor proposal followed by grounding and self-discriminative
/// verification, regenerating up to `max_regenerations` times.
pub fn two_stage_refine<E: SkillLibrary + ?Sized>(
    env: &E,
    oracle: &ValueOracle<'_>,
    curr: StateId,
    goal: &Goal,
    cfg: &AnticipationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Proposal, AnticipationError> {
    let proposal = oracle_refine(env, oracle, curr, goal, cfg)?;
    for _ in 0..cfg.max_regenerations {
        let g = ground(env, curr, &proposal.descriptor, cfg.hallucination_rate, rng)?;
        if self_discriminative_check(env, curr, g.state, &proposal.descriptor) {
            let sub = goal.refine_to(Some(proposal.descriptor.text().to_string()), Some(g.state))?;
            return Ok(Proposal { target: g.state, goal: sub, ..proposal });
        }
    }
    Err(AnticipationError::VerificationExhausted { attempts: cfg.max_regenerations })
}

pub struct OracleAnticipator<'a, 'e> {
    env: &'a dyn SkillLibrary,
    oracle: &'a ValueOracle<'e>,
    cfg: AnticipationConfig,
}

impl<'a, 'e> OracleAnticipator<'a, 'e> {
    pub fn new(env: &'a dyn SkillLibrary, oracle: &'a ValueOracle<'e>, cfg: AnticipationConfig) -> Self {
        Self { env, oracle, cfg }
    }
}

impl AnticipationModel for OracleAnticipator<'_, '_> {
    fn refine(&self, curr: StateId, goal: &Goal, _rng: &mut ChaCha8Rng) -> Result<Goal, ModelError> {
        Ok(oracle_refine(self.env, self.oracle, curr, goal, &self.cfg)?.goal)
    }
}

pub struct TwoStageAnticipator<'a, 'e> {
    env: &'a dyn SkillLibrary,
    oracle: &'a ValueOracle<'e>,
    cfg: AnticipationConfig,
}

impl<'a, 'e> TwoStageAnticipator<'a, 'e> {
    pub fn new(env: &'a dyn SkillLibrary, oracle: &'a ValueOracle<'e>, cfg: AnticipationConfig) -> Self {
        Self { env, oracle, cfg }
    }
}

impl AnticipationModel for TwoStageAnticipator<'_, '_> {
    fn refine(&self, curr: StateId, goal: &Goal, rng: &mut ChaCha8Rng) -> Result<Goal, ModelError> {
        Ok(two_stage_refine(self.env, self.oracle, curr, goal, &self.cfg, rng)?.goal)
    }
}

/// Non-recursive anticipation: a flat plan of atomic subgoals fixed at the
/// initial state. Refinement returns the plan step after the latest one whose
/// target arrangement matches the current state.
pub struct FixedPlanAnticipator<'a> {
    env: &'a dyn SkillLibrary,
    plan: Vec<Goal>,
}

impl<'a> FixedPlanAnticipator<'a> {
    pub fn new(env: &'a dyn SkillLibrary, plan: Vec<Goal>) -> Self {
        Self { env, plan }
    }

    /// Plan from the expert decomposition of `task` at the initial state.
    pub fn from_expert(env: &'a dyn SkillLibrary, task: &Goal) -> Result<Self, AnticipationError> {
        let tree = crate::datasetgen::expert_tree(env, env.initial_state(), task)?;
        let plan = tree
            .atomic_leaves()
            .map(|n| task.refine_to(Some(n.descriptor.text().to_string()), Some(n.end_state)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(env, plan))
    }

    pub fn plan(&self) -> &[Goal] {
        &self.plan
    }
}

impl AnticipationModel for FixedPlanAnticipator<'_> {
    fn refine(&self, curr: StateId, goal: &Goal, _rng: &mut ChaCha8Rng) -> Result<Goal, ModelError> {
        let reached = self.plan.iter().rposition(|g| {
            let image = Goal::target_only(g.target_state().expect("plan goals carry targets"), 0);
            self.env.satisfied(curr, &image).unwrap_or(false)
        });
        let next = reached.map_or(0, |i| i + 1);
        let step = self.plan.get(next).ok_or(AnticipationError::NoBoundary)?;
        Ok(Goal::new(step.instruction().map(str::to_string), step.target_state(), goal.level() + 1)
            .map_err(AnticipationError::from)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::chain::ChainEnv;
    use crate::gmdp::EnvironmentModel;
    use rand::SeedableRng;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_descriptor("  Pick up the block with letter: <C>. "), "pick up the block with letter <c>");
        assert_eq!(normalize_descriptor("pick up the block with letter < C >"), "pick up the block with letter <c>");
        assert_eq!(normalize_descriptor("place\tit  in pink circle plate"), "place it in pink circle plate");
        let a = SubgoalDescriptor::new("Move to position <3>.");
        assert!(a.equivalent(&SubgoalDescriptor::new("move to position <3>")));
        assert!(!a.equivalent(&SubgoalDescriptor::new("move to position <4>")));
    }

    #[test]
    fn config_validation() {
        assert!(AnticipationConfig::new(0, 0.5, 0.0).is_err());
        assert!(AnticipationConfig::new(1, 1.0, 0.0).is_err());
        assert!(AnticipationConfig::new(1, 0.5, 1.5).is_err());
        let c: AnticipationConfig = toml::from_str("max_regenerations = 2").unwrap();
        assert_eq!(c.max_regenerations(), 2);
        assert_eq!(c.split_fraction(), 0.5);
    }

    #[test]
    fn inverse_dynamics_on_chain() {
        let env = ChainEnv::new(6, 5).unwrap();
        assert_eq!(describe_transition(&env, StateId(5), StateId(2)).unwrap().text(), "move to position <2>");
        assert_eq!(describe_transition(&env, StateId(2), StateId(2)), Err(AnticipationError::NoSkill));
    }

    #[test]
    fn chain_refinement_splits_and_verifies() {
        let env = ChainEnv::new(11, 10).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let g = env.position_goal(0);
        let p = oracle_refine(&env, &oracle, StateId(10), &g, &AnticipationConfig::default()).unwrap();
        assert_eq!(p.steps, 5);
        assert_eq!(p.target, StateId(5));
        assert_eq!(p.goal.level(), 1);
        let v = oracle.table(&g).unwrap();
        let vs = oracle.compute(&p.goal).unwrap();
        assert_eq!(v.get(StateId(10)), Some(vs.get(StateId(10)).unwrap() + v.get(p.target).unwrap()));
        assert_eq!(
            oracle_refine(&env, &oracle, StateId(0), &g, &AnticipationConfig::default()),
            Err(AnticipationError::AlreadyAchieved)
        );
        let one = oracle_refine(&env, &oracle, StateId(1), &g, &AnticipationConfig::default()).unwrap();
        assert_eq!(one.target, StateId(0));
    }

    #[test]
    fn always_hallucinating_grounding_exhausts() {
        let env = ChainEnv::new(11, 10).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let cfg = AnticipationConfig::new(3, 0.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = two_stage_refine(&env, &oracle, StateId(10), &env.position_goal(0), &cfg, &mut rng);
        assert_eq!(r, Err(AnticipationError::VerificationExhausted { attempts: 3 }));
        let honest = AnticipationConfig::new(3, 0.5, 0.0).unwrap();
        let ok = two_stage_refine(&env, &oracle, StateId(10), &env.position_goal(0), &honest, &mut rng).unwrap();
        assert!(env.satisfied(ok.target, &ok.goal).unwrap());
    }
}
