//! Goal-conditioned low-level policies.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gmdp::{ActionId, Goal, ModelError, PolicyModel, StateId};
use crate::value::{greedy_action, ValueOracle};

/// Fault model of the oracle policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultPolicyConfig {
    /// Goals farther than this are ignored (the policy waits). `None` means
    /// unbounded.
    #[serde(default)]
    pub competence_radius: Option<u32>,
    /// Probability of replacing the chosen action by a uniform random one.
    #[serde(default)]
    pub slip_probability: f64,
}

impl FaultPolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.slip_probability) {
            return Err(format!("slip_probability {} outside [0, 1]", self.slip_probability));
        }
        Ok(())
    }
}

/// Greedy on exact values within its competence radius.
pub struct OraclePolicy<'a, 'e> {
    oracle: &'a ValueOracle<'e>,
    faults: FaultPolicyConfig,
}

impl<'a, 'e> OraclePolicy<'a, 'e> {
    pub fn new(oracle: &'a ValueOracle<'e>, faults: FaultPolicyConfig) -> Self {
        Self { oracle, faults }
    }
}

impl PolicyModel for OraclePolicy<'_, '_> {
    fn act(&self, state: StateId, goal: &Goal, rng: &mut ChaCha8Rng) -> Result<ActionId, ModelError> {
        let env = self.oracle.env();
        // The slip draw is always consumed so that random streams stay aligned
        // across configurations.
        let slip: f64 = rng.gen();
        if slip < self.faults.slip_probability {
            return Ok(ActionId(rng.gen_range(0..env.num_actions()) as u16));
        }
        let values = self.oracle.table(goal)?;
        let within = |v: u32| self.faults.competence_radius.is_none_or(|r| v <= r);
        Ok(match values.get(state) {
            Some(v) if v > 0 && within(v) => greedy_action(env, &values, state).unwrap_or(env.noop_action()),
            _ => env.noop_action(),
        })
    }
}

/// Always emits the no-op action.
pub struct InertPolicy {
    noop: ActionId,
}

impl InertPolicy {
    pub fn new(noop: ActionId) -> Self {
        Self { noop }
    }
}

impl PolicyModel for InertPolicy {
    fn act(&self, _state: StateId, _goal: &Goal, _rng: &mut ChaCha8Rng) -> Result<ActionId, ModelError> {
        Ok(self.noop)
    }
}

/// Hides one goal modality from the wrapped policy on refined goals.
pub struct MaskedPolicy<P> {
    inner: P,
    drop_target: bool,
    drop_instruction: bool,
}

impl<P> MaskedPolicy<P> {
    pub fn new(inner: P, drop_target: bool, drop_instruction: bool) -> Self {
        Self { inner, drop_target, drop_instruction }
    }
}

impl<P: PolicyModel> PolicyModel for MaskedPolicy<P> {
    fn act(&self, state: StateId, goal: &Goal, rng: &mut ChaCha8Rng) -> Result<ActionId, ModelError> {
        if goal.level() == 0 {
            return self.inner.act(state, goal, rng);
        }
        let mut g = goal.clone();
        if self.drop_target {
            g = g.without_target();
        }
        if self.drop_instruction {
            g = g.without_instruction();
        }
        self.inner.act(state, &g, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::chain::ChainEnv;
    use rand::SeedableRng;

    #[test]
    fn radius_limits_competence() {
        let env = ChainEnv::new(10, 9).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let p = OraclePolicy::new(&oracle, FaultPolicyConfig { competence_radius: Some(3), slip_probability: 0.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.act(StateId(9), &env.position_goal(0), &mut rng).unwrap(), ActionId(2));
        assert_eq!(p.act(StateId(3), &env.position_goal(0), &mut rng).unwrap(), ActionId(0));
        assert_eq!(p.act(StateId(0), &env.position_goal(0), &mut rng).unwrap(), ActionId(2));
    }

    #[test]
    fn full_slip_is_uniform_over_actions() {
        let env = ChainEnv::new(10, 9).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let p = OraclePolicy::new(&oracle, FaultPolicyConfig { competence_radius: None, slip_probability: 1.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[p.act(StateId(5), &env.position_goal(0), &mut rng).unwrap().index()] += 1;
        }
        assert!(counts.iter().all(|&c| c > 800), "{counts:?}");
    }

    #[test]
    fn masking_keeps_goals_valid() {
        let env = ChainEnv::new(10, 9).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let inner = OraclePolicy::new(&oracle, FaultPolicyConfig::default());
        let p = MaskedPolicy::new(inner, true, false);
        let sub = env
            .position_goal(0)
            .refine_to(Some("move to position <5>".into()), Some(StateId(5)))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.act(StateId(9), &sub, &mut rng).unwrap(), ActionId(0));
    }
}
