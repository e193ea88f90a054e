mod common;

use goalstack::anticipation::{
    describe_transition, oracle_refine, self_discriminative_check, two_stage_refine, AnticipationConfig,
    AnticipationError, SubgoalDescriptor,
};
use goalstack::envs::chain::ChainEnv;
use goalstack::envs::SkillLibrary;
use goalstack::gmdp::EnvironmentModel;
use goalstack::value::{compute_values, ValueOracle};
use goalstack::{Goal, StateId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn honest() -> AnticipationConfig {
    AnticipationConfig::default()
}

#[test]
fn chain_split_lands_halfway() {
    let env = ChainEnv::new(10, 9).unwrap();
    let oracle = ValueOracle::new(&env).unwrap();
    let g = env.position_goal(0);
    let p = oracle_refine(&env, &oracle, StateId(9), &g, &honest()).unwrap();
    assert_eq!(p.target, StateId(5));
    assert_eq!(p.steps, 4);
    let to_sub = compute_values(&env, &p.goal).unwrap().get(StateId(9)).unwrap();
    let rest = compute_values(&env, &g).unwrap().get(p.target).unwrap();
    assert_eq!((to_sub, rest), (4, 5));
    assert_eq!(
        oracle_refine(&env, &oracle, StateId(0), &g, &honest()).unwrap_err(),
        AnticipationError::AlreadyAchieved
    );
}

#[test]
fn spell_cat_refines_to_the_first_letter() {
    let env = common::cat();
    let oracle = ValueOracle::new(&env).unwrap();
    let p = oracle_refine(&env, &oracle, env.initial_state(), &env.task_goal(), &honest()).unwrap();
    assert_eq!(p.descriptor.text(), "place the block with letter <C> on the table");
    assert_eq!(env.slot_letters(p.target), "C");
    assert_eq!(env.held_letter(p.target), None);
    assert_eq!(p.goal.level(), 1);

    // The atomic level below it.
    let q = oracle_refine(&env, &oracle, env.initial_state(), &p.goal, &honest()).unwrap();
    assert_eq!(q.descriptor.text(), "pick up the block with letter: <C>");
    assert_eq!(env.held_letter(q.target), Some('C'));
}

#[test]
fn honest_two_stage_equals_oracle() {
    let env = common::cat();
    let oracle = ValueOracle::new(&env).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s0 = env.initial_state();
    let a = oracle_refine(&env, &oracle, s0, &env.task_goal(), &honest()).unwrap();
    let b = two_stage_refine(&env, &oracle, s0, &env.task_goal(), &honest(), &mut rng).unwrap();
    assert_eq!(a, b);
}

#[test]
fn letter_swapping_grounder_is_always_caught() {
    let env = common::cat();
    let oracle = ValueOracle::new(&env).unwrap();
    let cfg = AnticipationConfig::new(4, 0.5, 1.0).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = two_stage_refine(&env, &oracle, env.initial_state(), &env.task_goal(), &cfg, &mut rng);
        assert_eq!(r.unwrap_err(), AnticipationError::VerificationExhausted { attempts: 4 });
    }
}

#[test]
fn inverse_dynamics_examples() {
    let env = common::cat();
    let s0 = env.initial_state();
    let holding_c = env.skill_outcome(s0, &SubgoalDescriptor::new("pick up the block with letter: <C>")).unwrap();
    assert_eq!(env.held_letter(holding_c), Some('C'));
    assert_eq!(describe_transition(&env, s0, holding_c).unwrap().text(), "pick up the block with letter: <C>");
    assert_eq!(describe_transition(&env, s0, s0).unwrap_err(), AnticipationError::NoSkill);

    let kitchen = common::kitchen();
    let k0 = kitchen.initial_state();
    let held = kitchen.skill_outcome(k0, &SubgoalDescriptor::new("pick up apple in pink circle plate")).unwrap();
    assert_eq!(kitchen.locations(held)[1], None);
    let placed = kitchen.skill_outcome(held, &SubgoalDescriptor::new("place it in brown squared plate")).unwrap();
    assert_eq!(kitchen.locations(placed)[1], Some(1));
    assert_eq!(describe_transition(&kitchen, held, placed).unwrap().text(), "place it in brown squared plate");
}

#[test]
fn discriminative_check_cases() {
    let env = common::cat();
    let s0 = env.initial_state();
    let c = SubgoalDescriptor::new("pick up the block with letter: <C>");
    let holding_c = env.skill_outcome(s0, &c).unwrap();
    let holding_a = env.skill_outcome(s0, &SubgoalDescriptor::new("pick up the block with letter: <A>")).unwrap();
    assert!(self_discriminative_check(&env, s0, holding_c, &c));
    assert!(!self_discriminative_check(&env, s0, holding_a, &c));
    assert!(!self_discriminative_check(&env, s0, s0, &c));
}

/// Refines repeatedly down to single steps, checking additivity each time.
fn refine_to_the_bottom(env: &dyn SkillLibrary, oracle: &ValueOracle<'_>, s: StateId, g: &Goal, split: f64) -> Result<u32, String> {
    let cfg = AnticipationConfig::new(1, split, 0.0).unwrap();
    let v = compute_values(env, g).unwrap().get(s).unwrap();
    if v == 0 {
        return Ok(0);
    }
    let p = oracle_refine(env, oracle, s, g, &cfg).map_err(|e| e.to_string())?;
    let to_sub = compute_values(env, &p.goal).unwrap().get(s).unwrap();
    let rest = compute_values(env, g).unwrap().get(p.target).unwrap();
    if to_sub + rest != v {
        return Err(format!("{v} != {to_sub} + {rest} for {g}"));
    }
    if to_sub >= v && v > 1 {
        return Err(format!("horizon did not shrink: {to_sub} from {v}"));
    }
    if to_sub > 1 {
        refine_to_the_bottom(env, oracle, s, &p.goal, split)?;
    }
    Ok(v)
}

proptest! {
    #[test]
    fn chain_refinement_recurses_to_single_steps(len in 2u32..80, a in 0u32..1000, b in 0u32..1000, split in 0.05f64..0.95) {
        let env = ChainEnv::new(len, a % len).unwrap();
        let oracle = ValueOracle::new(&env).unwrap();
        let g = env.position_goal(b % len);
        prop_assert_eq!(refine_to_the_bottom(&env, &oracle, StateId(a % len), &g, split), Ok((a % len).abs_diff(b % len)));
    }

    #[test]
    fn spell_refinement_recurses_from_any_state(s in 0u32..279, split in 0.1f64..0.9) {
        let env = common::cat();
        let oracle = ValueOracle::new(&env).unwrap();
        prop_assert!(refine_to_the_bottom(&env, &oracle, StateId(s), &env.task_goal(), split).is_ok());
    }

    #[test]
    fn rearrange_refinement_recurses_from_any_state(s in 0u32..45, split in 0.1f64..0.9) {
        let env = common::kitchen();
        let oracle = ValueOracle::new(&env).unwrap();
        prop_assert!(refine_to_the_bottom(&env, &oracle, StateId(s % env.num_states() as u32), &env.task_goal(), split).is_ok());
    }
}
