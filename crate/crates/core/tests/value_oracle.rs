mod common;

use goalstack::envs::chain::ChainEnv;
use goalstack::gmdp::{reward, EnvironmentModel};
use goalstack::value::{
    bellman_residual, classify_progress, compute_values, optimal_path, ProgressLabel, ProgressThresholds, ValueTable,
};
use goalstack::{ActionId, Goal, StateId};
use proptest::prelude::*;

#[test]
fn chain_distances_and_rewards() {
    let env = ChainEnv::new(10, 9).unwrap();
    let g = env.position_goal(0);
    let v = compute_values(&env, &g).unwrap();
    for k in 0..10 {
        assert_eq!(v.get(StateId(k)), Some(k));
    }
    assert_eq!(reward(StateId(3), StateId(2), &g, &v).unwrap(), 1);
    assert_eq!(reward(StateId(3), StateId(3), &g, &v).unwrap(), 0);
    assert_eq!(reward(StateId(3), StateId(4), &g, &v).unwrap(), -1);
}

#[test]
fn spelled_word_has_zero_value() {
    let env = common::blockwords("CAT", [3, 3], &[[0, 0], [0, 2], [1, 1]], "CAT");
    let v = compute_values(&env, &env.task_goal()).unwrap();
    assert_eq!(v.get(env.initial_state()), Some(0));
}

#[test]
fn letter_goal_table_matches_forward_search() {
    let env = common::cat();
    let g = Goal::instruction_only("place the block with letter <C> on the table", 1).unwrap();
    let v = compute_values(&env, &g).unwrap();
    for s in 0..env.num_states() {
        let s = StateId(s as u32);
        assert_eq!(v.get(s), common::forward_distance(&env, &g, s), "state {s}");
    }
}

#[test]
fn classifier_on_chain_values() {
    let env = ChainEnv::new(10, 9).unwrap();
    let v = compute_values(&env, &env.position_goal(0)).unwrap();
    let t = ProgressThresholds::default();
    assert_eq!(classify_progress(&v, StateId(5), StateId(0), &t).unwrap(), ProgressLabel::Achieved);
    assert_eq!(classify_progress(&v, StateId(5), StateId(5), &t).unwrap(), ProgressLabel::NoProgress);
    assert_eq!(classify_progress(&v, StateId(5), StateId(3), &t).unwrap(), ProgressLabel::Progress);
}

#[test]
fn residual_detects_a_single_perturbation() {
    let env = common::cat();
    let v = compute_values(&env, &env.task_goal()).unwrap();
    assert_eq!(bellman_residual(&env, &v).unwrap(), 0);
    let mut entries = v.entries();
    let i = entries.iter().position(|e| *e == Some(7)).unwrap();
    entries[i] = Some(8);
    let bumped = ValueTable::from_entries(env.task_goal(), entries);
    assert_eq!(bellman_residual(&env, &bumped).unwrap(), 1);

    let single = ChainEnv::new(1, 0).unwrap();
    let v = compute_values(&single, &single.position_goal(0)).unwrap();
    assert_eq!(bellman_residual(&single, &v).unwrap(), 0);
}

#[test]
fn rearrange_task_table_matches_forward_search() {
    let env = common::kitchen();
    let g = env.task_goal();
    let v = compute_values(&env, &g).unwrap();
    assert_eq!(bellman_residual(&env, &v).unwrap(), 0);
    for s in 0..env.num_states() {
        let s = StateId(s as u32);
        assert_eq!(v.get(s), common::forward_distance(&env, &g, s));
    }
}

proptest! {
    #[test]
    fn chain_values_are_line_distances(len in 1u32..60, start_seed in 0u32..1000, goal_seed in 0u32..1000) {
        let env = ChainEnv::new(len, start_seed % len).unwrap();
        let g = goal_seed % len;
        let v = compute_values(&env, &env.position_goal(g)).unwrap();
        for k in 0..len {
            prop_assert_eq!(v.get(StateId(k)), Some(k.abs_diff(g)));
        }
    }

    #[test]
    fn values_are_one_step_consistent(target in 0u32..279) {
        let env = common::cat();
        let g = Goal::target_only(StateId(target), 0);
        let v = compute_values(&env, &g).unwrap();
        prop_assert_eq!(bellman_residual(&env, &v).unwrap(), 0);
        for s in 0..env.num_states() {
            let s = StateId(s as u32);
            let here = v.get(s).unwrap();
            for a in 0..env.num_actions() {
                let there = v.get(env.step(s, ActionId(a as u16))).unwrap();
                prop_assert!(here <= there + 1);
            }
            let path = optimal_path(&env, &v, s).unwrap();
            prop_assert_eq!(path.len() as u32, here + 1);
            prop_assert!(env.satisfied(*path.last().unwrap(), &g).unwrap());
        }
    }
}
