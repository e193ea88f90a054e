//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use goalstack::envs::blockwords::{BlockWords, BlockWordsSpec, TileSpec};
use goalstack::envs::rearrange::{ObjectKind, ObjectSpec, PlateSpec, Rearrange, RearrangeSpec};
use goalstack::gmdp::EnvironmentModel;
use goalstack::{ActionId, Goal, StateId};

pub fn cat() -> BlockWords {
    blockwords("CAT", [3, 3], &[[0, 0], [0, 2], [1, 1]], "")
}

pub fn blockwords(word: &str, grid: [u8; 2], homes: &[[u8; 2]], placed: &str) -> BlockWords {
    let last = grid[0] - 1;
    BlockWords::new(
        BlockWordsSpec {
            grid,
            word: word.into(),
            tiles: word.chars().zip(homes).map(|(letter, &home)| TileSpec { letter, home }).collect(),
            slots: (0..word.len() as u8).map(|c| [last, c]).collect(),
            gripper: [1, 0],
            placed: placed.into(),
        },
        200_000,
    )
    .unwrap()
}

pub fn plate(color: &str, shape: &str) -> PlateSpec {
    PlateSpec { color: color.into(), shape: shape.into() }
}

pub fn object(name: &str, kind: ObjectKind, plate: usize, goal: usize) -> ObjectSpec {
    ObjectSpec { name: name.into(), kind, plate, goal }
}

/// Apple from the pink plate to the brown squared one, fork from brown to blue.
pub fn kitchen() -> Rearrange {
    Rearrange::new(
        RearrangeSpec {
            plates: vec![plate("pink", "circle"), plate("brown", "squared"), plate("blue", "circle")],
            objects: vec![
                object("fork", ObjectKind::Utensil, 1, 2),
                object("apple", ObjectKind::Fruit, 0, 1),
            ],
            gripper: 0,
        },
        10_000,
    )
    .unwrap()
}

pub fn instances_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("instances")
}

/// Distance from `s` to the goal by forward breadth-first search, using
/// nothing but `step` and `satisfied`.
pub fn forward_distance(env: &dyn EnvironmentModel, goal: &Goal, s: StateId) -> Option<u32> {
    let mut seen = vec![false; env.num_states()];
    let mut queue = VecDeque::from([(s, 0u32)]);
    seen[s.index()] = true;
    while let Some((x, d)) = queue.pop_front() {
        if env.satisfied(x, goal).unwrap() {
            return Some(d);
        }
        for a in 0..env.num_actions() {
            let y = env.step(x, ActionId(a as u16));
            if !seen[y.index()] {
                seen[y.index()] = true;
                queue.push_back((y, d + 1));
            }
        }
    }
    None
}
