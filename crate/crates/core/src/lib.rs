//! Hierarchical goal-conditioned planning on discrete environments.
//!
//! * [`gmdp`]: goals, environment and model interfaces.
//! * [`value`]: exact values by backward search, Bellman residuals and the
//!   three-way progress classifier.
//! * [`anticipation`]: subgoal refinement on optimal paths, grounding and
//!   self-discriminative verification.
//! * [`executor`]: the goal-stack episode loop with backtracking.
//! * [`envs`]: chain, block-word and rearrangement environments with scripted
//!   skills.
//! * [`datasetgen`]: trajectory annotation and dataset emission.
//! * [`harness`]: seeded suites, episode batches and metrics.

pub mod anticipation;
pub mod datasetgen;
pub mod envs;
pub mod executor;
pub mod gmdp;
pub mod harness;
pub mod par;
pub mod policy;
pub mod value;

pub use gmdp::{ActionId, Goal, StateId};
