//! Hierarchical annotation of expert trajectories and emission of training
//! datasets: anticipation, value (three-way labels), policy, dynamics and
//! inverse dynamics.
//!
//! Files are JSON lines. The first line of every file is a header
//! `{"format":"goalstack-dataset","version":1,"family":...}`; `manifest.json`
//! records per-family counts, skip counters and the labeling config.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anticipation::{AnticipationError, SubgoalDescriptor};
use crate::envs::SkillLibrary;
use crate::gmdp::{ActionId, EnvError, Goal, GoalError, StateId};
use crate::value::{ProgressLabel, ProgressThresholds, ValueError, ValueOracle};

pub const DATASET_FORMAT: &str = "goalstack-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("trajectory does not satisfy the task goal")]
    Unsuccessful,
    #[error("boundary {descriptor:?} is never reached after frame {from}")]
    BoundaryNotReached { descriptor: String, from: usize },
    #[error("invalid labeling config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Goal(#[from] GoalError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Value(#[from] ValueError),
}

impl From<DatasetError> for AnticipationError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Env(e) => AnticipationError::Env(e),
            DatasetError::Goal(e) => AnticipationError::Goal(e),
            other => AnticipationError::GroundingFailure(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub index: usize,
    pub state: StateId,
    /// Action taken at this frame; absent on the last frame.
    pub action: Option<ActionId>,
    /// Atomic skill being executed.
    pub descriptor: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: Goal,
    pub frames: Vec<Frame>,
    pub success: bool,
}

impl Trajectory {
    pub fn state(&self, f: usize) -> StateId {
        self.frames[f].state
    }

    pub fn last_frame(&self) -> usize {
        self.frames.len() - 1
    }
}

/// Runs the scripted expert: atomic skills in hierarchy order, skipping
/// boundaries that already hold.
pub fn expert_trajectory(env: &dyn SkillLibrary, task: &Goal) -> Result<Trajectory, DatasetError> {
    let s0 = env.initial_state();
    let mut frames = vec![Frame { index: 0, state: s0, action: None, descriptor: None }];
    expand(env, task, &mut frames)?;
    let last = frames.last().expect("non-empty").state;
    let success = env.satisfied(last, task)?;
    Ok(Trajectory { task: task.clone(), frames, success })
}

fn expand(env: &dyn SkillLibrary, goal: &Goal, frames: &mut Vec<Frame>) -> Result<(), DatasetError> {
    let here = frames.last().expect("non-empty").state;
    for b in env.hierarchy_boundaries(here, goal)? {
        let state = frames.last().expect("non-empty").state;
        if env.satisfied(state, &b.condition)? {
            continue;
        }
        let sub = Goal::instruction_only(b.descriptor.text(), goal.level() + 1)?;
        match env.hierarchy_boundaries(state, &sub) {
            Err(EnvError::NoDecomposition(_)) => {
                for (a, s) in env.run_skill(state, &b.descriptor)? {
                    let prev = frames.last_mut().expect("non-empty");
                    prev.action = Some(a);
                    prev.descriptor = Some(b.descriptor.text().to_string());
                    let index = frames.len();
                    frames.push(Frame { index, state: s, action: None, descriptor: None });
                }
            }
            Ok(_) => expand(env, &sub, frames)?,
            Err(e) => return Err(e.into()),
        }
        let state = frames.last().expect("non-empty").state;
        if !env.satisfied(state, &b.condition)? {
            return Err(DatasetError::BoundaryNotReached {
                descriptor: b.descriptor.text().into(),
                from: frames.len() - 1,
            });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub level: u32,
    pub descriptor: SubgoalDescriptor,
    /// First frame of the node's segment.
    pub start: usize,
    pub achieved_at: usize,
    pub end_state: StateId,
    pub children: Vec<usize>,
}

impl SubgoalNode {
    pub fn is_atomic(&self) -> bool {
        self.children.is_empty() && self.parent.is_some()
    }

    /// The node as a goal: descriptor plus achieved state.
    pub fn goal(&self) -> Goal {
        Goal::new(Some(self.descriptor.text().to_string()), Some(self.end_state), self.level)
            .expect("descriptor is non-empty")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalTree {
    pub task: Goal,
    pub nodes: Vec<SubgoalNode>,
}

impl SubgoalTree {
    pub fn root(&self) -> &SubgoalNode {
        &self.nodes[0]
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &SubgoalNode> {
        self.nodes[id].children.iter().map(|&c| &self.nodes[c])
    }

    /// Leaves below the root with a non-empty segment, in trajectory order.
    pub fn atomic_leaves(&self) -> impl Iterator<Item = &SubgoalNode> {
        self.nodes.iter().filter(|n| n.is_atomic() && n.achieved_at > n.start)
    }

    pub fn at_level(&self, level: u32) -> impl Iterator<Item = &SubgoalNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }

    /// Goal of a node; the task goal for the root.
    pub fn goal_of(&self, id: usize) -> Goal {
        if id == 0 {
            self.task.clone()
        } else {
            self.nodes[id].goal()
        }
    }
}

/// Builds the subgoal tree of a successful trajectory. Each boundary is
/// achieved at the first frame, no earlier than its predecessor's, where its
/// condition holds.
pub fn annotate(env: &dyn SkillLibrary, traj: &Trajectory) -> Result<SubgoalTree, DatasetError> {
    if !traj.success {
        return Err(DatasetError::Unsuccessful);
    }
    let last = traj.last_frame();
    let root_text = traj.task.instruction().map_or_else(|| traj.task.to_string(), str::to_string);
    let mut tree = SubgoalTree {
        task: traj.task.clone(),
        nodes: vec![SubgoalNode {
            id: 0,
            parent: None,
            level: 0,
            descriptor: SubgoalDescriptor::new(root_text),
            start: 0,
            achieved_at: last,
            end_state: traj.state(last),
            children: Vec::new(),
        }],
    };
    annotate_node(env, traj, &mut tree, 0, &traj.task)?;
    Ok(tree)
}

fn annotate_node(
    env: &dyn SkillLibrary,
    traj: &Trajectory,
    tree: &mut SubgoalTree,
    id: usize,
    goal: &Goal,
) -> Result<(), DatasetError> {
    let (start, end) = (tree.nodes[id].start, tree.nodes[id].achieved_at);
    // Nothing happened inside an empty segment.
    if start == end {
        return Ok(());
    }
    let boundaries = match env.hierarchy_boundaries(traj.state(start), goal) {
        Ok(b) => b,
        Err(EnvError::NoDecomposition(_)) => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    let mut from = start;
    for b in boundaries {
        let hit = (from..=end)
            .find(|&f| env.satisfied(traj.state(f), &b.condition).unwrap_or(false))
            .ok_or_else(|| DatasetError::BoundaryNotReached { descriptor: b.descriptor.text().into(), from })?;
        let child = tree.nodes.len();
        tree.nodes.push(SubgoalNode {
            id: child,
            parent: Some(id),
            level: goal.level() + 1,
            descriptor: b.descriptor.clone(),
            start: from,
            achieved_at: hit,
            end_state: traj.state(hit),
            children: Vec::new(),
        });
        tree.nodes[id].children.push(child);
        if hit > from {
            let sub = Goal::instruction_only(b.descriptor.text(), goal.level() + 1)?;
            annotate_node(env, traj, tree, child, &sub)?;
        }
        from = hit;
    }
    Ok(())
}

/// A window offset in frames, or as a fraction of the subgoal's segment
/// length (rounded up).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offset {
    Frames(u32),
    Fraction(f64),
}

impl Offset {
    pub fn resolve(self, segment_len: usize) -> usize {
        match self {
            Offset::Frames(n) => n as usize,
            Offset::Fraction(f) => (f * segment_len as f64).ceil() as usize,
        }
    }

    fn validate(self, name: &str) -> Result<(), DatasetError> {
        match self {
            Offset::Fraction(f) if !(f.is_finite() && f >= 0.0) => {
                Err(DatasetError::Config(format!("{name} fraction {f} must be finite and non-negative")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingConfig {
    /// Minimum advance, in frames, that counts as progress.
    pub beta: Offset,
    /// Frames before the subgoal frame that already count as achieved.
    pub gamma: Offset,
    /// Lower offset of the second-frame window, from the first frame.
    pub delta_lo: Offset,
    /// Upper offset of the second-frame window, past the subgoal frame.
    pub epsilon_hi: Offset,
    pub samples_per_subgoal: u32,
    /// Sampling weight of first frames within `near_radius` of the subgoal.
    pub near_weight: f64,
    pub near_radius: Offset,
    pub seed: u64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            beta: Offset::Fraction(0.1),
            gamma: Offset::Frames(1),
            delta_lo: Offset::Frames(1),
            epsilon_hi: Offset::Fraction(0.2),
            samples_per_subgoal: 4,
            near_weight: 2.0,
            near_radius: Offset::Fraction(0.2),
            seed: 0,
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        for (o, n) in [
            (self.beta, "beta"),
            (self.gamma, "gamma"),
            (self.delta_lo, "delta_lo"),
            (self.epsilon_hi, "epsilon_hi"),
            (self.near_radius, "near_radius"),
        ] {
            o.validate(n)?;
        }
        if self.samples_per_subgoal == 0 {
            return Err(DatasetError::Config("samples_per_subgoal must be positive".into()));
        }
        if !(self.near_weight.is_finite() && self.near_weight > 0.0) {
            return Err(DatasetError::Config("near_weight must be positive".into()));
        }
        Ok(())
    }
}

/// The three-way interval rule on frame indices: insufficient below
/// `f1 + beta`, achieved from `g - gamma` on, sufficient in between.
/// Achievement wins where the two conditions overlap.
pub fn label_frames(f1: usize, f2: usize, g: usize, beta: usize, gamma: usize) -> ProgressLabel {
    if f2 + gamma >= g {
        ProgressLabel::Achieved
    } else if f2 < f1 + beta {
        ProgressLabel::NoProgress
    } else {
        ProgressLabel::Progress
    }
}

/// Value records re-labeled by the oracle classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelAgreement {
    pub checked: usize,
    pub disagreements: usize,
    /// Records outside the common domain: second frame past the subgoal
    /// frame, or `beta = 0`.
    pub skipped: usize,
}

/// Compares each value record's frame label with the oracle classifier on
/// `(s1, s2)`. Frame offsets become value thresholds: achieved at
/// `V* <= gamma`, no progress while `V*` dropped by less than `beta`. The two
/// agree wherever the expert path runs at optimal speed toward the subgoal.
/// Past the subgoal frame the frame rule keeps saying achieved while a
/// state-grounded subgoal's value rises again, so those records are skipped.
pub fn check_value_labels(
    env: &dyn SkillLibrary,
    tree: &SubgoalTree,
    records: &[ValueRecord],
    cfg: &LabelingConfig,
) -> Result<LabelAgreement, DatasetError> {
    let oracle = ValueOracle::new(env)?;
    let mut out = LabelAgreement::default();
    for r in records {
        let node = tree
            .nodes
            .iter()
            .skip(1)
            .find(|n| n.achieved_at == r.subgoal_frame && n.goal() == r.goal)
            .ok_or_else(|| DatasetError::Config(format!("no subgoal {} at frame {}", r.goal, r.subgoal_frame)))?;
        let seg = node.achieved_at - node.start;
        let (beta, gamma) = (cfg.beta.resolve(seg), cfg.gamma.resolve(seg));
        if beta == 0 || r.f2 > r.subgoal_frame {
            out.skipped += 1;
            continue;
        }
        let thresholds = ProgressThresholds::new(gamma as f64, (beta - 1) as f64)
            .map_err(|e| DatasetError::Config(e.to_string()))?;
        let values = oracle.table(&r.goal)?;
        let (v1, v2) = (values.require(r.s1)?, values.require(r.s2)?);
        out.checked += 1;
        if thresholds.label(v1, v2) != r.label {
            out.disagreements += 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnticipationRecord {
    pub state: StateId,
    pub frame: usize,
    pub subgoal: Goal,
    pub goal: Goal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRecord {
    pub s1: StateId,
    pub s2: StateId,
    pub f1: usize,
    pub f2: usize,
    pub subgoal_frame: usize,
    pub goal: Goal,
    pub label: ProgressLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTarget {
    Action(ActionId),
    Descriptor(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub state: StateId,
    pub frame: usize,
    pub target: PolicyTarget,
    pub goal: Goal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub s_init: StateId,
    pub s_curr: StateId,
    pub descriptor: String,
    pub s_target: StateId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseRecord {
    pub s_curr: StateId,
    pub s_next: StateId,
    pub descriptor: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Datasets {
    pub anticipation: Vec<AnticipationRecord>,
    pub value: Vec<ValueRecord>,
    pub policy: Vec<PolicyRecord>,
    pub dynamics: Vec<DynamicsRecord>,
    pub inverse: Vec<InverseRecord>,
    /// Subgoals skipped per family because a sampling window was empty.
    pub skipped: BTreeMap<String, u64>,
}

impl Datasets {
    pub fn counts(&self) -> BTreeMap<String, usize> {
        BTreeMap::from([
            ("anticipation".to_string(), self.anticipation.len()),
            ("value".to_string(), self.value.len()),
            ("policy".to_string(), self.policy.len()),
            ("dynamics".to_string(), self.dynamics.len()),
            ("inverse".to_string(), self.inverse.len()),
        ])
    }

    pub fn extend(&mut self, other: Datasets) {
        self.anticipation.extend(other.anticipation);
        self.value.extend(other.value);
        self.policy.extend(other.policy);
        self.dynamics.extend(other.dynamics);
        self.inverse.extend(other.inverse);
        for (k, v) in other.skipped {
            *self.skipped.entry(k).or_default() += v;
        }
    }

    fn skip(&mut self, family: &str) {
        *self.skipped.entry(family.to_string()).or_default() += 1;
    }
}

fn stream(seed: u64, family: u64, trajectory: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trajectory << 8) | family);
    rng
}

/// Sampled frame in `[lo, hi)`; frames within `near` of `hi` get extra weight.
fn weighted_frame(rng: &mut ChaCha8Rng, lo: usize, hi: usize, near: usize, weight: f64) -> usize {
    let weights: Vec<f64> = (lo..hi).map(|f| if hi - f <= near { weight } else { 1.0 }).collect();
    let dist = WeightedIndex::new(&weights).expect("non-empty window with positive weights");
    lo + dist.sample(rng)
}

/// Frames before the first child boundary of a composite node: from these,
/// the node's own skill still connects to its end state.
fn inverse_window(tree: &SubgoalTree, node: &SubgoalNode) -> usize {
    tree.children(node.id).map(|c| c.achieved_at).min().unwrap_or(node.achieved_at)
}

/// Builds every dataset family from one annotated trajectory. `index`
/// separates random streams of different trajectories.
pub fn build_datasets(
    traj: &Trajectory,
    tree: &SubgoalTree,
    cfg: &LabelingConfig,
    index: u64,
) -> Result<Datasets, DatasetError> {
    cfg.validate()?;
    let mut out = Datasets::default();
    let n = cfg.samples_per_subgoal as usize;
    let last = traj.last_frame();
    let mut r_anti = stream(cfg.seed, 0, index);
    let mut r_value = stream(cfg.seed, 1, index);
    let mut r_policy = stream(cfg.seed, 2, index);
    let mut r_dyn = stream(cfg.seed, 3, index);
    let mut r_inv = stream(cfg.seed, 4, index);

    for node in tree.nodes.iter().skip(1) {
        let parent = node.parent.expect("non-root");
        let (lo, g) = (node.start, node.achieved_at);
        if g <= lo {
            for fam in ["anticipation", "value", "policy", "dynamics", "inverse"] {
                out.skip(fam);
            }
            continue;
        }
        let seg = g - lo;
        let goal = tree.goal_of(parent);
        let sub = node.goal();
        let near = cfg.near_radius.resolve(seg);

        for _ in 0..n {
            let f = r_anti.gen_range(lo..g);
            out.anticipation.push(AnticipationRecord {
                state: traj.state(f),
                frame: f,
                subgoal: sub.clone(),
                goal: goal.clone(),
            });
        }

        let (beta, gamma) = (cfg.beta.resolve(seg), cfg.gamma.resolve(seg));
        let (dlo, ehi) = (cfg.delta_lo.resolve(seg), cfg.epsilon_hi.resolve(seg));
        let mut emitted = 0;
        for _ in 0..n {
            let f1 = weighted_frame(&mut r_value, lo, g, near, cfg.near_weight);
            let (a, b) = (f1 + dlo, (g + ehi).min(last));
            if a > b {
                continue;
            }
            let f2 = r_value.gen_range(a..=b);
            emitted += 1;
            out.value.push(ValueRecord {
                s1: traj.state(f1),
                s2: traj.state(f2),
                f1,
                f2,
                subgoal_frame: g,
                goal: sub.clone(),
                label: label_frames(f1, f2, g, beta, gamma),
            });
        }
        if emitted == 0 {
            out.skip("value");
        }

        for _ in 0..n {
            let f = r_policy.gen_range(lo..g);
            out.policy.push(PolicyRecord {
                state: traj.state(f),
                frame: f,
                target: PolicyTarget::Descriptor(node.descriptor.text().to_string()),
                goal: goal.clone(),
            });
            if node.is_atomic() {
                let f = r_policy.gen_range(lo..g);
                let action = traj.frames[f].action.expect("frames before the last carry an action");
                out.policy.push(PolicyRecord {
                    state: traj.state(f),
                    frame: f,
                    target: PolicyTarget::Action(action),
                    goal: sub.clone(),
                });
            }
        }

        for _ in 0..n {
            let f = r_dyn.gen_range(lo..g);
            out.dynamics.push(DynamicsRecord {
                s_init: traj.state(lo),
                s_curr: traj.state(f),
                descriptor: node.descriptor.text().to_string(),
                s_target: node.end_state,
            });
        }

        let hi = inverse_window(tree, node).max(lo + 1);
        for _ in 0..n {
            let f = r_inv.gen_range(lo..hi);
            out.inverse.push(InverseRecord {
                s_curr: traj.state(f),
                s_next: node.end_state,
                descriptor: node.descriptor.text().to_string(),
            });
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Header<'a> {
    format: &'a str,
    version: u32,
    family: &'a str,
}

fn write_family<T: Serialize>(dir: &Path, family: &str, records: &[T]) -> Result<(), DatasetError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{family}.jsonl")))?);
    serde_json::to_writer(&mut w, &Header { format: DATASET_FORMAT, version: DATASET_VERSION, family })?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'a str,
    version: u32,
    environment: &'a str,
    trajectories: usize,
    counts: BTreeMap<String, usize>,
    skipped: &'a BTreeMap<String, u64>,
    config: &'a LabelingConfig,
}

/// Writes one file per family plus `manifest.json` into `dir`.
pub fn write_datasets(
    dir: &Path,
    environment: &str,
    trajectories: usize,
    data: &Datasets,
    cfg: &LabelingConfig,
) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir)?;
    write_family(dir, "anticipation", &data.anticipation)?;
    write_family(dir, "value", &data.value)?;
    write_family(dir, "policy", &data.policy)?;
    write_family(dir, "dynamics", &data.dynamics)?;
    write_family(dir, "inverse", &data.inverse)?;
    let manifest = Manifest {
        format: DATASET_FORMAT,
        version: DATASET_VERSION,
        environment,
        trajectories,
        counts: data.counts(),
        skipped: &data.skipped,
        config: cfg,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// Expert run plus its annotation.
pub fn expert_tree(env: &dyn SkillLibrary, _from: StateId, task: &Goal) -> Result<SubgoalTree, DatasetError> {
    let traj = expert_trajectory(env, task)?;
    annotate(env, &traj)
}
