//! Tabletop rearrangement: fruits and utensils on a row of colored plates.
//!
//! The gripper hovers over one plate at a time and moves left or right.
//! It can grip any object on the plate below it and release the held object
//! onto that plate. Target-state goals compare object locations (including
//! the held object) and ignore the gripper.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{replay, Boundary, Enumerated, SkillLibrary};
use crate::anticipation::{normalize_descriptor, SubgoalDescriptor};
use crate::gmdp::{ActionId, EnvError, EnvironmentModel, Goal, StateId};

const HELD: u8 = u8::MAX;
const LEFT: u16 = 0;
const RIGHT: u16 = 1;

pub const COLORS: [&str; 4] = ["pink", "brown", "blue", "green"];
pub const SHAPES: [&str; 2] = ["circle", "squared"];
pub const FRUITS: [&str; 4] = ["apple", "pepper", "carrot", "lemon"];
pub const UTENSILS: [&str; 4] = ["fork", "knife", "spoon", "chopstick"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Fruit,
    Utensil,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateSpec {
    pub color: String,
    pub shape: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub kind: ObjectKind,
    /// Initial plate index.
    pub plate: usize,
    /// Plate index the object must end on.
    pub goal: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RearrangeSpec {
    pub plates: Vec<PlateSpec>,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub gripper: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Config {
    gripper: u8,
    locs: Vec<u8>,
}

impl Config {
    fn held(&self) -> Option<u8> {
        self.locs.iter().position(|&l| l == HELD).map(|i| i as u8)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Command {
    Rearrange,
    Move(u8, u8),
    PickIn(u8, u8),
    PlaceIn(u8),
    MoveGripper(u8),
    IsIn(u8, u8),
    Holding(u8),
}

pub struct Rearrange {
    spec: RearrangeSpec,
    plate_names: Vec<String>,
    /// Object indices, fruits first, then by name.
    canonical: Vec<u8>,
    space: Enumerated<Config>,
    grammar: HashMap<String, Command>,
    goal_state: StateId,
}

impl Rearrange {
    pub fn new(spec: RearrangeSpec, cap: usize) -> Result<Self, EnvError> {
        let invalid = |m: String| EnvError::InvalidInstance(m);
        let np = spec.plates.len();
        if np > 64 || spec.objects.len() > 64 {
            return Err(invalid("too many plates or objects".into()));
        }
        if np == 0 && !spec.objects.is_empty() {
            return Err(invalid("objects need at least one plate".into()));
        }
        if np > 0 && spec.gripper >= np {
            return Err(invalid(format!("gripper plate {} out of range", spec.gripper)));
        }
        let plate_names: Vec<String> = spec
            .plates
            .iter()
            .map(|p| format!("{} {} plate", p.color.trim().to_lowercase(), p.shape.trim().to_lowercase()))
            .collect();
        for (i, n) in plate_names.iter().enumerate() {
            if plate_names[..i].contains(n) {
                return Err(invalid(format!("duplicate plate {n}")));
            }
        }
        for (i, o) in spec.objects.iter().enumerate() {
            if o.name.trim().is_empty() || spec.objects[..i].iter().any(|p| p.name == o.name) {
                return Err(invalid(format!("bad or duplicate object name {:?}", o.name)));
            }
            if o.plate >= np || o.goal >= np {
                return Err(invalid(format!("object {} refers to a missing plate", o.name)));
            }
        }
        let mut canonical: Vec<u8> = (0..spec.objects.len() as u8).collect();
        canonical.sort_by(|&a, &b| {
            let (a, b) = (&spec.objects[a as usize], &spec.objects[b as usize]);
            (a.kind, &a.name).cmp(&(b.kind, &b.name))
        });
        let n = spec.objects.len();
        let initial = Config {
            gripper: spec.gripper as u8,
            locs: spec.objects.iter().map(|o| o.plate as u8).collect(),
        };
        let space = Enumerated::build(initial.clone(), n + 4, cap, |c, a| transition(c, a, np, n))?;
        let goal_cfg = Config { gripper: initial.gripper, locs: spec.objects.iter().map(|o| o.goal as u8).collect() };
        let goal_state = space
            .id(&goal_cfg)
            .ok_or_else(|| invalid("goal arrangement is unreachable".into()))?;
        let mut env = Self { spec, plate_names, canonical, space, grammar: HashMap::new(), goal_state };
        env.grammar = env.build_grammar();
        Ok(env)
    }

    pub fn spec(&self) -> &RearrangeSpec {
        &self.spec
    }

    /// The level-0 task goal: an image of the goal arrangement.
    pub fn task_goal(&self) -> Goal {
        Goal::target_only(self.goal_state, 0)
    }

    pub fn goal_state(&self) -> StateId {
        self.goal_state
    }

    fn cfg(&self, s: StateId) -> &Config {
        self.space.get(s).expect("state belongs to this environment")
    }

    fn n_objects(&self) -> usize {
        self.spec.objects.len()
    }

    fn obj(&self, o: u8) -> &str {
        &self.spec.objects[o as usize].name
    }

    fn plate(&self, p: u8) -> &str {
        &self.plate_names[p as usize]
    }

    fn render(&self, cmd: Command) -> String {
        match cmd {
            Command::Rearrange => "rearrange the objects".into(),
            Command::Move(o, p) => format!("pick up the {} and place it in {}", self.obj(o), self.plate(p)),
            Command::PickIn(o, p) => format!("pick up {} in {}", self.obj(o), self.plate(p)),
            Command::PlaceIn(p) => format!("place it in {}", self.plate(p)),
            Command::MoveGripper(p) => format!("move the gripper to {}", self.plate(p)),
            Command::IsIn(o, p) => format!("the {} is in {}", self.obj(o), self.plate(p)),
            Command::Holding(o) => format!("holding the {}", self.obj(o)),
        }
    }

    fn build_grammar(&self) -> HashMap<String, Command> {
        let np = self.plate_names.len() as u8;
        let no = self.n_objects() as u8;
        let mut cmds = vec![Command::Rearrange];
        for p in 0..np {
            cmds.extend([Command::PlaceIn(p), Command::MoveGripper(p)]);
            for o in 0..no {
                cmds.extend([Command::Move(o, p), Command::PickIn(o, p), Command::IsIn(o, p)]);
            }
        }
        cmds.extend((0..no).map(Command::Holding));
        cmds.into_iter().map(|c| (normalize_descriptor(&self.render(c)), c)).collect()
    }

    fn parse(&self, text: &str) -> Result<Command, EnvError> {
        self.grammar
            .get(&normalize_descriptor(text))
            .copied()
            .ok_or_else(|| EnvError::UnparseableInstruction(text.to_string()))
    }

    fn holds(&self, cmd: Command, c: &Config) -> bool {
        match cmd {
            Command::Rearrange => c.locs.iter().zip(&self.spec.objects).all(|(&l, o)| l as usize == o.goal),
            Command::Move(o, p) | Command::IsIn(o, p) => c.locs[o as usize] == p,
            Command::PickIn(o, _) | Command::Holding(o) => c.locs[o as usize] == HELD,
            Command::PlaceIn(p) => c.held().is_none() && c.gripper == p,
            Command::MoveGripper(p) => c.gripper == p,
        }
    }

    fn compile(&self, goal: &Goal) -> Result<impl Fn(&Config) -> bool + '_, EnvError> {
        let cmd = goal.instruction().map(|t| self.parse(t)).transpose()?;
        let target = goal
            .target_state()
            .map(|s| self.space.get(s).cloned().ok_or(EnvError::UnknownState(s)))
            .transpose()?;
        Ok(move |c: &Config| {
            cmd.is_none_or(|cmd| self.holds(cmd, c)) && target.as_ref().is_none_or(|t| t.locs == c.locs)
        })
    }

    fn applicable(&self, c: &Config, cmd: Command) -> bool {
        let empty = c.held().is_none();
        match cmd {
            Command::Move(o, p) => empty && c.locs[o as usize] != p,
            Command::PickIn(o, p) => empty && c.locs[o as usize] == p,
            Command::PlaceIn(_) => !empty,
            Command::MoveGripper(p) => c.gripper != p,
            Command::Rearrange | Command::IsIn(..) | Command::Holding(_) => false,
        }
    }

    fn macro_actions(&self, c: &Config, cmd: Command) -> Vec<u16> {
        let n = self.n_objects() as u16;
        let release = n + 2;
        let mut at = c.gripper;
        let mut out = Vec::new();
        let mut go = |to: u8, out: &mut Vec<u16>| {
            while at != to {
                if to < at {
                    at -= 1;
                    out.push(LEFT);
                } else {
                    at += 1;
                    out.push(RIGHT);
                }
            }
        };
        match cmd {
            Command::Move(o, p) => {
                go(c.locs[o as usize], &mut out);
                out.push(2 + o as u16);
                go(p, &mut out);
                out.push(release);
            }
            Command::PickIn(o, p) => {
                go(p, &mut out);
                out.push(2 + o as u16);
            }
            Command::PlaceIn(p) => {
                go(p, &mut out);
                out.push(release);
            }
            Command::MoveGripper(p) => go(p, &mut out),
            Command::Rearrange | Command::IsIn(..) | Command::Holding(_) => {}
        }
        out
    }

    fn all_skills(&self) -> Vec<Command> {
        let np = self.plate_names.len() as u8;
        let mut out = Vec::new();
        for &o in &self.canonical {
            out.extend((0..np).map(|p| Command::Move(o, p)));
            out.extend((0..np).map(|p| Command::PickIn(o, p)));
        }
        out.extend((0..np).map(Command::PlaceIn));
        out.extend((0..np).map(Command::MoveGripper));
        out
    }

    fn descriptor(&self, cmd: Command) -> SubgoalDescriptor {
        SubgoalDescriptor::new(self.render(cmd))
    }

    fn condition(&self, cmd: Command, level: u32) -> Goal {
        Goal::instruction_only(self.render(cmd), level).expect("non-empty")
    }

    fn arrangement_boundaries(&self, state: &Config, target: &[u8], level: u32) -> Vec<Boundary> {
        let initial = self.cfg(self.initial_state());
        self.canonical
            .iter()
            .filter(|&&o| initial.locs[o as usize] != target[o as usize] || state.locs[o as usize] != target[o as usize])
            .map(|&o| Boundary {
                descriptor: self.descriptor(Command::Move(o, target[o as usize])),
                condition: self.condition(Command::IsIn(o, target[o as usize]), level),
            })
            .collect()
    }

    /// Length of the longest atomic pick/place macro over all states.
    fn longest_atomic_macro(&self) -> usize {
        let cmds: Vec<Command> = self
            .all_skills()
            .into_iter()
            .filter(|c| matches!(c, Command::PickIn(..) | Command::PlaceIn(_)))
            .collect();
        self.space
            .states
            .iter()
            .flat_map(|c| cmds.iter().filter(|&&cmd| self.applicable(c, cmd)).map(|&cmd| self.macro_actions(c, cmd).len()))
            .max()
            .unwrap_or(0)
    }

    /// Plate index under each object in `state`; `None` for the held object.
    pub fn locations(&self, state: StateId) -> Vec<Option<usize>> {
        self.cfg(state).locs.iter().map(|&l| (l != HELD).then_some(l as usize)).collect()
    }
}

fn transition(c: &Config, a: usize, np: usize, n: usize) -> Config {
    let mut next = c.clone();
    if a == LEFT as usize {
        next.gripper = c.gripper.saturating_sub(1);
    } else if a == RIGHT as usize {
        if (c.gripper as usize) + 1 < np {
            next.gripper += 1;
        }
    } else if a < 2 + n {
        let o = a - 2;
        if c.held().is_none() && c.locs[o] == c.gripper {
            next.locs[o] = HELD;
        }
    } else if a == 2 + n {
        if let Some(o) = c.held() {
            next.locs[o as usize] = c.gripper;
        }
    }
    next
}

impl EnvironmentModel for Rearrange {
    fn name(&self) -> &str {
        "rearrange"
    }

    fn num_states(&self) -> usize {
        self.space.states.len()
    }

    fn num_actions(&self) -> usize {
        self.n_objects() + 4
    }

    fn action_name(&self, action: ActionId) -> String {
        let n = self.n_objects();
        match action.index() {
            0 => "left".into(),
            1 => "right".into(),
            a if a < 2 + n => format!("grip {}", self.obj((a - 2) as u8)),
            a if a == 2 + n => "release".into(),
            a if a == 3 + n => "wait".into(),
            _ => "invalid".into(),
        }
    }

    fn step(&self, state: StateId, action: ActionId) -> StateId {
        self.space.step(state, action)
    }

    fn initial_state(&self) -> StateId {
        StateId(0)
    }

    fn noop_action(&self) -> ActionId {
        ActionId(self.n_objects() as u16 + 3)
    }

    fn satisfied(&self, state: StateId, goal: &Goal) -> Result<bool, EnvError> {
        let c = self.space.get(state).ok_or(EnvError::UnknownState(state))?;
        Ok(self.compile(goal)?(c))
    }

    fn goal_mask(&self, goal: &Goal) -> Result<Vec<bool>, EnvError> {
        let p = self.compile(goal)?;
        Ok(self.space.states.iter().map(p).collect())
    }

    fn render_state(&self, state: StateId) -> String {
        let Some(c) = self.space.get(state) else {
            return format!("unknown {state}");
        };
        let mut parts = Vec::new();
        for (i, name) in self.plate_names.iter().enumerate() {
            let on: Vec<&str> = (0..self.n_objects() as u8)
                .filter(|&o| c.locs[o as usize] == i as u8)
                .map(|o| self.obj(o))
                .collect();
            let mark = if c.gripper as usize == i { "*" } else { "" };
            parts.push(format!("{mark}{name}: [{}]", on.join(", ")));
        }
        if let Some(o) = c.held() {
            parts.push(format!("holding {}", self.obj(o)));
        }
        parts.join("; ")
    }
}

impl SkillLibrary for Rearrange {
    fn applicable_skills(&self, state: StateId) -> Vec<SubgoalDescriptor> {
        let c = self.cfg(state);
        self.all_skills()
            .into_iter()
            .filter(|&cmd| self.applicable(c, cmd))
            .map(|cmd| self.descriptor(cmd))
            .collect()
    }

    fn run_skill(
        &self,
        state: StateId,
        descriptor: &SubgoalDescriptor,
    ) -> Result<Vec<(ActionId, StateId)>, EnvError> {
        let c = self.space.get(state).ok_or(EnvError::UnknownState(state))?;
        let cmd = self.parse(descriptor.text())?;
        if !self.applicable(c, cmd) {
            return Err(EnvError::SkillInapplicable { descriptor: descriptor.text().into(), state });
        }
        Ok(replay(self, state, self.macro_actions(c, cmd).into_iter().map(ActionId)))
    }

    fn hierarchy_boundaries(&self, state: StateId, goal: &Goal) -> Result<Vec<Boundary>, EnvError> {
        let c = self.space.get(state).ok_or(EnvError::UnknownState(state))?;
        let level = goal.level() + 1;
        let Some(text) = goal.instruction() else {
            let target = goal.target_state().expect("non-vacuous goal");
            let t = self.space.get(target).ok_or(EnvError::UnknownState(target))?;
            if t.held().is_some() {
                return Err(EnvError::NoDecomposition(goal.to_string()));
            }
            return Ok(self.arrangement_boundaries(c, &t.locs.clone(), level));
        };
        match self.parse(text)? {
            Command::Rearrange => {
                let target: Vec<u8> = self.spec.objects.iter().map(|o| o.goal as u8).collect();
                Ok(self.arrangement_boundaries(c, &target, level))
            }
            Command::Move(o, p) => {
                let from = match c.locs[o as usize] {
                    HELD => self.cfg(self.initial_state()).locs[o as usize],
                    l => l,
                };
                Ok(vec![
                    Boundary {
                        descriptor: self.descriptor(Command::PickIn(o, from)),
                        condition: self.condition(Command::Holding(o), level),
                    },
                    Boundary {
                        descriptor: self.descriptor(Command::PlaceIn(p)),
                        condition: self.condition(Command::IsIn(o, p), level),
                    },
                ])
            }
            _ => Err(EnvError::NoDecomposition(text.into())),
        }
    }

    fn longest_atomic_skill(&self) -> usize {
        self.longest_atomic_macro()
    }

    fn corrupt_descriptor(
        &self,
        state: StateId,
        descriptor: &SubgoalDescriptor,
        rng: &mut ChaCha8Rng,
    ) -> Option<SubgoalDescriptor> {
        let c = self.cfg(state);
        let cmd = self.parse(descriptor.text()).ok()?;
        let swap = |u: u8| match cmd {
            Command::Move(_, p) => Some(Command::Move(u, p)),
            Command::PickIn(_, _) => Some(Command::PickIn(u, c.locs[u as usize])),
            _ => None,
        };
        let own = match cmd {
            Command::Move(o, _) | Command::PickIn(o, _) => Some(o),
            _ => None,
        };
        if let Some(o) = own {
            let cands: Vec<Command> = (0..self.n_objects() as u8)
                .filter(|&u| u != o)
                .filter_map(swap)
                .filter(|&x| self.applicable(c, x))
                .collect();
            if let Some(&x) = cands.choose(rng) {
                return Some(self.descriptor(x));
            }
        }
        let honest = self.skill_outcome(state, descriptor).ok();
        let others: Vec<SubgoalDescriptor> = self
            .applicable_skills(state)
            .into_iter()
            .filter(|d| !d.equivalent(descriptor) && self.skill_outcome(state, d).ok() != honest)
            .collect();
        others.choose(rng).cloned()
    }
}
