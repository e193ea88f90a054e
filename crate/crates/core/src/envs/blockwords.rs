//! Spell-words block world.
//!
//! Letter tiles rest on home cells of a grid; the word is built left to right
//! in a row of slot cells. Slots fill as a stack: a block can only be
//! released into the leftmost empty slot and only the rightmost placed block
//! can be picked back up. The gripper moves one cell per step.
//!
//! Primitive actions, in order: up, down, left, right, grip, release, wait.
//! Target-state goals compare the held block and the slot contents; the
//! gripper cell is not part of the goal-relevant projection.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{grid_route, replay, Boundary, Enumerated, SkillLibrary};
use crate::anticipation::{normalize_descriptor, SubgoalDescriptor};
use crate::gmdp::{ActionId, EnvError, EnvironmentModel, Goal, StateId};

const GRIP: usize = 4;
const RELEASE: usize = 5;
const WAIT: usize = 6;
const NUM_ACTIONS: usize = 7;
const NONE: u8 = u8::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub letter: char,
    /// `[row, column]`
    pub home: [u8; 2],
}

/// Serializable description of one block-world instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockWordsSpec {
    /// `[rows, columns]`
    pub grid: [u8; 2],
    pub word: String,
    pub tiles: Vec<TileSpec>,
    /// Slot cells, left to right. One per word letter.
    pub slots: Vec<[u8; 2]>,
    pub gripper: [u8; 2],
    /// Letters already placed in the slots at the start, left to right.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub placed: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Config {
    gripper: u8,
    held: u8,
    slots: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Command {
    PlaceLetterOnTable(u8),
    PlaceLetterRight(u8),
    Pick(u8),
    PlaceOnTable,
    PlaceRight,
    PutBack(u8),
    MoveTo(u8),
    InSlot(u8, u8),
    Holding(u8),
    Spell,
}

enum Predicate {
    Spell(Vec<u8>),
    Command(Command),
}

pub struct BlockWords {
    spec: BlockWordsSpec,
    rows: u8,
    cols: u8,
    letters: Vec<char>,
    homes: Vec<u8>,
    slot_cells: Vec<u8>,
    word_tiles: Vec<u8>,
    space: Enumerated<Config>,
    grammar: HashMap<String, Command>,
}

impl BlockWords {
    pub fn new(spec: BlockWordsSpec, cap: usize) -> Result<Self, EnvError> {
        let invalid = |m: String| EnvError::InvalidInstance(m);
        let [rows, cols] = spec.grid;
        if rows == 0 || cols == 0 || rows > 16 || cols > 16 {
            return Err(invalid(format!("grid {rows}x{cols} out of range")));
        }
        let cell = |rc: [u8; 2]| -> Result<u8, EnvError> {
            if rc[0] < rows && rc[1] < cols {
                Ok(rc[0] * cols + rc[1])
            } else {
                Err(EnvError::InvalidInstance(format!("cell {rc:?} outside {rows}x{cols} grid")))
            }
        };
        let letters: Vec<char> = spec.tiles.iter().map(|t| t.letter.to_ascii_uppercase()).collect();
        if letters.iter().any(|c| !c.is_ascii_uppercase()) {
            return Err(invalid("tile letters must be A-Z".into()));
        }
        for (i, l) in letters.iter().enumerate() {
            if letters[..i].contains(l) {
                return Err(invalid(format!("duplicate tile letter {l}")));
            }
        }
        let homes = spec.tiles.iter().map(|t| cell(t.home)).collect::<Result<Vec<_>, _>>()?;
        let slot_cells = spec.slots.iter().map(|&s| cell(s)).collect::<Result<Vec<_>, _>>()?;
        let mut used: Vec<u8> = homes.iter().chain(&slot_cells).copied().collect();
        used.sort_unstable();
        if used.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("home and slot cells must be distinct".into()));
        }
        let tile_of = |c: char| letters.iter().position(|&l| l == c.to_ascii_uppercase()).map(|i| i as u8);
        let word_tiles = spec
            .word
            .chars()
            .map(|c| tile_of(c).ok_or_else(|| invalid(format!("word letter {c} has no tile"))))
            .collect::<Result<Vec<_>, _>>()?;
        if word_tiles.is_empty() {
            return Err(invalid("empty word".into()));
        }
        for (i, t) in word_tiles.iter().enumerate() {
            if word_tiles[..i].contains(t) {
                return Err(invalid("word letters must be distinct".into()));
            }
        }
        if slot_cells.len() != word_tiles.len() {
            return Err(invalid(format!(
                "{} slots for a {}-letter word",
                slot_cells.len(),
                word_tiles.len()
            )));
        }
        let placed = spec
            .placed
            .chars()
            .map(|c| tile_of(c).ok_or_else(|| invalid(format!("placed letter {c} has no tile"))))
            .collect::<Result<Vec<_>, _>>()?;
        if placed.len() > slot_cells.len() {
            return Err(invalid("more placed letters than slots".into()));
        }
        let initial = Config { gripper: cell(spec.gripper)?, held: NONE, slots: placed };
        let n_slots = slot_cells.len();
        let space = {
            let homes = homes.clone();
            let slot_cells = slot_cells.clone();
            Enumerated::build(initial, NUM_ACTIONS, cap, |c, a| {
                transition(c, a, rows, cols, &homes, &slot_cells, n_slots)
            })?
        };
        let mut env = Self {
            rows,
            cols,
            letters,
            homes,
            slot_cells,
            word_tiles,
            space,
            grammar: HashMap::new(),
            spec,
        };
        env.grammar = env.build_grammar();
        Ok(env)
    }

    pub fn spec(&self) -> &BlockWordsSpec {
        &self.spec
    }

    pub fn word(&self) -> String {
        self.word_tiles.iter().map(|&t| self.letters[t as usize]).collect()
    }

    /// The level-0 task goal.
    pub fn task_goal(&self) -> Goal {
        Goal::instruction_only(spell_text(&self.word()), 0).expect("non-empty")
    }

    fn cfg(&self, s: StateId) -> &Config {
        self.space.get(s).expect("state belongs to this environment")
    }

    fn cell_rc(&self, cell: u8) -> (u8, u8) {
        (cell / self.cols, cell % self.cols)
    }

    fn tile_at_home(&self, c: &Config, t: u8) -> bool {
        c.held != t && !c.slots.contains(&t)
    }

    fn render(&self, cmd: Command) -> String {
        let l = |t: u8| self.letters[t as usize];
        match cmd {
            Command::PlaceLetterOnTable(t) => format!("place the block with letter <{}> on the table", l(t)),
            Command::PlaceLetterRight(t) => {
                format!("place the block with letter <{}> to the right of the previous block", l(t))
            }
            Command::Pick(t) => format!("pick up the block with letter: <{}>", l(t)),
            Command::PlaceOnTable => "place the block on the table".into(),
            Command::PlaceRight => "place the current block to the right of the previous block".into(),
            Command::PutBack(t) => format!("put the block with letter <{}> back", l(t)),
            Command::MoveTo(cell) => {
                let (r, c) = self.cell_rc(cell);
                format!("move the gripper to row <{r}> column <{c}>")
            }
            Command::InSlot(t, k) => format!("letter <{}> in slot <{}>", l(t), k + 1),
            Command::Holding(t) => format!("holding the block with letter <{}>", l(t)),
            Command::Spell => spell_text(&self.word()),
        }
    }

    fn build_grammar(&self) -> HashMap<String, Command> {
        let mut cmds = vec![Command::PlaceOnTable, Command::PlaceRight];
        for t in 0..self.letters.len() as u8 {
            cmds.extend([
                Command::PlaceLetterOnTable(t),
                Command::PlaceLetterRight(t),
                Command::Pick(t),
                Command::PutBack(t),
                Command::Holding(t),
            ]);
            for k in 0..self.slot_cells.len() as u8 {
                cmds.push(Command::InSlot(t, k));
            }
        }
        for cell in 0..self.rows * self.cols {
            cmds.push(Command::MoveTo(cell));
        }
        cmds.into_iter().map(|c| (normalize_descriptor(&self.render(c)), c)).collect()
    }

    fn parse(&self, text: &str) -> Result<Predicate, EnvError> {
        let norm = normalize_descriptor(text);
        if let Some(cmd) = self.grammar.get(&norm) {
            return Ok(Predicate::Command(*cmd));
        }
        if let Some(rest) = norm.strip_prefix("spell the word") {
            let rest = rest.trim_start_matches([':', ' ']);
            let word = rest.strip_suffix(" using the blocks on the table").unwrap_or(rest);
            let word = word.trim_matches(|c| c == '<' || c == '>');
            if !word.is_empty() && word.chars().all(|c| c.is_ascii_alphabetic()) {
                let tiles = word
                    .chars()
                    .map(|c| {
                        self.letters
                            .iter()
                            .position(|&l| l == c.to_ascii_uppercase())
                            .map_or(NONE, |i| i as u8)
                    })
                    .collect();
                return Ok(Predicate::Spell(tiles));
            }
        }
        Err(EnvError::UnparseableInstruction(text.to_string()))
    }

    fn parse_command(&self, text: &str) -> Result<Command, EnvError> {
        match self.parse(text)? {
            Predicate::Command(c) => Ok(c),
            Predicate::Spell(_) => Ok(Command::Spell),
        }
    }

    fn holds(&self, pred: &Predicate, c: &Config) -> bool {
        match pred {
            Predicate::Spell(tiles) => c.slots == *tiles,
            Predicate::Command(cmd) => match *cmd {
                Command::PlaceLetterOnTable(t) => c.slots.first() == Some(&t),
                // Context-free: the skill appends after whatever is placed.
                Command::PlaceLetterRight(t) => c.slots.iter().skip(1).any(|&x| x == t),
                Command::Pick(t) | Command::Holding(t) => c.held == t,
                Command::PlaceOnTable => c.held == NONE && !c.slots.is_empty(),
                Command::PlaceRight => c.held == NONE && c.slots.len() >= 2,
                Command::PutBack(t) => self.tile_at_home(c, t),
                Command::MoveTo(cell) => c.gripper == cell,
                Command::InSlot(t, k) => c.slots.get(k as usize) == Some(&t),
                Command::Spell => c.slots == self.word_tiles,
            },
        }
    }

    fn compile(&self, goal: &Goal) -> Result<impl Fn(&Config) -> bool + '_, EnvError> {
        let pred = goal.instruction().map(|t| self.parse(t)).transpose()?;
        let target = goal.target_state().map(|s| self.space.get(s).cloned().ok_or(EnvError::UnknownState(s)));
        let target = target.transpose()?;
        Ok(move |c: &Config| {
            pred.as_ref().is_none_or(|p| self.holds(p, c))
                && target.as_ref().is_none_or(|t| t.held == c.held && t.slots == c.slots)
        })
    }

    fn applicable(&self, c: &Config, cmd: Command) -> bool {
        let n = c.slots.len();
        match cmd {
            Command::Pick(t) => {
                c.held == NONE && (self.tile_at_home(c, t) || c.slots.last() == Some(&t))
            }
            Command::PlaceOnTable => c.held != NONE && n == 0,
            Command::PlaceRight => c.held != NONE && n >= 1 && n < self.slot_cells.len(),
            Command::PutBack(t) => c.held == t,
            Command::MoveTo(cell) => c.gripper != cell,
            Command::PlaceLetterOnTable(t) => c.held == NONE && n == 0 && self.tile_at_home(c, t),
            Command::PlaceLetterRight(t) => {
                c.held == NONE && n >= 1 && n < self.slot_cells.len() && self.tile_at_home(c, t)
            }
            Command::InSlot(..) | Command::Holding(_) | Command::Spell => false,
        }
    }

    fn pick_cell(&self, c: &Config, t: u8) -> u8 {
        if self.tile_at_home(c, t) {
            self.homes[t as usize]
        } else {
            self.slot_cells[c.slots.len() - 1]
        }
    }

    /// Action macro of an applicable skill.
    fn macro_actions(&self, c: &Config, cmd: Command) -> Vec<usize> {
        let mut out = Vec::new();
        let mut at = c.gripper;
        let mut go = |to: u8, out: &mut Vec<usize>| {
            out.extend(grid_route(self.cell_rc(at), self.cell_rc(to)));
            at = to;
        };
        let n = c.slots.len();
        match cmd {
            Command::Pick(t) => {
                go(self.pick_cell(c, t), &mut out);
                out.push(GRIP);
            }
            Command::PlaceOnTable | Command::PlaceRight => {
                go(self.slot_cells[n], &mut out);
                out.push(RELEASE);
            }
            Command::PutBack(t) => {
                go(self.homes[t as usize], &mut out);
                out.push(RELEASE);
            }
            Command::MoveTo(cell) => go(cell, &mut out),
            Command::PlaceLetterOnTable(t) | Command::PlaceLetterRight(t) => {
                go(self.homes[t as usize], &mut out);
                out.push(GRIP);
                go(self.slot_cells[n], &mut out);
                out.push(RELEASE);
            }
            Command::InSlot(..) | Command::Holding(_) | Command::Spell => {}
        }
        out
    }

    fn all_skills(&self) -> impl Iterator<Item = Command> + '_ {
        let letters = 0..self.letters.len() as u8;
        letters
            .clone()
            .flat_map(|t| [Command::PlaceLetterOnTable(t), Command::PlaceLetterRight(t), Command::Pick(t), Command::PutBack(t)])
            .chain([Command::PlaceOnTable, Command::PlaceRight])
            .chain((0..self.rows * self.cols).map(Command::MoveTo))
    }

    fn descriptor(&self, cmd: Command) -> SubgoalDescriptor {
        SubgoalDescriptor::new(self.render(cmd))
    }

    fn condition(&self, cmd: Command, level: u32) -> Goal {
        Goal::instruction_only(self.render(cmd), level).expect("non-empty")
    }

    fn spell_boundaries(&self, tiles: &[u8], level: u32) -> Vec<Boundary> {
        tiles
            .iter()
            .enumerate()
            .map(|(i, &t)| Boundary {
                descriptor: self.descriptor(if i == 0 {
                    Command::PlaceLetterOnTable(t)
                } else {
                    Command::PlaceLetterRight(t)
                }),
                condition: self.condition(Command::InSlot(t, i as u8), level),
            })
            .collect()
    }
}

pub fn spell_text(word: &str) -> String {
    format!("spell the word: {word} using the blocks on the table")
}

fn transition(c: &Config, a: usize, rows: u8, cols: u8, homes: &[u8], slots: &[u8], n_slots: usize) -> Config {
    let mut next = c.clone();
    let (r, col) = (c.gripper / cols, c.gripper % cols);
    match a {
        0 if r > 0 => next.gripper -= cols,
        1 if r + 1 < rows => next.gripper += cols,
        2 if col > 0 => next.gripper -= 1,
        3 if col + 1 < cols => next.gripper += 1,
        GRIP if c.held == NONE => {
            let at_home = (0..homes.len() as u8)
                .find(|&t| homes[t as usize] == c.gripper && !c.slots.contains(&t));
            if let Some(t) = at_home {
                next.held = t;
            } else if !c.slots.is_empty() && slots[c.slots.len() - 1] == c.gripper {
                next.held = next.slots.pop().expect("non-empty");
            }
        }
        RELEASE if c.held != NONE => {
            if homes[c.held as usize] == c.gripper {
                next.held = NONE;
            } else if c.slots.len() < n_slots && slots[c.slots.len()] == c.gripper {
                next.slots.push(c.held);
                next.held = NONE;
            }
        }
        _ => {}
    }
    next
}

impl EnvironmentModel for BlockWords {
    fn name(&self) -> &str {
        "blockwords"
    }

    fn num_states(&self) -> usize {
        self.space.states.len()
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn action_name(&self, action: ActionId) -> String {
        ["up", "down", "left", "right", "grip", "release", "wait"]
            .get(action.index())
            .unwrap_or(&"invalid")
            .to_string()
    }

    fn step(&self, state: StateId, action: ActionId) -> StateId {
        self.space.step(state, action)
    }

    fn initial_state(&self) -> StateId {
        StateId(0)
    }

    fn noop_action(&self) -> ActionId {
        ActionId(WAIT as u16)
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
        let (r, col) = self.cell_rc(c.gripper);
        let held = if c.held == NONE { '-' } else { self.letters[c.held as usize] };
        let slots: String = (0..self.slot_cells.len())
            .map(|i| c.slots.get(i).map_or('_', |&t| self.letters[t as usize]))
            .collect();
        format!("gripper ({r},{col}) holding {held} slots [{slots}]")
    }
}

impl SkillLibrary for BlockWords {
    fn applicable_skills(&self, state: StateId) -> Vec<SubgoalDescriptor> {
        let c = self.cfg(state);
        self.all_skills()
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
        let cmd = self.parse_command(descriptor.text())?;
        if !self.applicable(c, cmd) {
            return Err(EnvError::SkillInapplicable { descriptor: descriptor.text().into(), state });
        }
        let actions = self.macro_actions(c, cmd).into_iter().map(|a| ActionId(a as u16));
        Ok(replay(self, state, actions))
    }

    fn hierarchy_boundaries(&self, state: StateId, goal: &Goal) -> Result<Vec<Boundary>, EnvError> {
        let c = self.space.get(state).ok_or(EnvError::UnknownState(state))?;
        let level = goal.level() + 1;
        let Some(text) = goal.instruction() else {
            let target = goal.target_state().expect("non-vacuous goal");
            let tc = self.space.get(target).ok_or(EnvError::UnknownState(target))?;
            return Ok(self.spell_boundaries(&tc.slots, level));
        };
        match self.parse(text)? {
            Predicate::Spell(tiles) => {
                if tiles.contains(&NONE) {
                    return Err(EnvError::NoDecomposition(text.into()));
                }
                Ok(self.spell_boundaries(&tiles, level))
            }
            Predicate::Command(Command::Spell) => Ok(self.spell_boundaries(&self.word_tiles.clone(), level)),
            Predicate::Command(Command::PlaceLetterOnTable(t)) => Ok(vec![
                Boundary { descriptor: self.descriptor(Command::Pick(t)), condition: self.condition(Command::Holding(t), level) },
                Boundary {
                    descriptor: self.descriptor(Command::PlaceOnTable),
                    condition: self.condition(Command::InSlot(t, 0), level),
                },
            ]),
            Predicate::Command(Command::PlaceLetterRight(t)) => {
                // The slot the letter lands in when appended from here.
                let placed = c.slots.len() - usize::from(c.slots.last() == Some(&t));
                let k = placed.max(1) as u8;
                Ok(vec![
                    Boundary { descriptor: self.descriptor(Command::Pick(t)), condition: self.condition(Command::Holding(t), level) },
                    Boundary {
                        descriptor: self.descriptor(Command::PlaceRight),
                        condition: self.condition(Command::InSlot(t, k), level),
                    },
                ])
            }
            Predicate::Command(_) => Err(EnvError::NoDecomposition(text.into())),
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
        let swapped = |t: u8| -> Vec<Command> {
            let rebuild = |u: u8| match self.parse_command(descriptor.text()).ok()? {
                Command::Pick(_) => Some(Command::Pick(u)),
                Command::PutBack(_) => Some(Command::PutBack(u)),
                Command::PlaceLetterOnTable(_) => Some(Command::PlaceLetterOnTable(u)),
                Command::PlaceLetterRight(_) => Some(Command::PlaceLetterRight(u)),
                _ => None,
            };
            (0..self.letters.len() as u8)
                .filter(|&u| u != t)
                .filter_map(rebuild)
                .filter(|&cmd| self.applicable(c, cmd))
                .collect()
        };
        let letter = match self.parse_command(descriptor.text()).ok()? {
            Command::Pick(t) | Command::PutBack(t) | Command::PlaceLetterOnTable(t) | Command::PlaceLetterRight(t) => Some(t),
            _ => None,
        };
        if let Some(t) = letter {
            if let Some(&cmd) = swapped(t).choose(rng) {
                return Some(self.descriptor(cmd));
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

impl BlockWords {
    /// State id of a configuration described by gripper cell, held letter and
    /// slot contents. Test and generator helper.
    pub fn find_state(&self, gripper: [u8; 2], held: Option<char>, slots: &str) -> Option<StateId> {
        let tile = |c: char| self.letters.iter().position(|&l| l == c).map(|i| i as u8);
        let cfg = Config {
            gripper: gripper[0] * self.cols + gripper[1],
            held: match held {
                Some(c) => tile(c)?,
                None => NONE,
            },
            slots: slots.chars().map(tile).collect::<Option<Vec<_>>>()?,
        };
        self.space.id(&cfg)
    }

    /// Letter held in `state`, if any.
    pub fn held_letter(&self, state: StateId) -> Option<char> {
        let c = self.cfg(state);
        (c.held != NONE).then(|| self.letters[c.held as usize])
    }

    /// Slot contents of `state`, left to right.
    pub fn slot_letters(&self, state: StateId) -> String {
        self.cfg(state).slots.iter().map(|&t| self.letters[t as usize]).collect()
    }

    pub fn gripper_cell(&self, state: StateId) -> [u8; 2] {
        let (r, c) = self.cell_rc(self.cfg(state).gripper);
        [r, c]
    }

    /// Length of the longest atomic pick/place macro over all states.
    fn longest_atomic_macro(&self) -> usize {
        let atomic = |cmd: &Command| matches!(cmd, Command::Pick(_) | Command::PlaceOnTable | Command::PlaceRight | Command::PutBack(_));
        let cmds: Vec<Command> = self.all_skills().filter(atomic).collect();
        self.space
            .states
            .iter()
            .flat_map(|c| cmds.iter().filter(|&&cmd| self.applicable(c, cmd)).map(|&cmd| self.macro_actions(c, cmd).len()))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anticipation::describe_transition;

    pub(crate) fn cat() -> BlockWords {
        BlockWords::new(
            BlockWordsSpec {
                grid: [3, 3],
                word: "CAT".into(),
                tiles: vec![
                    TileSpec { letter: 'C', home: [0, 0] },
                    TileSpec { letter: 'A', home: [0, 2] },
                    TileSpec { letter: 'T', home: [1, 1] },
                ],
                slots: vec![[2, 0], [2, 1], [2, 2]],
                gripper: [1, 0],
                placed: String::new(),
            },
            100_000,
        )
        .unwrap()
    }

    #[test]
    fn minimal_instance_state_count() {
        let env = BlockWords::new(
            BlockWordsSpec {
                grid: [2, 2],
                word: "C".into(),
                tiles: vec![TileSpec { letter: 'C', home: [0, 0] }],
                slots: vec![[1, 0]],
                gripper: [0, 1],
                placed: String::new(),
            },
            1000,
        )
        .unwrap();
        // Tile at home, in the slot, or held; times four gripper cells.
        assert_eq!(env.num_states(), 3 * 4);
    }

    #[test]
    fn cat_state_count_matches_hand_count() {
        // Ordered slot prefixes of k distinct tiles times held choices among
        // the rest: k=0: 1*4, k=1: 3*3, k=2: 6*2, k=3: 6*1 = 31 configurations.
        assert_eq!(cat().num_states(), 31 * 9);
    }

    #[test]
    fn spell_predicate_respects_order() {
        let env = cat();
        let g = env.task_goal();
        let done = env.find_state([2, 2], None, "CAT").unwrap();
        assert!(env.satisfied(done, &g).unwrap());
        let wrong = env.find_state([2, 2], None, "ACT").unwrap();
        assert!(!env.satisfied(wrong, &g).unwrap());
        let short = Goal::instruction_only("spell the word: CAT", 0).unwrap();
        assert!(env.satisfied(done, &short).unwrap());
        assert!(env.satisfied(StateId(0), &Goal::instruction_only("gibberish", 0).unwrap()).is_err());
    }

    #[test]
    fn image_goal_ignores_gripper() {
        let env = cat();
        let a = env.find_state([2, 2], None, "CA").unwrap();
        let b = env.find_state([0, 1], None, "CA").unwrap();
        let g = Goal::target_only(a, 0);
        assert!(env.satisfied(b, &g).unwrap());
        let c = env.find_state([0, 1], Some('T'), "CA").unwrap();
        assert!(!env.satisfied(c, &g).unwrap());
    }

    #[test]
    fn stack_discipline_of_slots() {
        let env = cat();
        let s = env.find_state([2, 1], Some('C'), "").unwrap();
        // Slot 2 is not the leftmost empty slot, release is a no-op.
        assert_eq!(env.step(s, ActionId(RELEASE as u16)), s);
        let s = env.find_state([2, 0], None, "CA").unwrap();
        // Only the rightmost placed block can be picked.
        assert_eq!(env.step(s, ActionId(GRIP as u16)), s);
    }

    #[test]
    fn descriptors_and_inverse() {
        let env = cat();
        let s0 = env.initial_state();
        let pick = SubgoalDescriptor::new("pick up the block with letter: <C>");
        let held = env.skill_outcome(s0, &pick).unwrap();
        assert_eq!(env.held_letter(held), Some('C'));
        assert_eq!(describe_transition(&env, s0, held).unwrap().text(), pick.text());
        let composite = SubgoalDescriptor::new("place the block with letter <C> on the table");
        let placed = env.skill_outcome(s0, &composite).unwrap();
        assert_eq!(env.slot_letters(placed), "C");
        assert_eq!(describe_transition(&env, s0, placed).unwrap().text(), composite.text());
    }

    #[test]
    fn hierarchy_of_spell_cat() {
        let env = cat();
        let b = env.hierarchy_boundaries(env.initial_state(), &env.task_goal()).unwrap();
        let texts: Vec<&str> = b.iter().map(|b| b.descriptor.text()).collect();
        assert_eq!(
            texts,
            [
                "place the block with letter <C> on the table",
                "place the block with letter <A> to the right of the previous block",
                "place the block with letter <T> to the right of the previous block",
            ]
        );
        let l1 = Goal::instruction_only(texts[0], 1).unwrap();
        let sub = env.hierarchy_boundaries(env.initial_state(), &l1).unwrap();
        let texts: Vec<&str> = sub.iter().map(|b| b.descriptor.text()).collect();
        assert_eq!(texts, ["pick up the block with letter: <C>", "place the block on the table"]);
        let atomic = Goal::instruction_only(texts[0], 2).unwrap();
        assert!(matches!(
            env.hierarchy_boundaries(env.initial_state(), &atomic),
            Err(EnvError::NoDecomposition(_))
        ));
    }

    #[test]
    fn rejects_bad_instances() {
        let mut spec = cat().spec().clone();
        spec.word = "CAX".into();
        assert!(BlockWords::new(spec, 1000).is_err());
        let mut spec = cat().spec().clone();
        spec.tiles[1].home = [2, 0];
        assert!(BlockWords::new(spec, 1000).is_err());
        let mut spec = cat().spec().clone();
        spec.slots.pop();
        assert!(BlockWords::new(spec, 1000).is_err());
        assert!(matches!(BlockWords::new(cat().spec().clone(), 10), Err(EnvError::Capacity { limit: 10 })));
    }
}
