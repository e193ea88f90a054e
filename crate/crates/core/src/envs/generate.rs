//! Seeded instance generators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::blockwords::{BlockWordsSpec, TileSpec};
use super::instance::{ChainSpec, InstanceSpec, NamedInstance, Suite};
use super::rearrange::{ObjectKind, ObjectSpec, PlateSpec, RearrangeSpec, COLORS, FRUITS, SHAPES, UTENSILS};

pub const WORDS_3: [&str; 12] = ["CAT", "DOG", "SUN", "MAP", "PEN", "CUP", "BOX", "HAT", "RED", "FLY", "JAM", "KEY"];
pub const WORDS_4: [&str; 12] =
    ["WORD", "FISH", "LAMP", "CRAB", "DUSK", "GOLD", "JUMP", "MILK", "PORT", "SLED", "WAND", "BLUE"];
pub const WORDS_5: [&str; 12] =
    ["PLANT", "CRISP", "BLOND", "STORM", "FROST", "CLIMB", "BRING", "GHOST", "TRAIN", "WORLD", "SHAPE", "QUERY"];

/// Grid used for a word of `len` letters.
pub fn blockwords_grid(len: usize) -> [u8; 2] {
    match len {
        0..=3 => [3, 3],
        4 => [4, 4],
        _ => [4, len.max(5) as u8],
    }
}

pub fn words(len: usize) -> &'static [&'static str] {
    match len {
        3 => &WORDS_3,
        4 => &WORDS_4,
        5 => &WORDS_5,
        _ => &[],
    }
}

/// One block-world instance: slots along the bottom row, tile homes and the
/// gripper at random free cells.
pub fn blockwords_spec(word: &str, rng: &mut ChaCha8Rng) -> BlockWordsSpec {
    let [rows, cols] = blockwords_grid(word.len());
    let slots: Vec<[u8; 2]> = (0..word.len() as u8).map(|c| [rows - 1, c]).collect();
    let mut free: Vec<[u8; 2]> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| [r, c]))
        .filter(|rc| !slots.contains(rc))
        .collect();
    free.shuffle(rng);
    let tiles = word.chars().zip(&free).map(|(letter, &home)| TileSpec { letter, home }).collect();
    let gripper = [rng.gen_range(0..rows), rng.gen_range(0..cols)];
    BlockWordsSpec { grid: [rows, cols], word: word.into(), tiles, slots, gripper, placed: String::new() }
}

/// `count` block-world instances with `len`-letter words, cycling through
/// the word list in a seeded order.
pub fn blockwords_suite(len: usize, count: usize, seed: u64) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list: Vec<&str> = words(len).to_vec();
    list.shuffle(&mut rng);
    let instances = (0..count)
        .filter_map(|i| {
            let word = *list.get(i % list.len().max(1))?;
            Some(NamedInstance {
                name: format!("bw{len}-{i:03}-{}", word.to_lowercase()),
                spec: InstanceSpec::Blockwords(blockwords_spec(word, &mut rng)),
            })
        })
        .collect();
    Suite::new(instances)
}

/// One rearrangement instance. Every object starts away from its goal plate.
pub fn rearrange_spec(objects: usize, plates: usize, rng: &mut ChaCha8Rng) -> RearrangeSpec {
    assert!(plates >= 2 && plates <= COLORS.len() * SHAPES.len(), "2..=8 plates");
    assert!(objects <= FRUITS.len() + UTENSILS.len(), "at most 8 objects");
    let mut looks: Vec<(usize, usize)> = (0..COLORS.len()).flat_map(|c| (0..SHAPES.len()).map(move |s| (c, s))).collect();
    looks.shuffle(rng);
    let plate_specs = looks[..plates]
        .iter()
        .map(|&(c, s)| PlateSpec { color: COLORS[c].into(), shape: SHAPES[s].into() })
        .collect();
    let mut pool: Vec<(&str, ObjectKind)> = FRUITS
        .iter()
        .map(|&n| (n, ObjectKind::Fruit))
        .chain(UTENSILS.iter().map(|&n| (n, ObjectKind::Utensil)))
        .collect();
    pool.shuffle(rng);
    let object_specs = pool[..objects]
        .iter()
        .map(|&(name, kind)| {
            let plate = rng.gen_range(0..plates);
            let goal = (plate + rng.gen_range(1..plates)) % plates;
            ObjectSpec { name: name.into(), kind, plate, goal }
        })
        .collect();
    RearrangeSpec { plates: plate_specs, objects: object_specs, gripper: rng.gen_range(0..plates) }
}

pub fn rearrange_suite(objects: usize, plates: usize, count: usize, seed: u64) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..count)
        .map(|i| NamedInstance {
            name: format!("re{objects}x{plates}-{i:03}"),
            spec: InstanceSpec::Rearrange(rearrange_spec(objects, plates, &mut rng)),
        })
        .collect();
    Suite::new(instances)
}

/// Chains with distinct start and goal; `length` must be at least 2.
pub fn chain_suite(length: u32, count: usize, seed: u64) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..count)
        .map(|i| {
            let start = rng.gen_range(0..length);
            // Shift past the start so the task is never satisfied at reset.
            let goal = (start + rng.gen_range(1..length.max(2))) % length;
            NamedInstance { name: format!("chain{length}-{i:03}"), spec: InstanceSpec::Chain(ChainSpec { length, start, goal }) }
        })
        .collect();
    Suite::new(instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_lists_have_distinct_letters() {
        for len in 3..=5 {
            for w in words(len) {
                assert_eq!(w.len(), len);
                let mut c: Vec<char> = w.chars().collect();
                c.sort_unstable();
                c.dedup();
                assert_eq!(c.len(), len, "{w}");
            }
        }
    }

    #[test]
    fn generated_suites_build_and_are_seeded() {
        for len in 3..=5 {
            let suite = blockwords_suite(len, 3, 7);
            assert_eq!(suite, blockwords_suite(len, 3, 7));
            assert_eq!(suite.build(100_000).unwrap().len(), 3);
        }
        let suite = rearrange_suite(3, 3, 4, 1);
        assert_eq!(suite, rearrange_suite(3, 3, 4, 1));
        assert_eq!(suite.build(100_000).unwrap().len(), 4);
        assert_ne!(suite, rearrange_suite(3, 3, 4, 2));
        assert_eq!(chain_suite(8, 5, 0).build(100).unwrap().len(), 5);
    }
}
