//! Binary persistence for value tables.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "GSVT"
//! version      u16      currently 1
//! goal digest  32 bytes SHA-256 of the goal's canonical encoding
//! state count  u32      states spanned by the table
//! entry count  u32      present entries that follow
//! entries      (u32 state, u32 value) * entry count, ascending state order
//! ```

use std::io::{self, Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ValueTable;
use crate::gmdp::{Goal, StateId};

pub const MAGIC: [u8; 4] = *b"GSVT";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a value table file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("goal digest mismatch: file was built for a different goal")]
    DigestMismatch,
    #[error("corrupt table: {0}")]
    Corrupt(String),
}

/// SHA-256 over a tagged encoding of (instruction, target state). The level
/// is not part of a goal's identity.
pub fn goal_digest(goal: &Goal) -> [u8; 32] {
    let mut h = Sha256::new();
    match goal.instruction() {
        Some(text) => {
            h.update([1u8]);
            h.update((text.len() as u64).to_le_bytes());
            h.update(text.as_bytes());
        }
        None => h.update([0u8]),
    }
    match goal.target_state() {
        Some(s) => {
            h.update([1u8]);
            h.update(s.0.to_le_bytes());
        }
        None => h.update([0u8]),
    }
    h.finalize().into()
}

pub fn write_table<W: Write>(mut w: W, table: &ValueTable) -> Result<(), StoreError> {
    let entries: Vec<(StateId, u32)> = table.iter().collect();
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&goal_digest(table.goal()))?;
    w.write_all(&(table.num_states() as u32).to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (s, v) in entries {
        w.write_all(&s.0.to_le_bytes())?;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, StoreError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Loads a table, rejecting files built for any goal other than `goal`.
pub fn read_table<R: Read>(mut r: R, goal: &Goal) -> Result<ValueTable, StoreError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)?;
    let version = u16::from_le_bytes(v);
    if version != FORMAT_VERSION {
        return Err(StoreError::Version(version));
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    if digest != goal_digest(goal) {
        return Err(StoreError::DigestMismatch);
    }
    let states = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    if count > states {
        return Err(StoreError::Corrupt(format!("{count} entries for {states} states")));
    }
    let mut entries = vec![None; states];
    for _ in 0..count {
        let s = read_u32(&mut r)? as usize;
        let value = read_u32(&mut r)?;
        let slot = entries
            .get_mut(s)
            .ok_or_else(|| StoreError::Corrupt(format!("state {s} out of range")))?;
        if slot.replace(value).is_some() {
            return Err(StoreError::Corrupt(format!("state {s} listed twice")));
        }
    }
    Ok(ValueTable::from_entries(goal.clone(), entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::chain::ChainEnv;
    use crate::value::compute_values;

    #[test]
    fn round_trip_and_digest_guard() {
        let env = ChainEnv::new(6, 5).unwrap();
        let goal = env.position_goal(2);
        let table = compute_values(&env, &goal).unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, &table).unwrap();
        assert_eq!(&buf[..4], b"GSVT");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(buf.len(), 4 + 2 + 32 + 4 + 4 + 6 * 8);
        let back = read_table(buf.as_slice(), &goal).unwrap();
        assert_eq!(back, table);

        let other = env.position_goal(3);
        assert!(matches!(read_table(buf.as_slice(), &other), Err(StoreError::DigestMismatch)));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_table(bad.as_slice(), &goal), Err(StoreError::Version(9))));
        assert!(matches!(read_table(&buf[..20], &goal), Err(StoreError::Io(_))));
    }

    #[test]
    fn digest_ignores_level() {
        let a = Goal::instruction_only("x", 0).unwrap();
        let b = Goal::instruction_only("x", 3).unwrap();
        assert_eq!(goal_digest(&a), goal_digest(&b));
        let c = Goal::new(Some("x".into()), Some(StateId(1)), 0).unwrap();
        assert_ne!(goal_digest(&a), goal_digest(&c));
    }
}
