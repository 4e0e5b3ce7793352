//! Bitmask representation of realized action subsets.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Maximum number of base actions representable by an [`ActionSet`] bitmask.
///
/// Explicit availability tables, embedded-state construction and trajectory
/// logs all go through this type; product-form models with more actions are
/// handled without ever materializing subsets.
pub const MAX_SET_ACTIONS: usize = 62;

/// A subset of the base action set, stored as a bitmask (bit `k` = action `k`).
///
/// Serializes as a sorted list of action indices so instance files stay
/// readable; the in-memory form is a single `u64`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionSet(u64);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    /// The full set `{0, .., n_actions-1}`.
    pub fn full(n_actions: usize) -> Self {
        debug_assert!(n_actions <= MAX_SET_ACTIONS);
        ActionSet((1u64 << n_actions) - 1)
    }

    pub fn singleton(action: usize) -> Self {
        ActionSet(1u64 << action)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut bits = 0u64;
        for k in indices {
            debug_assert!(k < MAX_SET_ACTIONS);
            bits |= 1u64 << k;
        }
        ActionSet(bits)
    }

    pub fn from_bits(bits: u64) -> Self {
        ActionSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, action: usize) -> bool {
        action < 64 && self.0 & (1u64 << action) != 0
    }

    pub fn insert(&mut self, action: usize) {
        self.0 |= 1u64 << action;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Actions in the set, ascending.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let k = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(k)
            }
        })
    }

    /// Largest action index present, if any. Used for dimension checks.
    pub fn max_action(self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            Some(63 - self.0.leading_zeros() as usize)
        }
    }
}

impl fmt::Debug for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Serialize for ActionSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ActionSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let indices = Vec::<usize>::deserialize(deserializer)?;
        for &k in &indices {
            if k >= MAX_SET_ACTIONS {
                return Err(serde::de::Error::custom(format!(
                    "action index {k} exceeds the {MAX_SET_ACTIONS}-action subset limit"
                )));
            }
        }
        Ok(ActionSet::from_indices(indices))
    }
}

/// All nonempty subsets of `{0, .., n_actions-1}`, ascending by bitmask.
pub fn nonempty_subsets(n_actions: usize) -> impl Iterator<Item = ActionSet> {
    debug_assert!(n_actions <= MAX_SET_ACTIONS);
    (1u64..(1u64 << n_actions)).map(ActionSet)
}
