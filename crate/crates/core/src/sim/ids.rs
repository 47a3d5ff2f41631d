use serde::{Deserialize, Serialize};

/// Index of a simulated process, `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all(n: usize) -> impl Iterator<Item = ProcessId> + Clone {
        (0..n as u32).map(ProcessId)
    }
}

impl From<usize> for ProcessId {
    fn from(i: usize) -> Self {
        ProcessId(i as u32)
    }
}

impl std::fmt::Display for ProcessId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Set of processes as a 128-bit mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ProcessSet(u128);

impl ProcessSet {
    pub const EMPTY: ProcessSet = ProcessSet(0);

    pub fn insert(&mut self, p: ProcessId) -> bool {
        let bit = 1u128 << p.0;
        let fresh = self.0 & bit == 0;
        self.0 |= bit;
        fresh
    }

    pub fn contains(&self, p: ProcessId) -> bool {
        self.0 & (1u128 << p.0) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = ProcessId> + '_ {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros();
            bits &= bits - 1;
            Some(ProcessId(i))
        })
    }
}

impl FromIterator<ProcessId> for ProcessSet {
    fn from_iter<I: IntoIterator<Item = ProcessId>>(iter: I) -> Self {
        let mut s = ProcessSet::EMPTY;
        for p in iter {
            s.insert(p);
        }
        s
    }
}

/// Insertion/removal in O(1) with uniform indexed access, for schedulers.
#[derive(Debug, Clone, Default)]
pub(crate) struct IndexedSet {
    items: Vec<usize>,
    pos: Vec<usize>,
}

const ABSENT: usize = usize::MAX;

impl IndexedSet {
    pub fn with_universe(size: usize) -> Self {
        IndexedSet {
            items: Vec::new(),
            pos: vec![ABSENT; size],
        }
    }

    pub fn insert(&mut self, x: usize) {
        if self.pos[x] == ABSENT {
            self.pos[x] = self.items.len();
            self.items.push(x);
        }
    }

    pub fn remove(&mut self, x: usize) {
        let p = self.pos[x];
        if p == ABSENT {
            return;
        }
        let last = *self.items.last().expect("non-empty");
        self.items.swap_remove(p);
        if last != x {
            self.pos[last] = p;
        }
        self.pos[x] = ABSENT;
    }

    pub fn contains(&self, x: usize) -> bool {
        self.pos[x] != ABSENT
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.items
    }
}
