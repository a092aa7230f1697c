//! Ring-buffer experience replay with uniform sampling.

use crate::env::Transition;
use crate::rng::RngStream;

/// Fixed-capacity ring of transitions. Insertion evicts strictly oldest-first
/// once the buffer is full; sampling is uniform with replacement over the
/// current contents.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity), cursor: 0, inserted: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions ever made (for eviction bookkeeping in tests).
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.inserted += 1;
    }

    /// One uniform draw (with replacement) from the current contents.
    pub fn sample_one(&self, rng: &mut RngStream) -> &Transition {
        &self.items[rng.below(self.items.len())]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}
