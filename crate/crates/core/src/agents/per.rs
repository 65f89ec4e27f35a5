//! Proportional prioritized replay backed by a sum tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary tree of non-negative leaf values with prefix-sum search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`, for `mass` in `[0, total)`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if mass < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Indices and importance weights of a sampled batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Minimum priority assigned after an update.
pub const PRIORITY_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrioritizedBuffer {
    capacity: usize,
    pub alpha: f64,
    pub beta: f64,
    pub beta_increment: f64,
    items: Vec<Experience>,
    next: usize,
    tree: SumTree,
    max_priority: f64,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, alpha: f64, beta: f64, beta_increment: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        if !(alpha >= 0.0) || !(beta >= 0.0) {
            return Err(Error::config("replay exponents must be non-negative"));
        }
        Ok(Self {
            capacity,
            alpha,
            beta,
            beta_increment,
            items: Vec::with_capacity(capacity),
            next: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
        })
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

    pub fn get(&self, i: usize) -> &Experience {
        &self.items[i]
    }

    /// Inserts with the largest priority seen so far, overwriting the oldest item when full.
    pub fn push(&mut self, e: Experience) {
        let i = self.next;
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[i] = e;
        }
        self.tree.set(i, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
    }

    /// Sets raw priorities directly.
    pub fn set_priority(&mut self, i: usize, priority: f64) {
        self.max_priority = self.max_priority.max(priority);
        self.tree.set(i, priority.powf(self.alpha));
    }

    /// Priorities become `|td| + PRIORITY_FLOOR`.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, &d) in indices.iter().zip(td_errors) {
            self.set_priority(i, d.abs() + PRIORITY_FLOOR);
        }
    }

    /// Probability of drawing item `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Draws `batch` indices with replacement in proportion to `p^alpha`, returns
    /// importance weights `(N P(i))^-beta` divided by their batch maximum, then anneals beta.
    pub fn sample<R: Rng + ?Sized>(&mut self, batch: usize, rng: &mut R) -> Result<SampledBatch> {
        if self.items.is_empty() {
            return Err(Error::Protocol("sampling from an empty replay buffer".into()));
        }
        let total = self.tree.total();
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let i = self.tree.find(rng.random::<f64>() * total).min(self.items.len() - 1);
            indices.push(i);
            weights.push((n * self.probability(i)).powf(-self.beta));
        }
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        weights.iter_mut().for_each(|w| *w /= max_w);
        self.beta = (self.beta + self.beta_increment).min(1.0);
        Ok(SampledBatch { indices, weights })
    }
}
