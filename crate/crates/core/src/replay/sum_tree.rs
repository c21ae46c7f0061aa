use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Complete binary tree of priority sums over a power-of-two number of leaves.
///
/// Nodes are stored heap-style from index 1; leaf `i` sits at `leaf_count + i`.
/// Every update recomputes its ancestors from their children, so each
/// internal node is exactly the floating-point sum of its two children.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree<S> {
    leaf_count: usize,
    nodes: Vec<S>,
    max_priority: S,
}

impl<S: Scalar> SumTree<S> {
    pub fn new(capacity: usize) -> Self {
        Self::with_initial_max(capacity, S::one())
    }

    pub fn with_initial_max(capacity: usize, initial: S) -> Self {
        let leaf_count = capacity.max(1).next_power_of_two();
        Self { leaf_count, nodes: vec![S::zero(); 2 * leaf_count], max_priority: initial }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn total(&self) -> S {
        self.nodes[1]
    }

    /// Largest priority ever written, or the initial value; new items enter here.
    pub fn max_priority(&self) -> S {
        self.max_priority
    }

    pub fn get(&self, leaf: usize) -> S {
        self.nodes[self.leaf_count + leaf]
    }

    pub fn set(&mut self, leaf: usize, priority: S) {
        debug_assert!(priority >= S::zero());
        let mut i = self.leaf_count + leaf;
        self.nodes[i] = priority;
        if priority > self.max_priority {
            self.max_priority = priority;
        }
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Leaf `i` with `Σ_{j<i} p_j ≤ mass < Σ_{j≤i} p_j`.
    pub fn prefix_sum_select(&self, mass: S) -> Result<usize> {
        let total = self.total();
        if !(mass >= S::zero() && mass < total) {
            return Err(Error::MassOutOfRange { mass: mass.to_f64_lossy(), total: total.to_f64_lossy() });
        }
        Ok(self.descend(mass))
    }

    /// Descent without range checks; rounding that lands on an empty leaf
    /// falls back to the nearest occupied leaf on the left.
    pub(crate) fn descend(&self, mut mass: S) -> usize {
        let mut i = 1;
        while i < self.leaf_count {
            let left = self.nodes[2 * i];
            if mass < left || self.nodes[2 * i + 1] <= S::zero() {
                i *= 2;
            } else {
                mass -= left;
                i = 2 * i + 1;
            }
        }
        let mut leaf = i - self.leaf_count;
        while self.get(leaf) <= S::zero() && leaf > 0 {
            leaf -= 1;
        }
        leaf
    }

    /// True when every internal node equals the sum of its children.
    pub fn is_consistent(&self) -> bool {
        (1..self.leaf_count).all(|i| self.nodes[i] == self.nodes[2 * i] + self.nodes[2 * i + 1])
    }
}
