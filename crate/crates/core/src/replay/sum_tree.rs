//! Binary sum tree over a power-of-two number of leaves, with a parallel
//! max tree so new samples can enter at the current maximum priority.

#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    leaves: usize,
    sums: Vec<f64>,
    maxes: Vec<f64>,
}

impl SumTree {
    /// Room for at least `size` leaves, rounded up to a power of two.
    pub fn new(size: usize) -> Self {
        let leaves = size.max(1).next_power_of_two();
        Self {
            leaves,
            sums: vec![0.0; 2 * leaves],
            maxes: vec![0.0; 2 * leaves],
        }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.sums[1]
    }

    pub fn max_leaf(&self) -> f64 {
        self.maxes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.sums[self.leaves + i]
    }

    /// Node array in heap order; node 1 is the root and leaf `i` sits at
    /// `capacity + i`.
    pub fn nodes(&self) -> &[f64] {
        &self.sums
    }

    pub fn set(&mut self, i: usize, priority: f64) {
        assert!(i < self.leaves, "leaf {i} out of range");
        assert!(priority >= 0.0 && priority.is_finite(), "invalid priority {priority}");
        let mut node = self.leaves + i;
        self.sums[node] = priority;
        self.maxes[node] = priority;
        while node > 1 {
            node /= 2;
            self.sums[node] = self.sums[2 * node] + self.sums[2 * node + 1];
            self.maxes[node] = self.maxes[2 * node].max(self.maxes[2 * node + 1]);
        }
    }

    /// Leaf whose cumulative interval contains `mass`. Never descends into
    /// an empty subtree.
    pub fn find(&self, mass: f64) -> usize {
        let mut mass = mass.max(0.0);
        let mut node = 1;
        while node < self.leaves {
            let left = self.sums[2 * node];
            let right = self.sums[2 * node + 1];
            if mass < left || right <= 0.0 {
                node *= 2;
            } else {
                mass -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }
}
