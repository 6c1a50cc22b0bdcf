use serde::{Deserialize, Serialize};

/// Work ceilings checked before any expensive enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Largest point set that may be materialized.
    pub points: u128,
    /// Largest number of ordered pairs a pair loop may visit.
    pub pairs: u128,
    /// Largest number of search nodes (backtracking, triple loops).
    pub nodes: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { points: 10_000_000, pairs: 2_000_000_000, nodes: 200_000_000_000 }
    }
}

impl Budget {
    pub fn with_pairs(mut self, pairs: u128) -> Self {
        self.pairs = pairs;
        self
    }

    pub fn with_points(mut self, points: u128) -> Self {
        self.points = points;
        self
    }
}
