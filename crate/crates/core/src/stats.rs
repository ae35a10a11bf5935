use std::time::Duration;

/// Instrumentation gathered by the elimination-based solvers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    /// Edge or coefficient updates performed.
    pub work: u64,
    /// Largest neighbourhood of an eliminated vertex (excluding itself).
    pub max_neighborhood: usize,
    /// Eliminations whose neighbourhood escaped the scheduled bag.
    pub lemma_violations: usize,
    pub eliminated: usize,
    pub wall_time: Duration,
}

impl SolverStats {
    pub fn absorb(&mut self, other: &SolverStats) {
        self.work += other.work;
        self.max_neighborhood = self.max_neighborhood.max(other.max_neighborhood);
        self.lemma_violations += other.lemma_violations;
        self.eliminated += other.eliminated;
        self.wall_time += other.wall_time;
    }
}
