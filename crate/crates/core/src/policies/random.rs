use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bnb::BranchingContext;
use crate::instances::RngSeed;

use super::{BranchingPolicy, Decision, PolicyError};

/// Uniform choice among the candidates; reseeded at every solve.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: RngSeed) -> Self {
        Self { rng: seed.rng() }
    }

    pub fn pick(&mut self, candidates: &[usize]) -> usize {
        candidates[self.rng.gen_range(0..candidates.len())]
    }
}

impl BranchingPolicy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn decide(&mut self, ctx: &BranchingContext<'_>) -> Result<Decision, PolicyError> {
        Ok(Decision::plain(self.pick(ctx.candidates)))
    }

    fn reset(&mut self, seed: RngSeed) {
        self.rng = seed.rng();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate_and_reproducibility() {
        let mut p = RandomPolicy::new(RngSeed(1));
        assert_eq!(p.pick(&[7]), 7);
        let a: Vec<usize> = (0..20).map(|_| p.pick(&[3, 9])).collect();
        let mut q = RandomPolicy::new(RngSeed(1));
        q.pick(&[7]);
        let b: Vec<usize> = (0..20).map(|_| q.pick(&[3, 9])).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn frequencies_within_three_sigma() {
        let mut p = RandomPolicy::new(RngSeed(42));
        let mut counts = [0usize; 3];
        let draws = 10_000;
        for _ in 0..draws {
            counts[p.pick(&[0, 1, 2])] += 1;
        }
        let sigma = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - draws as f64 / 3.0).abs() <= 3.0 * sigma,
                "{counts:?}"
            );
        }
    }
}
