use crate::bnb::{fractional_part, BranchingContext, Direction, PseudocostUpdate, SolverState};

use super::fsb::{probe, SCORE_EPS};
use super::{argmax_first, BranchingPolicy, Decision, PolicyError};

/// Default reliability threshold on per-direction observation counts.
pub const DEFAULT_RELIABILITY: usize = 8;

/// Per-direction unit gain of `var`, falling back to the global mean and then 1.
fn unit_gain(state: &SolverState, var: usize, dir: Direction) -> f64 {
    state
        .pseudocost(var, dir)
        .or_else(|| state.global_average(dir))
        .unwrap_or(1.0)
}

/// Pseudocost product score of one variable at LP value `value`.
pub fn pseudocost_score(state: &SolverState, var: usize, value: f64) -> f64 {
    let f = fractional_part(value);
    let down = unit_gain(state, var, Direction::Down) * f;
    let up = unit_gain(state, var, Direction::Up) * (1.0 - f);
    down.max(SCORE_EPS) * up.max(SCORE_EPS)
}

/// Pseudocost scores of every candidate, in candidate order.
pub fn pseudocost_scores(ctx: &BranchingContext<'_>) -> Vec<f64> {
    let x = &ctx.lp().x;
    ctx.candidates
        .iter()
        .map(|&j| pseudocost_score(ctx.state, j, x[j]))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PseudocostPolicy;

impl BranchingPolicy for PseudocostPolicy {
    fn name(&self) -> String {
        "pc".into()
    }

    fn decide(&mut self, ctx: &BranchingContext<'_>) -> Result<Decision, PolicyError> {
        let scores = pseudocost_scores(ctx);
        Ok(Decision::plain(
            ctx.candidates[argmax_first(&scores).expect("candidates")],
        ))
    }
}

/// Hybrid rule: strong branching on candidates with fewer than `eta`
/// observations in either direction, pseudocosts on the rest. Probed children
/// seed the pseudocosts.
#[derive(Debug, Clone, Copy)]
pub struct ReliabilityPolicy {
    pub eta: usize,
}

impl Default for ReliabilityPolicy {
    fn default() -> Self {
        Self {
            eta: DEFAULT_RELIABILITY,
        }
    }
}

impl BranchingPolicy for ReliabilityPolicy {
    fn name(&self) -> String {
        "rpb".into()
    }

    fn decide(&mut self, ctx: &BranchingContext<'_>) -> Result<Decision, PolicyError> {
        let state = ctx.state;
        let lp = ctx.lp();
        let mut scores = pseudocost_scores(ctx);
        let unreliable: Vec<usize> = ctx
            .candidates
            .iter()
            .copied()
            .filter(|&j| {
                state
                    .pseudocost_count(j, Direction::Down)
                    .min(state.pseudocost_count(j, Direction::Up))
                    < self.eta
            })
            .collect();
        let mut updates = Vec::new();
        if !unreliable.is_empty() {
            let sb = probe(ctx, &unreliable)?;
            let mut k = 0;
            for (pos, &j) in ctx.candidates.iter().enumerate() {
                if k < sb.candidates.len() && sb.candidates[k] == j {
                    scores[pos] = sb.scores[k];
                    let f = fractional_part(lp.x[j]);
                    for (dir, gain) in [
                        (Direction::Down, sb.down_gains[k]),
                        (Direction::Up, sb.up_gains[k]),
                    ] {
                        if let Some(u) = PseudocostUpdate::from_objectives(j, dir, 0.0, gain, f) {
                            updates.push(u);
                        }
                    }
                    k += 1;
                }
            }
        }
        Ok(Decision {
            var: ctx.candidates[argmax_first(&scores).expect("candidates")],
            scores: None,
            pseudocost_updates: updates,
        })
    }
}
