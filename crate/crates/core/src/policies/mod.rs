//! Branching policies: the strong-branching expert, pseudocost and reliability
//! rules, a random baseline and the learned GCNN adapter.

mod fsb;
mod learned;
mod pseudocost;
mod random;

use thiserror::Error;

use crate::bnb::{BranchingContext, PseudocostUpdate};
use crate::instances::RngSeed;
use crate::simplex::{LpError, LpStatus};

pub use fsb::{full_strong_branching, sb_score, FsbPolicy, INFEASIBLE_GAIN, SCORE_EPS};
pub use learned::LearnedPolicy;
pub use pseudocost::{
    pseudocost_score, pseudocost_scores, PseudocostPolicy, ReliabilityPolicy, DEFAULT_RELIABILITY,
};
pub use random::RandomPolicy;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("strong-branching probe on variable {var} ended with {status:?}")]
    ProbeFailed { var: usize, status: LpStatus },
    #[error("model does not fit the state: {0}")]
    Model(String),
    #[error("unknown policy '{0}' (expected fsb, rpb, pc, random or gcnn:PATH)")]
    UnknownPolicy(String),
}

/// Strong-branching scores over a candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct SbScoreVector {
    pub candidates: Vec<usize>,
    pub scores: Vec<f64>,
    /// Objective increase of each child; `+inf` when the child is infeasible.
    pub down_gains: Vec<f64>,
    pub up_gains: Vec<f64>,
}

impl SbScoreVector {
    pub fn max_score(&self) -> f64 {
        self.scores
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Positions (into `candidates`) attaining the maximum score.
    pub fn argmax_set(&self) -> Vec<usize> {
        let best = self.max_score();
        (0..self.scores.len())
            .filter(|&i| self.scores[i] == best)
            .collect()
    }

    /// Position of the first maximum, i.e. the lowest-index best candidate.
    pub fn best(&self) -> usize {
        argmax_first(&self.scores).expect("non-empty score vector")
    }
}

/// A branching choice plus what the policy learned while making it.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub var: usize,
    /// Strong-branching scores over every candidate, when the policy computed them.
    pub scores: Option<SbScoreVector>,
    /// Pseudocost observations for the engine to record (strong-branching seeds).
    pub pseudocost_updates: Vec<PseudocostUpdate>,
}

impl Decision {
    pub fn plain(var: usize) -> Self {
        Self {
            var,
            scores: None,
            pseudocost_updates: Vec::new(),
        }
    }
}

pub trait BranchingPolicy {
    fn name(&self) -> String;

    /// Picks one of `ctx.candidates`.
    fn decide(&mut self, ctx: &BranchingContext<'_>) -> Result<Decision, PolicyError>;

    /// Called at the start of every solve with that solve's seed.
    fn reset(&mut self, _seed: RngSeed) {}
}

/// Index of the first maximal element (`+inf` counts as maximal, NaN never does).
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Builds a policy from its registry name: `fsb`, `rpb`, `pc`, `random` or `gcnn:PATH`.
pub fn from_spec(spec: &str) -> Result<Box<dyn BranchingPolicy + Send>, PolicyError> {
    match spec {
        "fsb" => Ok(Box::new(FsbPolicy)),
        "rpb" => Ok(Box::new(ReliabilityPolicy::default())),
        "pc" => Ok(Box::new(PseudocostPolicy)),
        "random" => Ok(Box::new(RandomPolicy::new(RngSeed(0)))),
        other => match other.strip_prefix("gcnn:") {
            Some(path) => Ok(Box::new(LearnedPolicy::from_file(path)?)),
            None => Err(PolicyError::UnknownPolicy(other.to_string())),
        },
    }
}
