use crate::bnb::BranchingContext;
use crate::simplex::LpSolution;

use super::{BranchingPolicy, Decision, PolicyError, SbScoreVector};

/// Floor applied to each child gain in the product score.
pub const SCORE_EPS: f64 = 1e-6;
/// Stand-in gain for an infeasible child when the other child is feasible.
pub const INFEASIBLE_GAIN: f64 = 1e20;

/// Product score of two child gains; `+inf` marks an infeasible child.
pub fn sb_score(down_gain: f64, up_gain: f64) -> f64 {
    match (down_gain.is_finite(), up_gain.is_finite()) {
        (false, false) => f64::INFINITY,
        _ => {
            let d = if down_gain.is_finite() {
                down_gain
            } else {
                INFEASIBLE_GAIN
            };
            let u = if up_gain.is_finite() {
                up_gain
            } else {
                INFEASIBLE_GAIN
            };
            d.max(SCORE_EPS) * u.max(SCORE_EPS)
        }
    }
}

fn child_gain(node: &LpSolution, child: &LpSolution, var: usize) -> Result<f64, PolicyError> {
    if child.is_optimal() {
        Ok((child.objective - node.objective).max(0.0))
    } else if child.status == crate::simplex::LpStatus::Infeasible {
        Ok(f64::INFINITY)
    } else {
        Err(PolicyError::ProbeFailed {
            var,
            status: child.status,
        })
    }
}

/// Probes both children of each listed variable.
pub(crate) fn probe(
    ctx: &BranchingContext<'_>,
    vars: &[usize],
) -> Result<SbScoreVector, PolicyError> {
    let lp = ctx.lp();
    let mut out = SbScoreVector {
        candidates: vars.to_vec(),
        scores: Vec::with_capacity(vars.len()),
        down_gains: Vec::with_capacity(vars.len()),
        up_gains: Vec::with_capacity(vars.len()),
    };
    for &var in vars {
        let v = lp.x[var];
        let (down, up) = ctx
            .model
            .strong_branch_probe(lp, var, v.floor(), v.ceil())?;
        let dg = child_gain(lp, &down, var)?;
        let ug = child_gain(lp, &up, var)?;
        out.scores.push(sb_score(dg, ug));
        out.down_gains.push(dg);
        out.up_gains.push(ug);
    }
    Ok(out)
}

/// Strong-branching scores for every candidate of the focused node. Touches no
/// solver statistics.
pub fn full_strong_branching(ctx: &BranchingContext<'_>) -> Result<SbScoreVector, PolicyError> {
    probe(ctx, ctx.candidates)
}

/// Full strong branching: probes every candidate, picks the best product score.
#[derive(Debug, Clone, Copy, Default)]
pub struct FsbPolicy;

impl BranchingPolicy for FsbPolicy {
    fn name(&self) -> String {
        "fsb".into()
    }

    fn decide(&mut self, ctx: &BranchingContext<'_>) -> Result<Decision, PolicyError> {
        let scores = full_strong_branching(ctx)?;
        Ok(Decision {
            var: scores.candidates[scores.best()],
            scores: Some(scores),
            pseudocost_updates: Vec::new(),
        })
    }
}
