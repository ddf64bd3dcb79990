use std::path::Path;

use super::{argmax_first, BranchingPolicy, Decision, PolicyError};
use crate::bnb::BranchingContext;
use crate::encoding::extract;
use crate::gcnn::{forward, load_model, GcnnParams};

/// Branches on the candidate with the highest network probability (lowest index on ties).
pub struct LearnedPolicy {
    params: GcnnParams,
    label: String,
}

impl LearnedPolicy {
    pub fn new(params: GcnnParams) -> Self {
        let label = format!("gcnn-{}", params.conv_mode);
        Self { params, label }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let params = load_model(path.as_ref()).map_err(|e| PolicyError::Model(e.to_string()))?;
        Ok(Self::new(params))
    }

    pub fn params(&self) -> &GcnnParams {
        &self.params
    }
}

impl BranchingPolicy for LearnedPolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn decide(&mut self, ctx: &BranchingContext<'_>) -> Result<Decision, PolicyError> {
        let state = extract(ctx);
        let (probs, _) =
            forward(&state, &self.params).map_err(|e| PolicyError::Model(e.to_string()))?;
        let scores: Vec<f64> = ctx.candidates.iter().map(|&j| probs[j]).collect();
        let k = argmax_first(&scores).ok_or_else(|| PolicyError::Model("no candidate".into()))?;
        Ok(Decision::plain(ctx.candidates[k]))
    }
}
