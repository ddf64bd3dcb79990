//! Evaluation metrics and reports: imitation accuracy, solve sweeps, entropy
//! analysis and the convolution ablation.

mod eval;

use serde::{Deserialize, Serialize};

use crate::datagen::SampleRecord;
use crate::gcnn::{entropy, forward, GcnnError, GcnnParams};

pub use eval::{
    ablate, evaluate, evaluate_specs, training_pairs, AblationConfig, AblationReport, EvalConfig,
    EvalReport, EvalRun, ModeResult, PolicyEntry, PolicyFactory, PolicySummary,
};

/// `exp(mean(ln(v + shift))) - shift`; NaN for an empty list. A constant list
/// returns its value exactly.
pub fn shifted_geomean(values: &[f64], shift: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    if values.iter().all(|&v| v == values[0]) {
        return values[0];
    }
    let mean = values.iter().map(|v| (v + shift).ln()).sum::<f64>() / values.len() as f64;
    mean.exp() - shift
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let mu = mean(values);
    (values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Pearson correlation; NaN when either column is constant.
pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let cov: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    cov / (vx * vy).sqrt()
}

pub const ACC_KS: [usize; 3] = [1, 5, 10];

/// Candidates ordered by decreasing score, ties by lowest index.
pub fn ranking(candidates: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(candidates[a].cmp(&candidates[b]))
    });
    order.into_iter().map(|k| candidates[k]).collect()
}

/// Whether the first `k` ranked variables meet the expert's maximizer set.
pub fn top_k_hit(ranked: &[usize], expert_set: &[usize], k: usize) -> bool {
    ranked.iter().take(k).any(|j| expert_set.contains(j))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub samples: usize,
    /// `(k, percent)` for k in 1, 5, 10.
    pub acc: Vec<(usize, f64)>,
    /// Across-seed standard deviation per k (zero for a single run).
    pub std: Vec<(usize, f64)>,
}

impl AccuracyReport {
    pub fn at(&self, k: usize) -> f64 {
        self.acc
            .iter()
            .find(|(kk, _)| *kk == k)
            .map_or(f64::NAN, |p| p.1)
    }

    /// Mean and standard deviation over independent runs.
    pub fn combine(runs: &[AccuracyReport]) -> AccuracyReport {
        let acc = ACC_KS
            .iter()
            .map(|&k| (k, mean(&runs.iter().map(|r| r.at(k)).collect::<Vec<_>>())))
            .collect();
        let std = ACC_KS
            .iter()
            .map(|&k| {
                (
                    k,
                    std_dev(&runs.iter().map(|r| r.at(k)).collect::<Vec<_>>()),
                )
            })
            .collect();
        AccuracyReport {
            samples: runs.iter().map(|r| r.samples).sum(),
            acc,
            std,
        }
    }

    fn from_hits(hits: [usize; 3], samples: usize) -> Self {
        let pct = |h: usize| 100.0 * h as f64 / samples.max(1) as f64;
        AccuracyReport {
            samples,
            acc: ACC_KS.iter().zip(hits).map(|(&k, h)| (k, pct(h))).collect(),
            std: ACC_KS.iter().map(|&k| (k, 0.0)).collect(),
        }
    }
}

/// acc@1/5/10 of the model's probability ranking against the expert maximizer sets.
pub fn accuracy<'a>(
    params: &GcnnParams,
    records: impl IntoIterator<Item = &'a SampleRecord>,
) -> Result<AccuracyReport, GcnnError> {
    let mut hits = [0usize; 3];
    let mut samples = 0;
    for r in records {
        let (probs, _) = forward(&r.state, params)?;
        let scores: Vec<f64> = r.candidates.iter().map(|&j| probs[j]).collect();
        let ranked = ranking(&r.candidates, &scores);
        let expert = r.expert_set();
        for (h, &k) in hits.iter_mut().zip(&ACC_KS) {
            *h += top_k_hit(&ranked, &expert, k) as usize;
        }
        samples += 1;
    }
    Ok(AccuracyReport::from_hits(hits, samples))
}

/// Probability that a uniformly random ranking of `n` candidates puts one of
/// `good` maximizers in its first `k` places.
pub fn uniform_hit_probability(n: usize, good: usize, k: usize) -> f64 {
    let k = k.min(n);
    // 1 - C(n - good, k) / C(n, k), as a running product.
    let mut miss = 1.0;
    for t in 0..k {
        if n - t == 0 || good > n - t {
            return 1.0;
        }
        miss *= (n - good - t) as f64 / (n - t) as f64;
    }
    1.0 - miss
}

/// Expected acc@k (percent) of the uniform random policy on the records.
pub fn uniform_accuracy<'a>(records: impl IntoIterator<Item = &'a SampleRecord>) -> AccuracyReport {
    let mut sums = [0.0; 3];
    let mut samples = 0;
    for r in records {
        let good = r.expert_set().len();
        for (s, &k) in sums.iter_mut().zip(&ACC_KS) {
            *s += uniform_hit_probability(r.candidates.len(), good, k);
        }
        samples += 1;
    }
    AccuracyReport {
        samples,
        acc: ACC_KS
            .iter()
            .zip(sums)
            .map(|(&k, s)| (k, 100.0 * s / samples.max(1) as f64))
            .collect(),
        std: ACC_KS.iter().map(|&k| (k, 0.0)).collect(),
    }
}

/// Per record: (entropy of the model's candidate distribution, log of the expert maximizer count).
pub fn entropy_scatter<'a>(
    params: &GcnnParams,
    records: impl IntoIterator<Item = &'a SampleRecord>,
) -> Result<Vec<(f64, f64)>, GcnnError> {
    records
        .into_iter()
        .map(|r| {
            let (probs, _) = forward(&r.state, params)?;
            Ok((entropy(&probs), (r.expert_set().len() as f64).ln()))
        })
        .collect()
}

pub fn scatter_csv(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from("policy_entropy,expert_entropy\n");
    for (a, b) in pairs {
        out.push_str(&format!("{a},{b}\n"));
    }
    out
}
