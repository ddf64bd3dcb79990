use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward_sample, loss, prenorm_pretrain, ConvMode, GcnnParams, DEFAULT_HIDDEN};
use super::GcnnError;
use crate::encoding::BipartiteState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    /// Divisor applied to the learning rate on a plateau.
    pub lr_decay: f64,
    /// Non-improving epochs before each decay.
    pub patience_decay: usize,
    /// Non-improving epochs before stopping.
    pub patience_stop: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Hard cap on the number of epochs.
    pub max_epochs: usize,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr0: 1e-3,
            lr_decay: 5.0,
            patience_decay: 10,
            patience_stop: 20,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            max_epochs: 1000,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GcnnError> {
        let ok = self.batch_size > 0
            && self.lr0 > 0.0
            && self.lr_decay > 0.0
            && self.patience_decay > 0
            && self.patience_stop > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.max_epochs > 0
            && self.hidden > 0;
        if ok {
            Ok(())
        } else {
            Err(GcnnError::Config(format!("{self:?}")))
        }
    }
}

/// First and second moment estimates of every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &GcnnParams) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .trainable()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Bias-corrected Adam update of one tensor at step `t >= 1`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for k in 0..param.len() {
        let g = grad[k];
        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        param[k] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One Adam step over the trainable tensors; prenorm statistics are never touched.
pub fn adam_step(
    params: &mut GcnnParams,
    grads: &GcnnParams,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let grads = grads.trainable();
    for (k, p) in params.trainable_mut().into_iter().enumerate() {
        adam_update(
            p,
            grads[k],
            &mut state.m[k],
            &mut state.v[k],
            state.t,
            lr,
            cfg.beta1,
            cfg.beta2,
            cfg.eps,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_valid_loss: f64,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss,lr\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.valid_loss, r.lr
            ));
        }
        out
    }
}

/// Mean `log k` over the samples: the loss of the uniform policy.
pub fn uniform_loss(samples: &[(&BipartiteState, usize)]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|(s, _)| (s.candidate_mask.iter().filter(|&&b| b).count() as f64).ln())
        .sum();
    total / samples.len().max(1) as f64
}

pub fn train(
    train_set: &[(&BipartiteState, usize)],
    valid_set: &[(&BipartiteState, usize)],
    cfg: &TrainConfig,
    conv_mode: ConvMode,
) -> Result<(GcnnParams, TrainHistory), GcnnError> {
    train_with_callback(train_set, valid_set, cfg, conv_mode, &mut |_| {})
}

/// Minibatch Adam with plateau decay and early stopping; returns the best-validation parameters.
pub fn train_with_callback(
    train_set: &[(&BipartiteState, usize)],
    valid_set: &[(&BipartiteState, usize)],
    cfg: &TrainConfig,
    conv_mode: ConvMode,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(GcnnParams, TrainHistory), GcnnError> {
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(GcnnError::EmptyStream);
    }
    let mut params = GcnnParams::new(conv_mode, cfg.hidden, cfg.seed);
    if conv_mode == ConvMode::SumPrenorm {
        prenorm_pretrain(train_set.iter().map(|(s, _)| *s), &mut params)?;
    }
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = cfg.lr0;
    let mut best = params.clone();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_valid_loss: f64::INFINITY,
    };
    let mut plateau = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            let w = 1.0 / chunk.len() as f64;
            for &k in chunk {
                let (state, action) = train_set[k];
                total += backward_sample(state, action, &params, w, &mut grads)?;
            }
            adam_step(&mut params, &grads, &mut adam, lr, cfg);
        }
        let train_loss = total / train_set.len() as f64;
        let valid_loss = loss(valid_set, &params)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            lr,
        };
        on_epoch(&record);
        history.epochs.push(record);
        if valid_loss < history.best_valid_loss {
            history.best_valid_loss = valid_loss;
            history.best_epoch = epoch;
            best = params.clone();
            plateau = 0;
        } else {
            plateau += 1;
            if plateau >= cfg.patience_stop {
                break;
            }
            if plateau % cfg.patience_decay == 0 {
                lr /= cfg.lr_decay;
            }
        }
    }
    Ok((best, history))
}
