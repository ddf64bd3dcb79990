use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{add_row_bias, col_sums_acc, matmul, matmul_a_bt, matmul_at_b_acc, Dense2};
use super::GcnnError;
use crate::encoding::{BipartiteState, CONS_FEATS, EDGE_FEATS, VAR_FEATS};

pub const DEFAULT_HIDDEN: usize = 64;
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMode {
    Sum,
    SumPrenorm,
    Mean,
}

impl ConvMode {
    pub const ALL: [ConvMode; 3] = [ConvMode::Mean, ConvMode::Sum, ConvMode::SumPrenorm];

    pub fn name(self) -> &'static str {
        match self {
            ConvMode::Sum => "sum",
            ConvMode::SumPrenorm => "sum_prenorm",
            ConvMode::Mean => "mean",
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            ConvMode::Sum => 0,
            ConvMode::SumPrenorm => 1,
            ConvMode::Mean => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ConvMode::Sum),
            1 => Some(ConvMode::SumPrenorm),
            2 => Some(ConvMode::Mean),
            _ => None,
        }
    }
}

impl std::str::FromStr for ConvMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(ConvMode::Sum),
            "sum_prenorm" | "sum-prenorm" => Ok(ConvMode::SumPrenorm),
            "mean" => Ok(ConvMode::Mean),
            other => Err(format!(
                "unknown conv mode `{other}` (expected sum, sum_prenorm or mean)"
            )),
        }
    }
}

impl std::fmt::Display for ConvMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Two-layer perceptron with a relu hidden layer and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2 {
    pub w1: Dense2,
    pub b1: Vec<f64>,
    pub w2: Dense2,
    pub b2: Vec<f64>,
}

pub(crate) struct MlpCache {
    /// Hidden pre-activations.
    z1: Vec<f64>,
    /// Hidden activations.
    h: Vec<f64>,
}

impl Mlp2 {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let w1 = Dense2::glorot(input, hidden, rng);
        let w2 = Dense2::glorot(hidden, output, rng);
        Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; output],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Dense2::zeros(self.w1.rows, self.w1.cols),
            b1: vec![0.0; self.b1.len()],
            w2: Dense2::zeros(self.w2.rows, self.w2.cols),
            b2: vec![0.0; self.b2.len()],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1.data, &self.b1, &self.w2.data, &self.b2]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
        ]
    }

    /// Applies the network to `rows` stacked inputs.
    pub(crate) fn forward(&self, x: &[f64], rows: usize) -> (Vec<f64>, MlpCache) {
        let (i, h, o) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        let mut z1 = matmul(rows, i, h, x, &self.w1.data);
        add_row_bias(&mut z1, &self.b1);
        let hidden: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        let mut y = matmul(rows, h, o, &hidden, &self.w2.data);
        add_row_bias(&mut y, &self.b2);
        (y, MlpCache { z1, h: hidden })
    }

    /// Accumulates parameter gradients into `grad`; returns the input gradient
    /// when `need_dx`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        rows: usize,
        cache: &MlpCache,
        dy: &[f64],
        grad: &mut Mlp2,
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        let (i, h, o) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        matmul_at_b_acc(rows, h, o, &cache.h, dy, &mut grad.w2.data);
        col_sums_acc(dy, &mut grad.b2);
        let mut dz = matmul_a_bt(rows, o, h, dy, &self.w2.data);
        for (d, &z) in dz.iter_mut().zip(&cache.z1) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }
        matmul_at_b_acc(rows, i, h, x, &dz, &mut grad.w1.data);
        col_sums_acc(&dz, &mut grad.b1);
        need_dx.then(|| matmul_a_bt(rows, h, i, &dz, &self.w1.data))
    }
}

/// Frozen affine normalization `x <- (x - beta) / sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prenorm {
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub frozen: bool,
}

impl Prenorm {
    pub fn identity(width: usize) -> Self {
        Self {
            beta: vec![0.0; width],
            sigma: vec![1.0; width],
            frozen: false,
        }
    }

    /// Per-channel mean and population standard deviation (floored) over the rows.
    pub fn fit<'a>(
        width: usize,
        rows: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Self, GcnnError> {
        let mut stats = ChannelStats::new(width);
        for row in rows {
            stats.push(row);
        }
        stats.to_prenorm()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for row in x.chunks_exact_mut(self.beta.len()) {
            for ((v, b), s) in row.iter_mut().zip(&self.beta).zip(&self.sigma) {
                *v = (*v - b) / s;
            }
        }
    }
}

/// Streaming per-channel mean and variance (Welford).
#[derive(Debug, Clone)]
pub struct ChannelStats {
    pub count: usize,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ChannelStats {
    pub fn new(width: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for ((mu, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(row) {
            let delta = x - *mu;
            *mu += delta / k;
            *m2 += delta * (x - *mu);
        }
    }

    pub fn push_rows(&mut self, x: &[f64]) {
        let w = self.mean.len();
        for row in x.chunks_exact(w) {
            self.push(row);
        }
    }

    /// Population standard deviation per channel.
    pub fn std(&self) -> Vec<f64> {
        let k = self.count.max(1) as f64;
        self.m2.iter().map(|m2| (m2 / k).sqrt()).collect()
    }

    pub fn to_prenorm(&self) -> Result<Prenorm, GcnnError> {
        if self.count == 0 {
            return Err(GcnnError::EmptyStream);
        }
        Ok(Prenorm {
            beta: self.mean.clone(),
            sigma: self.std().into_iter().map(|s| s.max(SIGMA_FLOOR)).collect(),
            frozen: true,
        })
    }
}

/// Learnable weights of the bipartite graph convolution policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnnParams {
    pub conv_mode: ConvMode,
    pub embed_c: Mlp2,
    pub embed_v: Mlp2,
    pub g_c: Mlp2,
    pub f_c: Mlp2,
    pub g_v: Mlp2,
    pub f_v: Mlp2,
    pub pre_c: Prenorm,
    pub pre_v: Prenorm,
    pub head: Mlp2,
}

impl GcnnParams {
    /// Glorot-initialized weights; the draw sequence does not depend on `conv_mode`.
    pub fn new(conv_mode: ConvMode, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = hidden;
        let embed_c = Mlp2::new(CONS_FEATS, d, d, &mut rng);
        let embed_v = Mlp2::new(VAR_FEATS, d, d, &mut rng);
        let g_c = Mlp2::new(2 * d + EDGE_FEATS, d, d, &mut rng);
        let f_c = Mlp2::new(2 * d, d, d, &mut rng);
        let g_v = Mlp2::new(2 * d + EDGE_FEATS, d, d, &mut rng);
        let f_v = Mlp2::new(2 * d, d, d, &mut rng);
        let head = Mlp2::new(d, d, 1, &mut rng);
        Self {
            conv_mode,
            embed_c,
            embed_v,
            g_c,
            f_c,
            g_v,
            f_v,
            pre_c: Prenorm::identity(d),
            pre_v: Prenorm::identity(d),
            head,
        }
    }

    pub fn hidden(&self) -> usize {
        self.embed_c.output_dim()
    }

    /// Gradient accumulator with the same shapes and identity prenorms.
    pub fn zeros_like(&self) -> Self {
        let d = self.hidden();
        Self {
            conv_mode: self.conv_mode,
            embed_c: self.embed_c.zeros_like(),
            embed_v: self.embed_v.zeros_like(),
            g_c: self.g_c.zeros_like(),
            f_c: self.f_c.zeros_like(),
            g_v: self.g_v.zeros_like(),
            f_v: self.f_v.zeros_like(),
            pre_c: Prenorm {
                beta: vec![0.0; d],
                sigma: vec![0.0; d],
                frozen: false,
            },
            pre_v: Prenorm {
                beta: vec![0.0; d],
                sigma: vec![0.0; d],
                frozen: false,
            },
            head: self.head.zeros_like(),
        }
    }

    pub(crate) fn mlps(&self) -> [&Mlp2; 7] {
        [
            &self.embed_c,
            &self.embed_v,
            &self.g_c,
            &self.f_c,
            &self.g_v,
            &self.f_v,
            &self.head,
        ]
    }

    fn mlps_mut(&mut self) -> [&mut Mlp2; 7] {
        [
            &mut self.embed_c,
            &mut self.embed_v,
            &mut self.g_c,
            &mut self.f_c,
            &mut self.g_v,
            &mut self.f_v,
            &mut self.head,
        ]
    }

    /// Names of the trainable tensors, in `trainable()` order.
    pub fn trainable_names() -> Vec<String> {
        let mut out = Vec::new();
        for m in ["embed_c", "embed_v", "g_c", "f_c", "g_v", "f_v", "head"] {
            for t in ["w1", "b1", "w2", "b2"] {
                out.push(format!("{m}.{t}"));
            }
        }
        out
    }

    /// Every trainable tensor (prenorm statistics excluded).
    pub fn trainable(&self) -> Vec<&[f64]> {
        self.mlps().into_iter().flat_map(|m| m.tensors()).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.mlps_mut()
            .into_iter()
            .flat_map(|m| m.tensors_mut())
            .collect()
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Sets every head weight and bias to zero (constant logits).
    pub fn zero_head(&mut self) {
        for t in self.head.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn uses_prenorm(&self) -> bool {
        self.conv_mode == ConvMode::SumPrenorm
    }

    pub fn check_dims(&self) -> Result<(), GcnnError> {
        let d = self.hidden();
        let want = [
            (&self.embed_c, CONS_FEATS, d),
            (&self.embed_v, VAR_FEATS, d),
            (&self.g_c, 2 * d + EDGE_FEATS, d),
            (&self.f_c, 2 * d, d),
            (&self.g_v, 2 * d + EDGE_FEATS, d),
            (&self.f_v, 2 * d, d),
            (&self.head, d, 1),
        ];
        for (k, (mlp, input, output)) in want.into_iter().enumerate() {
            let ok = mlp.input_dim() == input
                && mlp.output_dim() == output
                && mlp.b1.len() == mlp.hidden_dim()
                && mlp.w2.rows == mlp.hidden_dim()
                && mlp.b2.len() == output
                && mlp.w1.data.len() == mlp.w1.rows * mlp.w1.cols
                && mlp.w2.data.len() == mlp.w2.rows * mlp.w2.cols;
            if !ok {
                return Err(GcnnError::Dimension(format!(
                    "layer {} has shape {}x{}x{}, expected {}x?x{}",
                    Self::trainable_names()[4 * k].trim_end_matches(".w1"),
                    mlp.input_dim(),
                    mlp.hidden_dim(),
                    mlp.output_dim(),
                    input,
                    output
                )));
            }
        }
        for p in [&self.pre_c, &self.pre_v] {
            if p.beta.len() != d
                || p.sigma.len() != d
                || p.sigma.iter().any(|&s| s.is_nan() || s <= 0.0)
            {
                return Err(GcnnError::Dimension(
                    "prenorm width or sigma invalid".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Which side of the bipartite graph receives the messages.
#[derive(Clone, Copy)]
enum Side {
    Constraints,
    Variables,
}

struct ConvCache {
    /// Per-edge hidden pre-activations of `g`.
    z: Vec<f64>,
    /// Per-target sums of `g` hidden activations.
    hsum: Vec<f64>,
    scale: Vec<f64>,
    degree: Vec<f64>,
    /// Aggregated messages before normalization.
    agg: Vec<f64>,
    /// Input of `f`: (self, normalized aggregate).
    f_in: Vec<f64>,
    f_cache: MlpCache,
}

struct ConvIo<'a> {
    target: &'a [f64],
    other: &'a [f64],
    n_target: usize,
    n_other: usize,
    edge_target: &'a [usize],
    edge_other: &'a [usize],
    edge_feat: &'a [f64],
}

fn block_range(side: Side, d: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    // g input is (c_i, v_j, e_ij); returns (target rows, other rows) of g.w1.
    match side {
        Side::Constraints => (0..d, d..2 * d),
        Side::Variables => (d..2 * d, 0..d),
    }
}

fn half_conv(
    g: &Mlp2,
    f: &Mlp2,
    pre: Option<&Prenorm>,
    mean: bool,
    side: Side,
    io: &ConvIo<'_>,
) -> (Vec<f64>, ConvCache) {
    let d = g.hidden_dim();
    let (tb, ob) = block_range(side, d);
    let pt = matmul(
        io.n_target,
        d,
        d,
        io.target,
        g.w1.row_block(tb.start, tb.end),
    );
    let po = matmul(io.n_other, d, d, io.other, g.w1.row_block(ob.start, ob.end));
    let we = g.w1.row(2 * d);
    let n_edges = io.edge_target.len();
    let mut z = vec![0.0; n_edges * d];
    let mut hsum = vec![0.0; io.n_target * d];
    let mut degree = vec![0.0f64; io.n_target];
    for e in 0..n_edges {
        let (t, o, a) = (io.edge_target[e], io.edge_other[e], io.edge_feat[e]);
        degree[t] += 1.0;
        let ze = &mut z[e * d..(e + 1) * d];
        let (pt_row, po_row) = (&pt[t * d..(t + 1) * d], &po[o * d..(o + 1) * d]);
        let hs = &mut hsum[t * d..(t + 1) * d];
        for k in 0..d {
            let v = pt_row[k] + po_row[k] + a * we[k] + g.b1[k];
            ze[k] = v;
            hs[k] += v.max(0.0);
        }
    }
    let scale: Vec<f64> = degree
        .iter()
        .map(|&deg| if mean { 1.0 / deg.max(1.0) } else { 1.0 })
        .collect();
    let mut agg = matmul(io.n_target, d, d, &hsum, &g.w2.data);
    for t in 0..io.n_target {
        for k in 0..d {
            let v = &mut agg[t * d + k];
            *v = scale[t] * (*v + degree[t] * g.b2[k]);
        }
    }
    let mut normed = agg.clone();
    if let Some(p) = pre {
        p.apply(&mut normed);
    }
    let mut f_in = vec![0.0; io.n_target * 2 * d];
    for t in 0..io.n_target {
        f_in[t * 2 * d..t * 2 * d + d].copy_from_slice(&io.target[t * d..(t + 1) * d]);
        f_in[t * 2 * d + d..(t + 1) * 2 * d].copy_from_slice(&normed[t * d..(t + 1) * d]);
    }
    let (out, f_cache) = f.forward(&f_in, io.n_target);
    (
        out,
        ConvCache {
            z,
            hsum,
            scale,
            degree,
            agg,
            f_in,
            f_cache,
        },
    )
}

/// Returns (d target, d other) and accumulates into `gg`, `gf`.
#[allow(clippy::too_many_arguments)]
fn half_conv_backward(
    g: &Mlp2,
    f: &Mlp2,
    pre: Option<&Prenorm>,
    side: Side,
    io: &ConvIo<'_>,
    cache: &ConvCache,
    dout: &[f64],
    gg: &mut Mlp2,
    gf: &mut Mlp2,
) -> (Vec<f64>, Vec<f64>) {
    let d = g.hidden_dim();
    let (tb, ob) = block_range(side, d);
    let df_in = f
        .backward(&cache.f_in, io.n_target, &cache.f_cache, dout, gf, true)
        .expect("input gradient requested");
    let mut d_target = vec![0.0; io.n_target * d];
    let mut d_agg = vec![0.0; io.n_target * d];
    for t in 0..io.n_target {
        d_target[t * d..(t + 1) * d].copy_from_slice(&df_in[t * 2 * d..t * 2 * d + d]);
        d_agg[t * d..(t + 1) * d].copy_from_slice(&df_in[t * 2 * d + d..(t + 1) * 2 * d]);
    }
    if let Some(p) = pre {
        for row in d_agg.chunks_exact_mut(d) {
            for (v, s) in row.iter_mut().zip(&p.sigma) {
                *v /= s;
            }
        }
    }
    for t in 0..io.n_target {
        let s = cache.scale[t];
        for k in 0..d {
            d_agg[t * d + k] *= s;
            gg.b2[k] += cache.degree[t] * d_agg[t * d + k];
        }
    }
    matmul_at_b_acc(io.n_target, d, d, &cache.hsum, &d_agg, &mut gg.w2.data);
    let d_hsum = matmul_a_bt(io.n_target, d, d, &d_agg, &g.w2.data);
    let mut d_pt = vec![0.0; io.n_target * d];
    let mut d_po = vec![0.0; io.n_other * d];
    let we_row = 2 * d;
    for e in 0..io.edge_target.len() {
        let (t, o, a) = (io.edge_target[e], io.edge_other[e], io.edge_feat[e]);
        let ze = &cache.z[e * d..(e + 1) * d];
        for k in 0..d {
            if ze[k] > 0.0 {
                let dz = d_hsum[t * d + k];
                d_pt[t * d + k] += dz;
                d_po[o * d + k] += dz;
                gg.w1.data[we_row * d + k] += a * dz;
                gg.b1[k] += dz;
            }
        }
    }
    matmul_at_b_acc(
        io.n_target,
        d,
        d,
        io.target,
        &d_pt,
        &mut gg.w1.data[tb.start * d..tb.end * d],
    );
    matmul_at_b_acc(
        io.n_other,
        d,
        d,
        io.other,
        &d_po,
        &mut gg.w1.data[ob.start * d..ob.end * d],
    );
    let dt = matmul_a_bt(io.n_target, d, d, &d_pt, g.w1.row_block(tb.start, tb.end));
    for (a, b) in d_target.iter_mut().zip(dt) {
        *a += b;
    }
    let d_other = matmul_a_bt(io.n_other, d, d, &d_po, g.w1.row_block(ob.start, ob.end));
    (d_target, d_other)
}

/// Intermediate values of one forward pass.
pub(crate) struct Trace {
    c0: Vec<f64>,
    v0: Vec<f64>,
    c1: Vec<f64>,
    v1: Vec<f64>,
    embed_c: MlpCache,
    embed_v: MlpCache,
    conv_c: ConvCache,
    conv_v: ConvCache,
    head: MlpCache,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Trace {
    /// Constraint-side aggregate before normalization (`m x d`).
    pub(crate) fn agg_c(&self) -> &[f64] {
        &self.conv_c.agg
    }

    /// Variable-side aggregate before normalization (`n x d`).
    pub(crate) fn agg_v(&self) -> &[f64] {
        &self.conv_v.agg
    }
}

fn check_state(state: &BipartiteState) -> Result<(), GcnnError> {
    state.validate().map_err(GcnnError::Dimension)
}

fn check_finite(stage: &str, values: &[f64]) -> Result<(), GcnnError> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(at) => Err(GcnnError::NonFinite {
            stage: stage.to_string(),
            index: at,
            value: values[at],
        }),
    }
}

/// Softmax over `mask` entries; exactly zero elsewhere.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

pub(crate) fn forward_trace(
    state: &BipartiteState,
    params: &GcnnParams,
) -> Result<Trace, GcnnError> {
    check_state(state)?;
    params.check_dims()?;
    let (m, n) = (state.m, state.n);
    let mean = params.conv_mode == ConvMode::Mean;
    let (pre_c, pre_v) = if params.uses_prenorm() {
        (Some(&params.pre_c), Some(&params.pre_v))
    } else {
        (None, None)
    };
    let (c0, embed_c) = params.embed_c.forward(&state.cons_feats, m);
    let (v0, embed_v) = params.embed_v.forward(&state.var_feats, n);
    let io_c = ConvIo {
        target: &c0,
        other: &v0,
        n_target: m,
        n_other: n,
        edge_target: &state.edge_rows,
        edge_other: &state.edge_cols,
        edge_feat: &state.edge_feats,
    };
    let (c1, conv_c) = half_conv(
        &params.g_c,
        &params.f_c,
        pre_c,
        mean,
        Side::Constraints,
        &io_c,
    );
    check_finite("constraint convolution", &c1)?;
    let io_v = ConvIo {
        target: &v0,
        other: &c1,
        n_target: n,
        n_other: m,
        edge_target: &state.edge_cols,
        edge_other: &state.edge_rows,
        edge_feat: &state.edge_feats,
    };
    let (v1, conv_v) = half_conv(
        &params.g_v,
        &params.f_v,
        pre_v,
        mean,
        Side::Variables,
        &io_v,
    );
    check_finite("variable convolution", &v1)?;
    let (logits, head) = params.head.forward(&v1, n);
    check_finite("logits", &logits)?;
    let probs = masked_softmax(&logits, &state.candidate_mask);
    Ok(Trace {
        c0,
        v0,
        c1,
        v1,
        embed_c,
        embed_v,
        conv_c,
        conv_v,
        head,
        logits,
        probs,
    })
}

/// Candidate probabilities and raw logits for every variable.
pub fn forward(
    state: &BipartiteState,
    params: &GcnnParams,
) -> Result<(Vec<f64>, Vec<f64>), GcnnError> {
    let t = forward_trace(state, params)?;
    Ok((t.probs, t.logits))
}

/// Accumulates into `grads` the gradient of `weight * (-log p[action])`; returns the unweighted loss.
pub(crate) fn backward_sample(
    state: &BipartiteState,
    action: usize,
    params: &GcnnParams,
    weight: f64,
    grads: &mut GcnnParams,
) -> Result<f64, GcnnError> {
    let t = forward_trace(state, params)?;
    let (m, n) = (state.m, state.n);
    let loss = -t.probs[action].ln();
    let mut dlogits: Vec<f64> = t.probs.iter().map(|p| weight * p).collect();
    dlogits[action] -= weight;
    let (pre_c, pre_v) = if params.uses_prenorm() {
        (Some(&params.pre_c), Some(&params.pre_v))
    } else {
        (None, None)
    };
    let dv1 = params
        .head
        .backward(&t.v1, n, &t.head, &dlogits, &mut grads.head, true)
        .expect("input gradient requested");
    let io_v = ConvIo {
        target: &t.v0,
        other: &t.c1,
        n_target: n,
        n_other: m,
        edge_target: &state.edge_cols,
        edge_other: &state.edge_rows,
        edge_feat: &state.edge_feats,
    };
    let (mut dv0, dc1) = half_conv_backward(
        &params.g_v,
        &params.f_v,
        pre_v,
        Side::Variables,
        &io_v,
        &t.conv_v,
        &dv1,
        &mut grads.g_v,
        &mut grads.f_v,
    );
    let io_c = ConvIo {
        target: &t.c0,
        other: &t.v0,
        n_target: m,
        n_other: n,
        edge_target: &state.edge_rows,
        edge_other: &state.edge_cols,
        edge_feat: &state.edge_feats,
    };
    let (dc0, dv0_c) = half_conv_backward(
        &params.g_c,
        &params.f_c,
        pre_c,
        Side::Constraints,
        &io_c,
        &t.conv_c,
        &dc1,
        &mut grads.g_c,
        &mut grads.f_c,
    );
    for (a, b) in dv0.iter_mut().zip(dv0_c) {
        *a += b;
    }
    params.embed_c.backward(
        &state.cons_feats,
        m,
        &t.embed_c,
        &dc0,
        &mut grads.embed_c,
        false,
    );
    params.embed_v.backward(
        &state.var_feats,
        n,
        &t.embed_v,
        &dv0,
        &mut grads.embed_v,
        false,
    );
    Ok(loss)
}

/// Mean cross-entropy of the expert actions and its gradient.
pub fn loss_and_grad(
    batch: &[(&BipartiteState, usize)],
    params: &GcnnParams,
) -> Result<(f64, GcnnParams), GcnnError> {
    let mut grads = params.zeros_like();
    if batch.is_empty() {
        return Ok((0.0, grads));
    }
    let w = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (k, &(state, action)) in batch.iter().enumerate() {
        check_action(state, action, k)?;
        total += backward_sample(state, action, params, w, &mut grads)?;
    }
    Ok((total * w, grads))
}

/// Mean cross-entropy without gradients.
pub fn loss(batch: &[(&BipartiteState, usize)], params: &GcnnParams) -> Result<f64, GcnnError> {
    let mut total = 0.0;
    for (k, &(state, action)) in batch.iter().enumerate() {
        check_action(state, action, k)?;
        let (probs, _) = forward(state, params)?;
        total -= probs[action].ln();
    }
    Ok(total / batch.len().max(1) as f64)
}

fn check_action(state: &BipartiteState, action: usize, sample: usize) -> Result<(), GcnnError> {
    if action >= state.n || !state.candidate_mask[action] {
        return Err(GcnnError::ActionOutsideMask { sample, action });
    }
    Ok(())
}

/// Fits the constraint-side then the variable-side prenorm on the stream and freezes both.
pub fn prenorm_pretrain<'a>(
    states: impl IntoIterator<Item = &'a BipartiteState> + Clone,
    params: &mut GcnnParams,
) -> Result<(), GcnnError> {
    if params.conv_mode != ConvMode::SumPrenorm {
        return Err(GcnnError::Dimension(format!(
            "prenorm pretraining requires sum_prenorm, model uses {}",
            params.conv_mode
        )));
    }
    let d = params.hidden();
    params.pre_c = Prenorm::identity(d);
    params.pre_v = Prenorm::identity(d);
    let mut stats = ChannelStats::new(d);
    for s in states.clone() {
        stats.push_rows(forward_trace(s, params)?.agg_c());
    }
    params.pre_c = stats.to_prenorm()?;
    let mut stats = ChannelStats::new(d);
    for s in states {
        stats.push_rows(forward_trace(s, params)?.agg_v());
    }
    params.pre_v = stats.to_prenorm()?;
    Ok(())
}

/// Channel statistics of the normalized aggregates over a stream (constraint side, variable side).
pub fn prenorm_output_stats<'a>(
    states: impl IntoIterator<Item = &'a BipartiteState>,
    params: &GcnnParams,
) -> Result<(ChannelStats, ChannelStats), GcnnError> {
    let d = params.hidden();
    let (mut sc, mut sv) = (ChannelStats::new(d), ChannelStats::new(d));
    for s in states {
        let t = forward_trace(s, params)?;
        let mut c = t.agg_c().to_vec();
        params.pre_c.apply(&mut c);
        sc.push_rows(&c);
        let mut v = t.agg_v().to_vec();
        params.pre_v.apply(&mut v);
        sv.push_rows(&v);
    }
    Ok((sc, sv))
}
