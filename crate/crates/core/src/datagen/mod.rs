//! Imitation datasets: the strong-branching expert solves sampled instances and
//! every branching node is recorded as a (state, scores, action) sample.

mod shard;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bnb::{
    solve, BnbError, BranchingContext, Limits, NodeObserver, SolveResult, SolveStatus,
};
use crate::encoding::{extract, BipartiteState};
use crate::instances::{GeneratorParams, InstanceError, MilpInstance, RngSeed};
use crate::policies::{Decision, FsbPolicy};

pub use shard::{
    decode_record, encode_record, read_shard, write_shard, ShardReader, SHARD_MAGIC, SHARD_VERSION,
};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_NODE_LIMIT: usize = 500;
pub const DEFAULT_SHARD_SIZE: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record {record}: {detail}")]
    Corrupt { record: usize, detail: String },
    #[error("format: {0}")]
    Format(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
}

/// One expert state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub instance_id: String,
    pub node: usize,
    pub state: BipartiteState,
    pub candidates: Vec<usize>,
    pub sb_scores: Vec<f64>,
    pub expert_action: usize,
}

impl SampleRecord {
    /// Candidates attaining the maximal strong-branching score.
    pub fn expert_set(&self) -> Vec<usize> {
        let max = self
            .sb_scores
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        self.candidates
            .iter()
            .zip(&self.sb_scores)
            .filter(|(_, &s)| s == max)
            .map(|(&j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Valid => 2,
            Split::Test => 3,
        }
    }

    /// Generator seed of pool instance `index`; the split tag occupies the top byte,
    /// so pools of different splits never share a seed.
    pub fn instance_seed(self, base_seed: u64, index: usize) -> RngSeed {
        RngSeed(
            (self.tag() << 56) | ((base_seed & 0x00ff_ffff) << 32) | (index as u64 & 0xffff_ffff),
        )
    }

    pub fn instance_id(self, index: usize) -> String {
        format!("{}-{index:06}", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub split: Split,
    /// Samples to record.
    pub samples: usize,
    /// Number of distinct instances to draw from (with replacement).
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub params: GeneratorParams,
    pub splits: Vec<SplitConfig>,
    pub seed: u64,
    pub node_limit: usize,
    pub workers: usize,
    pub shard_size: usize,
}

impl CollectConfig {
    /// Train/valid/test quotas with pools ten times smaller than the quotas.
    pub fn new(
        params: GeneratorParams,
        train: usize,
        valid: usize,
        test: usize,
        seed: u64,
    ) -> Self {
        let splits = [
            (Split::Train, train),
            (Split::Valid, valid),
            (Split::Test, test),
        ]
        .into_iter()
        .filter(|&(_, n)| n > 0)
        .map(|(split, samples)| SplitConfig {
            split,
            samples,
            pool: (samples / 10).max(1),
        })
        .collect();
        Self {
            params,
            splits,
            seed,
            node_limit: DEFAULT_NODE_LIMIT,
            workers: 1,
            shard_size: DEFAULT_SHARD_SIZE,
        }
    }

    /// Resizes every pool to `samples / ratio` instances (at least one).
    pub fn with_pool_ratio(mut self, ratio: usize) -> Self {
        for s in &mut self.splits {
            s.pool = (s.samples / ratio.max(1)).max(1);
        }
        self
    }

    fn validate(&self) -> Result<(), DatagenError> {
        if self.splits.is_empty() || self.splits.iter().any(|s| s.samples == 0 || s.pool == 0) {
            return Err(DatagenError::Config(
                "quotas and pool sizes must be positive".into(),
            ));
        }
        if self.node_limit == 0 || self.shard_size == 0 {
            return Err(DatagenError::Config(
                "node limit and shard size must be positive".into(),
            ));
        }
        let splits: BTreeSet<Split> = self.splits.iter().map(|s| s.split).collect();
        if splits.len() != self.splits.len() {
            return Err(DatagenError::Config("split listed twice".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split: Split,
    pub samples: usize,
    pub pool: usize,
    /// Expert solves performed up to the one that filled the quota.
    pub total_solves: usize,
    /// Distinct instances that contributed at least one sample.
    pub unique_instances: usize,
    /// Solves stopped by the node limit.
    pub limit_hits: usize,
    pub shards: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub node_limit: usize,
    pub params: GeneratorParams,
    pub splits: Vec<SplitManifest>,
}

impl DatasetManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DatagenError> {
        let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
        let m: Self = toml::from_str(&text).map_err(|e| DatagenError::Manifest(e.to_string()))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(DatagenError::Manifest(format!(
                "format version {}, expected {MANIFEST_VERSION}",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), DatagenError> {
        let text = toml::to_string(self).map_err(|e| DatagenError::Manifest(e.to_string()))?;
        std::fs::write(dir.as_ref().join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn split(&self, split: Split) -> Option<&SplitManifest> {
        self.splits.iter().find(|s| s.split == split)
    }

    /// Regenerates the pool instance named by a record's `instance_id`.
    pub fn instance(&self, instance_id: &str) -> Result<MilpInstance, DatagenError> {
        let (name, index) = instance_id
            .split_once('-')
            .ok_or_else(|| DatagenError::Manifest(format!("bad instance id `{instance_id}`")))?;
        let split = Split::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| DatagenError::Manifest(format!("bad split in `{instance_id}`")))?;
        let index: usize = index
            .parse()
            .map_err(|_| DatagenError::Manifest(format!("bad index in `{instance_id}`")))?;
        Ok(self
            .params
            .generate(split.instance_seed(self.seed, index))?)
    }
}

/// Records every branching decision of the acting expert.
#[derive(Default)]
struct Recorder {
    instance_id: String,
    records: Vec<SampleRecord>,
}

impl NodeObserver for Recorder {
    fn on_branch(&mut self, ctx: &BranchingContext<'_>, decision: &Decision) {
        let sb = decision
            .scores
            .as_ref()
            .expect("the expert exposes its scores");
        self.records.push(SampleRecord {
            instance_id: self.instance_id.clone(),
            node: ctx.node.id,
            state: extract(ctx),
            candidates: sb.candidates.clone(),
            sb_scores: sb.scores.clone(),
            expert_action: decision.var,
        });
    }
}

/// Solves `inst` with the strong-branching expert and returns one record per branching.
pub fn record_solve(
    inst: &MilpInstance,
    instance_id: &str,
    node_limit: usize,
    seed: RngSeed,
) -> Result<(Vec<SampleRecord>, SolveResult), DatagenError> {
    let mut rec = Recorder {
        instance_id: instance_id.to_string(),
        records: Vec::new(),
    };
    let result = solve(
        inst,
        &mut FsbPolicy,
        Limits::nodes(node_limit),
        Some(&mut rec),
        seed,
    )?;
    Ok((rec.records, result))
}

struct SolveTask {
    index: usize,
    seed: RngSeed,
}

struct SolveOutput {
    index: usize,
    records: Vec<SampleRecord>,
    limit_hit: bool,
}

fn run_task(
    cfg: &CollectConfig,
    split: Split,
    task: &SolveTask,
) -> Result<SolveOutput, DatagenError> {
    let inst = cfg
        .params
        .generate(split.instance_seed(cfg.seed, task.index))?;
    let (records, result) = record_solve(
        &inst,
        &split.instance_id(task.index),
        cfg.node_limit,
        task.seed,
    )?;
    Ok(SolveOutput {
        index: task.index,
        records,
        limit_hit: result.status == SolveStatus::NodeLimit,
    })
}

fn run_batch(
    cfg: &CollectConfig,
    split: Split,
    tasks: &[SolveTask],
) -> Result<Vec<SolveOutput>, DatagenError> {
    if cfg.workers <= 1 || tasks.len() == 1 {
        return tasks.iter().map(|t| run_task(cfg, split, t)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = tasks
            .iter()
            .map(|t| scope.spawn(move || run_task(cfg, split, t)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("collection worker panicked"))
            .collect()
    })
}

/// Collects one split; the solve sequence depends only on the seed, not on `workers`.
fn collect_split(
    cfg: &CollectConfig,
    sc: &SplitConfig,
    dir: &Path,
    progress: &mut dyn FnMut(Split, usize, usize),
) -> Result<SplitManifest, DatagenError> {
    let split = sc.split;
    let split_dir = dir.join(split.name());
    std::fs::create_dir_all(&split_dir)?;
    let mut draw = ChaCha8Rng::seed_from_u64(RngSeed(cfg.seed).derive(0x5eed_0000 + split.tag()).0);
    let mut records: Vec<SampleRecord> = Vec::with_capacity(sc.samples);
    let mut shards = Vec::new();
    let mut unique = BTreeSet::new();
    let (mut total_solves, mut limit_hits, mut written) = (0, 0, 0);
    let mut solve_no: u64 = 0;
    'outer: while written + records.len() < sc.samples {
        let tasks: Vec<SolveTask> = (0..cfg.workers.max(1))
            .map(|_| {
                let t = SolveTask {
                    index: draw.gen_range(0..sc.pool),
                    seed: RngSeed(cfg.seed).derive((split.tag() << 40) + solve_no),
                };
                solve_no += 1;
                t
            })
            .collect();
        for out in run_batch(cfg, split, &tasks)? {
            total_solves += 1;
            limit_hits += out.limit_hit as usize;
            if !out.records.is_empty() {
                unique.insert(out.index);
            }
            for r in out.records {
                records.push(r);
                if records.len() == cfg.shard_size {
                    shards.push(flush_shard(&split_dir, split, shards.len(), &mut records)?);
                    written += cfg.shard_size;
                }
                if written + records.len() == sc.samples {
                    progress(split, sc.samples, sc.samples);
                    break 'outer;
                }
            }
            progress(split, written + records.len(), sc.samples);
        }
    }
    if !records.is_empty() {
        shards.push(flush_shard(&split_dir, split, shards.len(), &mut records)?);
    }
    Ok(SplitManifest {
        split,
        samples: sc.samples,
        pool: sc.pool,
        total_solves,
        unique_instances: unique.len(),
        limit_hits,
        shards,
    })
}

fn flush_shard(
    dir: &Path,
    split: Split,
    k: usize,
    records: &mut Vec<SampleRecord>,
) -> Result<String, DatagenError> {
    let name = format!("{}/shard-{k:05}.bin", split.name());
    write_shard(records, dir.join(format!("shard-{k:05}.bin")))?;
    records.clear();
    Ok(name)
}

pub fn collect(
    cfg: &CollectConfig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, DatagenError> {
    collect_with_progress(cfg, out_dir, &mut |_, _, _| {})
}

/// Runs the expert until every split quota is met, writes shards and the manifest.
pub fn collect_with_progress(
    cfg: &CollectConfig,
    out_dir: impl AsRef<Path>,
    progress: &mut dyn FnMut(Split, usize, usize),
) -> Result<DatasetManifest, DatagenError> {
    cfg.validate()?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut splits = Vec::new();
    for sc in &cfg.splits {
        splits.push(collect_split(cfg, sc, dir, progress)?);
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        seed: cfg.seed,
        node_limit: cfg.node_limit,
        params: cfg.params,
        splits,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

/// Paths of the shards of one split, in order.
pub fn shard_paths(
    dir: impl AsRef<Path>,
    manifest: &DatasetManifest,
    split: Split,
) -> Vec<PathBuf> {
    manifest
        .split(split)
        .map(|s| s.shards.iter().map(|p| dir.as_ref().join(p)).collect())
        .unwrap_or_default()
}

/// Reads every record of one split into memory.
pub fn load_split(dir: impl AsRef<Path>, split: Split) -> Result<Vec<SampleRecord>, DatagenError> {
    let dir = dir.as_ref();
    let manifest = DatasetManifest::load(dir)?;
    let mut out = Vec::new();
    for path in shard_paths(dir, &manifest, split) {
        for r in ShardReader::open(path)? {
            out.push(r?);
        }
    }
    Ok(out)
}
