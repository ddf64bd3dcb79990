use std::collections::BTreeMap;

use branchlab::bnb::{BranchingContext, Limits, NodeFate, NodeObserver};
use branchlab::datagen::{
    collect, load_split, read_shard, record_solve, shard_paths, CollectConfig, DatasetManifest,
    SampleRecord, Split,
};
use branchlab::instances::{GeneratorParams, RngSeed};
use branchlab::policies::{full_strong_branching, Decision, FsbPolicy, SbScoreVector};

fn auction() -> GeneratorParams {
    GeneratorParams::Cauction {
        items: 40,
        bids: 150,
    }
}

fn shard_bytes(dir: &std::path::Path) -> Vec<Vec<u8>> {
    let m = DatasetManifest::load(dir).unwrap();
    Split::ALL
        .into_iter()
        .flat_map(|s| shard_paths(dir, &m, s))
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

#[test]
fn quota_of_one_yields_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let m = collect(&CollectConfig::new(auction(), 1, 0, 0, 5), dir.path()).unwrap();
    let s = m.split(Split::Train).unwrap();
    assert_eq!(load_split(dir.path(), Split::Train).unwrap().len(), 1);
    assert!(s.total_solves >= 1);
    assert_eq!(s.unique_instances, 1);
    assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);
}

#[test]
fn quotas_are_exact_and_labels_valid() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = CollectConfig::new(auction(), 37, 11, 5, 9);
    cfg.shard_size = 10;
    let m = collect(&cfg, dir.path()).unwrap();
    for (split, quota) in [(Split::Train, 37), (Split::Valid, 11), (Split::Test, 5)] {
        let recs = load_split(dir.path(), split).unwrap();
        assert_eq!(recs.len(), quota);
        let sm = m.split(split).unwrap();
        assert_eq!(sm.shards.len(), quota.div_ceil(10));
        assert!(sm.unique_instances <= sm.pool.min(sm.total_solves));
        for r in &recs {
            assert!(r.instance_id.starts_with(split.name()));
            assert!(!r.candidates.is_empty());
            assert_eq!(r.candidates.len(), r.sb_scores.len());
            assert!(r.expert_set().contains(&r.expert_action));
            assert_eq!(r.state.candidates(), r.candidates);
            r.state.validate().unwrap();
        }
    }
}

#[test]
fn pools_are_disjoint_across_splits() {
    let mut seen = std::collections::HashSet::new();
    for split in Split::ALL {
        for i in 0..1000 {
            assert!(seen.insert(split.instance_seed(77, i)));
        }
    }
}

#[test]
fn fixed_seed_gives_byte_identical_shards_for_any_worker_count() {
    let mut cfg = CollectConfig::new(auction(), 25, 8, 0, 3);
    cfg.shard_size = 7;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let ma = collect(&cfg, a.path()).unwrap();
    let mb = collect(&cfg, b.path()).unwrap();
    cfg.workers = 3;
    let mc = collect(&cfg, c.path()).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma, mc);
    assert_eq!(shard_bytes(a.path()), shard_bytes(b.path()));
    assert_eq!(shard_bytes(a.path()), shard_bytes(c.path()));
}

/// Recomputes strong branching at every expert decision.
#[derive(Default)]
struct Replay(BTreeMap<usize, SbScoreVector>);

impl NodeObserver for Replay {
    fn on_branch(&mut self, ctx: &BranchingContext<'_>, _: &Decision) {
        self.0
            .insert(ctx.node.id, full_strong_branching(ctx).unwrap());
    }
}

#[test]
fn records_replay_through_strong_branching() {
    let dir = tempfile::tempdir().unwrap();
    let m = collect(&CollectConfig::new(auction(), 40, 0, 0, 21), dir.path()).unwrap();
    let recs = load_split(dir.path(), Split::Train).unwrap();
    let mut by_instance: BTreeMap<&str, Vec<&SampleRecord>> = BTreeMap::new();
    for r in &recs {
        by_instance.entry(&r.instance_id).or_default().push(r);
    }
    for (id, rs) in by_instance {
        let inst = m.instance(id).unwrap();
        let mut replay = Replay::default();
        branchlab::bnb::solve(
            &inst,
            &mut FsbPolicy,
            Limits::nodes(m.node_limit),
            Some(&mut replay),
            RngSeed(0),
        )
        .unwrap();
        for r in rs {
            let sb = &replay.0[&r.node];
            assert_eq!(sb.candidates, r.candidates);
            for (a, b) in sb.scores.iter().zip(&r.sb_scores) {
                assert!(
                    a == b || (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                    "{a} vs {b}"
                );
            }
            let mut set: Vec<usize> = sb
                .argmax_set()
                .into_iter()
                .map(|k| sb.candidates[k])
                .collect();
            set.sort_unstable();
            let mut want = r.expert_set();
            want.sort_unstable();
            assert_eq!(set, want);
        }
    }
}

#[test]
fn record_count_matches_branched_nodes() {
    let params = GeneratorParams::SetCover {
        rows: 6,
        cols: 10,
        density: 0.25,
        max_cost: 100,
    };
    for seed in 0..8 {
        let inst = params.generate(RngSeed(seed)).unwrap();
        let (recs, result) = record_solve(&inst, "train-000000", 500, RngSeed(0)).unwrap();
        let branched = result
            .trace
            .iter()
            .filter(|e| matches!(e.fate, NodeFate::Branched { .. }))
            .count();
        assert_eq!(recs.len(), branched);
        assert_eq!(recs.len(), result.branchings);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        branchlab::datagen::write_shard(&recs, &path).unwrap();
        assert_eq!(read_shard(&path).unwrap(), recs);
    }
}

#[test]
fn zero_quota_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = CollectConfig::new(auction(), 1, 0, 0, 0);
    cfg.splits[0].samples = 0;
    assert!(collect(&cfg, dir.path()).is_err());
}

#[test]
fn pool_ratio_resizes_every_split() {
    let cfg = CollectConfig::new(auction(), 100, 30, 5, 0);
    let pools = |c: &CollectConfig| c.splits.iter().map(|s| s.pool).collect::<Vec<_>>();
    assert_eq!(pools(&cfg), vec![10, 3, 1]);
    assert_eq!(pools(&cfg.clone().with_pool_ratio(1)), vec![100, 30, 5]);
    assert_eq!(pools(&cfg.with_pool_ratio(0)), vec![100, 30, 5]);
}
