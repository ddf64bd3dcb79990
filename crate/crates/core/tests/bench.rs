use branchlab::bench::{
    ablate, accuracy, entropy_scatter, evaluate, evaluate_specs, pearson, scatter_csv,
    uniform_accuracy, AblationConfig, EvalConfig, PolicyEntry, ACC_KS,
};
use branchlab::datagen::{collect, load_split, CollectConfig, SampleRecord, Split};
use branchlab::encoding::{BipartiteState, CONS_FEATS, VAR_FEATS};
use branchlab::gcnn::{ConvMode, GcnnParams, TrainConfig};
use branchlab::instances::{Family, GeneratorParams, MilpInstance, RngSeed};
use rand::seq::SliceRandom;
use rand::Rng;

fn instances(family: Family, size: &str, count: u64, base: u64) -> Vec<(String, MilpInstance)> {
    let params = GeneratorParams::preset(family, size).unwrap();
    (0..count)
        .map(|k| {
            (
                format!("{family}-{k}"),
                params.generate(RngSeed(base + k)).unwrap(),
            )
        })
        .collect()
}

#[test]
fn single_run_geomean_is_its_time() {
    let insts = instances(Family::Cauction, "desk", 1, 3);
    let report = evaluate_specs(&["fsb".into()], &insts, &EvalConfig::default()).unwrap();
    let s = &report.summary[0];
    assert_eq!(s.time_geomean, report.runs[0].wall_time);
    assert_eq!(s.nodes_geomean, report.runs[0].nodes as f64);
    assert_eq!((s.wins, s.solved, report.common_cells), (1, 1, 1));
}

#[test]
fn wins_and_common_cells_are_consistent() {
    let insts = instances(Family::Cauction, "desk", 3, 10);
    let cfg = EvalConfig {
        seeds: vec![0, 1],
        node_limit: Some(6),
        workers: 2,
        ..EvalConfig::default()
    };
    let specs: Vec<String> = ["fsb", "random", "pc"].map(String::from).to_vec();
    let report = evaluate_specs(&specs, &insts, &cfg).unwrap();
    assert_eq!(report.runs.len(), 3 * 3 * 2);
    let mut unique_fastest = 0;
    let mut common = 0;
    for (name, _) in &insts {
        for &seed in &cfg.seeds {
            let runs: Vec<_> = specs
                .iter()
                .map(|p| report.run(p, name, seed).unwrap())
                .collect();
            common += runs.iter().all(|r| r.solved) as usize;
            let mut t: Vec<f64> = runs
                .iter()
                .filter(|r| r.solved)
                .map(|r| r.wall_time)
                .collect();
            t.sort_by(f64::total_cmp);
            unique_fastest += match t.len() {
                0 => 0,
                1 => 1,
                _ => (t[1] - t[0] > 1e-3) as usize,
            };
        }
    }
    assert_eq!(
        report.summary.iter().map(|s| s.wins).sum::<usize>(),
        unique_fastest
    );
    assert_eq!(report.common_cells, common);
    for s in &report.summary {
        assert_eq!(s.runs, 6);
        let solved: Vec<f64> = report
            .runs
            .iter()
            .filter(|r| r.policy == s.policy && r.solved)
            .map(|r| r.wall_time)
            .collect();
        assert_eq!(s.solved, solved.len());
    }
    assert!(report.to_json().contains("\"summary\""));
    assert_eq!(report.runs_csv().lines().count(), 19);
    assert!(report.table().contains("fsb"));
}

#[test]
fn failures_are_recorded_not_fatal() {
    let insts = instances(Family::Cauction, "desk", 2, 0);
    let failing = PolicyEntry {
        name: "broken".into(),
        factory: std::sync::Arc::new(|| {
            Err(branchlab::policies::PolicyError::Model("no weights".into()))
        }),
    };
    let entries = vec![PolicyEntry::from_spec("random").unwrap(), failing];
    let cfg = EvalConfig {
        time_limit: Some(30.0),
        ..EvalConfig::default()
    };
    let report = evaluate(&entries, &insts, &cfg);
    let broken = report.policy("broken").unwrap();
    assert_eq!(broken.solved, 0);
    assert!((broken.time_geomean - 30.0).abs() < 1e-9);
    assert_eq!(report.common_cells, 0);
    assert!(report.runs.iter().any(|r| r.error.is_some()));
}

#[test]
fn strong_branching_needs_fewer_nodes_than_random() {
    let insts = instances(Family::Cauction, "bench", 6, 100);
    let report = evaluate_specs(
        &["fsb".into(), "random".into()],
        &insts,
        &EvalConfig::default(),
    )
    .unwrap();
    let (f, r) = (
        report.policy("fsb").unwrap(),
        report.policy("random").unwrap(),
    );
    assert_eq!(report.common_cells, 6);
    assert!(
        f.nodes_geomean < r.nodes_geomean,
        "{} vs {}",
        f.nodes_geomean,
        r.nodes_geomean
    );
}

fn synthetic_record(rng: &mut impl Rng, k: usize) -> SampleRecord {
    let n = k + 3;
    let mut candidates: Vec<usize> = (0..n).collect();
    candidates.shuffle(rng);
    candidates.truncate(k);
    candidates.sort_unstable();
    let mut scores: Vec<f64> = (0..k).map(|t| t as f64).collect();
    scores.shuffle(rng);
    let best = scores.iter().position(|&s| s == (k - 1) as f64).unwrap();
    let mut mask = vec![false; n];
    for &j in &candidates {
        mask[j] = true;
    }
    SampleRecord {
        instance_id: "x".into(),
        node: 0,
        state: BipartiteState {
            m: 1,
            n,
            cons_feats: vec![0.0; CONS_FEATS],
            edge_rows: vec![0; n],
            edge_cols: (0..n).collect(),
            edge_feats: vec![1.0; n],
            var_feats: vec![0.5; n * VAR_FEATS],
            candidate_mask: mask,
        },
        expert_action: candidates[best],
        candidates,
        sb_scores: scores,
    }
}

#[test]
fn uniform_model_hits_top_ten_at_the_expected_rate() {
    let mut rng = RngSeed(8).rng();
    let k = 25;
    let recs: Vec<_> = (0..2000).map(|_| synthetic_record(&mut rng, k)).collect();
    let mut params = GcnnParams::new(ConvMode::Sum, 8, 0);
    params.zero_head();
    let acc = accuracy(&params, &recs).unwrap();
    let p = 10.0 / k as f64;
    let sigma = (p * (1.0 - p) / recs.len() as f64).sqrt();
    assert!(
        (acc.at(10) / 100.0 - p).abs() <= 3.0 * sigma,
        "acc@10 {}",
        acc.at(10)
    );
    assert!((uniform_accuracy(&recs).at(10) / 100.0 - p).abs() < 1e-12);
    assert!(acc.at(1) <= acc.at(5) && acc.at(5) <= acc.at(10));
    let scatter = entropy_scatter(&params, &recs).unwrap();
    assert!(scatter
        .iter()
        .all(|&(h, e)| (h - (k as f64).ln()).abs() < 1e-12 && e == 0.0));
    assert_eq!(scatter_csv(&scatter).lines().count(), recs.len() + 1);
}

#[test]
fn accuracy_is_monotone_in_k_for_random_models() {
    let mut rng = RngSeed(17).rng();
    for seed in 0..10 {
        let recs: Vec<_> = (0..60)
            .map(|_| synthetic_record(&mut rng, rng_k(seed)))
            .collect();
        let params = GcnnParams::new(ConvMode::ALL[seed as usize % 3], 8, seed);
        let acc = accuracy(&params, &recs).unwrap();
        for w in ACC_KS.windows(2) {
            assert!(acc.at(w[0]) <= acc.at(w[1]));
        }
    }
}

fn rng_k(seed: u64) -> usize {
    2 + (seed as usize * 7) % 20
}

#[test]
fn ablation_is_deterministic_and_covers_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    let params = GeneratorParams::preset(Family::Cauction, "desk").unwrap();
    collect(&CollectConfig::new(params, 60, 20, 20, 4), dir.path()).unwrap();
    let tr = load_split(dir.path(), Split::Train).unwrap();
    let va = load_split(dir.path(), Split::Valid).unwrap();
    let te = load_split(dir.path(), Split::Test).unwrap();
    let insts = instances(Family::Cauction, "desk", 2, 500);
    let cfg = AblationConfig {
        train: TrainConfig {
            hidden: 8,
            max_epochs: 3,
            ..TrainConfig::default()
        },
        seeds: vec![0],
        eval: EvalConfig::default(),
    };
    let a = ablate(&tr, &va, &te, &insts, &cfg).unwrap();
    let b = ablate(&tr, &va, &te, &insts, &cfg).unwrap();
    let modes: Vec<&str> = a.modes.iter().map(|m| m.mode.as_str()).collect();
    assert_eq!(modes, ["mean", "sum", "sum_prenorm"]);
    for (x, y) in a.modes.iter().zip(&b.modes) {
        assert_eq!(x.accuracy, y.accuracy);
        assert_eq!(x.eval.nodes_geomean, y.eval.nodes_geomean);
    }
    let nodes = |r: &branchlab::bench::AblationReport| {
        r.eval.runs.iter().map(|x| x.nodes).collect::<Vec<_>>()
    };
    assert_eq!(nodes(&a), nodes(&b));
    assert_eq!(a.to_csv().lines().count(), 4);
    assert!(a.table().contains("sum_prenorm"));
    let scatter = entropy_scatter(&GcnnParams::new(ConvMode::Sum, 8, 1), &te).unwrap();
    assert!(pearson(&scatter).is_finite() || scatter.iter().all(|p| p.1 == scatter[0].1));
}
