//! Acceptance suite: one PASS/FAIL line per criterion and a summary.
//!
//! `ACCEPTANCE_ONLY=3,7` runs a subset. The imitation dataset and trained model are
//! kept under the cargo target tmpdir and reused while their configuration matches;
//! `ACCEPTANCE_FRESH=1` rebuilds them. Failed criteria exit non-zero only under
//! `ACCEPTANCE_STRICT=1`, so the remaining test targets still run.
#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use branchlab::bench::{
    ablate, accuracy, evaluate, shifted_geomean, uniform_accuracy, AblationConfig, EvalConfig,
    EvalReport, PolicyEntry, ACC_KS,
};
use branchlab::bnb::{solve, Limits, SolveStatus};
use branchlab::datagen::{
    collect, load_split, CollectConfig, DatasetManifest, SampleRecord, Split,
};
use branchlab::gcnn::{
    forward, load_model, loss, loss_and_grad, masked_softmax, prenorm_output_stats,
    prenorm_pretrain, save_model, train_with_callback, uniform_loss, ConvMode, GcnnParams,
    TrainConfig, SIGMA_FLOOR,
};
use branchlab::instances::{Family, GeneratorParams, InstanceBuilder, MilpInstance, RngSeed};
use branchlab::simplex::{BoundsOverride, LpModel, LpStatus};
use common::{
    classic_policies, oracle, permute_state, random_params, random_state, tiny_instances,
    vertex_oracle,
};
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Training data and model shared by the imitation criteria.
struct Imitation {
    dir: PathBuf,
    model: GcnnParams,
    test: Vec<SampleRecord>,
    /// Seconds spent collecting and training (from the run that built them).
    build_secs: f64,
}

const IMITATION_SAMPLES: (usize, usize, usize) = (10_000, 2_000, 2_000);
const IMITATION_SEED: u64 = 7;
const IMITATION_EPOCHS: usize = 40;
/// One pool instance per sample: the deterministic expert makes repeated draws identical.
const POOL_RATIO: usize = 1;

fn imitation_train_config() -> TrainConfig {
    TrainConfig {
        max_epochs: IMITATION_EPOCHS,
        ..TrainConfig::default()
    }
}

fn work_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn imitation() -> Result<Imitation, String> {
    let dir = work_dir().join("setcover-desk");
    let model_path = dir.join("model.bin");
    let stamp_path = dir.join("build.txt");
    let params = GeneratorParams::preset(Family::SetCover, "desk").map_err(|e| e.to_string())?;
    let (tr, va, te) = IMITATION_SAMPLES;
    let cfg = CollectConfig::new(params, tr, va, te, IMITATION_SEED).with_pool_ratio(POOL_RATIO);
    let tc = imitation_train_config();
    let signature = format!("{cfg:?} {tc:?}");
    let fresh = std::env::var_os("ACCEPTANCE_FRESH").is_some();
    let cached = std::fs::read_to_string(&stamp_path).ok().and_then(|s| {
        s.split_once('\n')
            .map(|(a, b)| (a.to_string(), b.trim().to_string()))
    });
    if let (false, Some((secs, sig))) = (fresh, cached) {
        if sig == signature {
            if let (Ok(model), Ok(test)) = (load_model(&model_path), load_split(&dir, Split::Test))
            {
                eprintln!("  reusing imitation artifacts in {}", dir.display());
                return Ok(Imitation {
                    dir,
                    model,
                    test,
                    build_secs: secs.parse().unwrap_or(f64::NAN),
                });
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    let t0 = Instant::now();
    let manifest = collect(&cfg, &dir).map_err(|e| e.to_string())?;
    for s in &manifest.splits {
        eprintln!(
            "  {}: {} samples from {} solves, {} unique instances",
            s.split.name(),
            s.samples,
            s.total_solves,
            s.unique_instances
        );
    }
    eprintln!("  collected in {:.0}s", t0.elapsed().as_secs_f64());
    let train = load_split(&dir, Split::Train).map_err(|e| e.to_string())?;
    let valid = load_split(&dir, Split::Valid).map_err(|e| e.to_string())?;
    let test = load_split(&dir, Split::Test).map_err(|e| e.to_string())?;
    let tr_pairs = branchlab::bench::training_pairs(&train);
    let va_pairs = branchlab::bench::training_pairs(&valid);
    let (model, history) =
        train_with_callback(&tr_pairs, &va_pairs, &tc, ConvMode::SumPrenorm, &mut |e| {
            eprintln!(
                "  epoch {:>3} train {:.4} valid {:.4} lr {:.1e} ({:.0}s)",
                e.epoch,
                e.train_loss,
                e.valid_loss,
                e.lr,
                t0.elapsed().as_secs_f64()
            )
        })
        .map_err(|e| e.to_string())?;
    save_model(&model, &model_path).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("history.csv"), history.to_csv()).map_err(|e| e.to_string())?;
    let build_secs = t0.elapsed().as_secs_f64();
    std::fs::write(&stamp_path, format!("{build_secs}\n{signature}\n"))
        .map_err(|e| e.to_string())?;
    Ok(Imitation {
        dir,
        model,
        test,
        build_secs,
    })
}

fn c1_exactness() -> Outcome {
    let t0 = Instant::now();
    let tiny = tiny_instances(50, 0);
    let mut checked = 0;
    let mut failures = Vec::new();
    for (k, t) in tiny.iter().enumerate() {
        let want = oracle(t);
        for mut policy in classic_policies(k as u64) {
            let r = solve(
                &t.inst,
                policy.as_mut(),
                Limits::default(),
                None,
                RngSeed(k as u64),
            );
            checked += 1;
            let ok = match (&r, want) {
                (Ok(r), Some(w)) => {
                    r.status == SolveStatus::Optimal
                        && r.objective.is_some_and(|o| (o - w).abs() <= 1e-6)
                }
                (Ok(r), None) => r.status == SolveStatus::Infeasible,
                (Err(_), _) => false,
            };
            if !ok {
                failures.push(format!("{}#{k}/{}", t.inst.name, policy.name()));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        failures.is_empty() && tiny.len() >= 200 && secs <= 120.0,
        format!(
            "{} instances x 4 policies = {checked} solves, {} mismatches{}; {secs:.1}s (limit 120s)",
            tiny.len(),
            failures.len(),
            failures.first().map_or(String::new(), |f| format!(" (first: {f})"))
        ),
    )
}

fn random_lp(rng: &mut impl Rng) -> MilpInstance {
    let n = rng.gen_range(2..=8);
    let m = rng.gen_range(1..=6);
    let mut b = InstanceBuilder::new("lp");
    for _ in 0..n {
        let lo = rng.gen_range(-3..=0) as f64;
        b.add_var(
            rng.gen_range(-5..=5) as f64,
            lo,
            lo + rng.gen_range(1..=5) as f64,
            false,
        );
    }
    for _ in 0..m {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            let a = rng.gen_range(-4..=4) as f64;
            if rng.gen_bool(0.7) && a != 0.0 {
                row.push((j, a));
            }
        }
        if row.is_empty() {
            row.push((rng.gen_range(0..n), 1.0));
        }
        b.add_le(row, rng.gen_range(-6..=10) as f64);
    }
    b.build().expect("random LP builds")
}

fn c2_lp_oracle() -> Outcome {
    let mut rng = RngSeed(2).rng();
    let (mut lps, mut lp_bad, mut optimal, mut worst) = (0, 0, 0, 0.0f64);
    while lps < 150 {
        let inst = random_lp(&mut rng);
        let sol = LpModel::new(&inst).solve_root();
        lps += 1;
        match vertex_oracle(&inst, &inst.lower, &inst.upper) {
            Some(best) => {
                optimal += 1;
                let err = (sol.objective - best).abs() / (1.0 + best.abs());
                worst = worst.max(err);
                lp_bad += (sol.status != LpStatus::Optimal || err > 1e-8) as usize;
            }
            None => lp_bad += (sol.status != LpStatus::Infeasible) as usize,
        }
    }
    let (mut perturbed, mut warm_bad, mut worst_warm) = (0, 0, 0.0f64);
    while perturbed < 300 {
        let inst = random_lp(&mut rng);
        let model = LpModel::new(&inst);
        let root = model.solve_root();
        if !root.is_optimal() {
            continue;
        }
        let j = rng.gen_range(0..inst.n_vars());
        let v = root.x[j] + rng.gen_range(-0.5..0.5);
        let (l, u) = (inst.lower[j], inst.upper[j]);
        let (nl, nu) = if rng.gen_bool(0.5) {
            (l, v.floor().clamp(l, u))
        } else {
            (v.ceil().clamp(l, u), u)
        };
        let warm = match model.resolve(&root, &BoundsOverride::single(j, nl, nu)) {
            Ok(w) => w,
            Err(_) => {
                warm_bad += 1;
                perturbed += 1;
                continue;
            }
        };
        let (mut lo, mut up) = (inst.lower.clone(), inst.upper.clone());
        lo[j] = nl;
        up[j] = nu;
        let cold = model.solve_with_bounds(&lo, &up).expect("valid bounds");
        perturbed += 1;
        if warm.status != cold.status {
            warm_bad += 1;
        } else if warm.is_optimal() {
            let err = (warm.objective - cold.objective).abs() / (1.0 + cold.objective.abs());
            worst_warm = worst_warm.max(err);
            warm_bad += (err > 1e-8) as usize;
        }
    }
    Outcome::new(
        lp_bad == 0 && warm_bad == 0 && lps >= 100 && perturbed >= 200,
        format!(
            "{lps} LPs ({optimal} feasible) vs vertex enumeration: {lp_bad} mismatches, worst rel err {worst:.1e}; \
             {perturbed} warm resolves vs cold: {warm_bad} mismatches, worst {worst_warm:.1e} (tol 1e-8)"
        ),
    )
}

fn c3_expert_ordering() -> Outcome {
    let t0 = Instant::now();
    let specs = ["fsb", "rpb", "random"];
    let entries: Vec<PolicyEntry> = specs
        .iter()
        .map(|s| PolicyEntry::from_spec(s).unwrap())
        .collect();
    let mut pooled: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut lines = Vec::new();
    let mut ordered = true;
    for family in Family::ALL {
        let params = GeneratorParams::preset(family, "bench").unwrap();
        let insts: Vec<(String, MilpInstance)> = (0..20)
            .map(|k| {
                (
                    format!("{family}-{k}"),
                    params.generate(RngSeed(1000 + k)).unwrap(),
                )
            })
            .collect();
        let report = evaluate(&entries, &insts, &EvalConfig::default());
        let g = |p: &str| report.policy(p).unwrap().nodes_geomean;
        let (f, r, x) = (g("fsb"), g("rpb"), g("random"));
        let ok = f < x && f <= r && r <= x && report.common_cells == 20;
        ordered &= ok;
        for p in specs {
            pooled
                .entry(p)
                .or_default()
                .extend(common_nodes(&report, p));
        }
        lines.push(format!(
            "{family}: fsb {f:.1} rpb {r:.1} random {x:.1} ratio {:.2}{}",
            f / x,
            if ok { "" } else { " [ordering violated]" }
        ));
        eprintln!("  {}", lines.last().unwrap());
    }
    let ratio = shifted_geomean(&pooled["fsb"], 0.0) / shifted_geomean(&pooled["random"], 0.0);
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        ordered && ratio <= 0.5 && secs <= 900.0,
        format!(
            "{}; pooled fsb/random ratio {ratio:.3} (limit 0.5); {secs:.0}s (limit 900s)",
            lines.join("; ")
        ),
    )
}

fn common_nodes(report: &EvalReport, policy: &str) -> Vec<f64> {
    let all_solved = |inst: &str, seed: u64| {
        report
            .runs
            .iter()
            .filter(|r| r.instance == inst && r.seed == seed)
            .all(|r| r.solved)
    };
    report
        .runs
        .iter()
        .filter(|r| r.policy == policy && all_solved(&r.instance, r.seed))
        .map(|r| r.nodes as f64)
        .collect()
}

fn c4_gradient_check() -> Outcome {
    let mut rng = RngSeed(4).rng();
    let mut worst_by_group: BTreeMap<String, f64> = BTreeMap::new();
    let names = GcnnParams::trainable_names();
    for mode in ConvMode::ALL {
        let states: Vec<_> = (0..3)
            .map(|_| {
                let (m, n) = (rng.gen_range(2..6), rng.gen_range(2..7));
                random_state(&mut rng, m, n)
            })
            .collect();
        let actions: Vec<usize> = states
            .iter()
            .map(|s| *s.candidates().choose(&mut rng).unwrap())
            .collect();
        let batch: Vec<_> = states.iter().zip(&actions).map(|(s, &a)| (s, a)).collect();
        let mut params = GcnnParams::new(mode, 8, 11);
        if mode == ConvMode::SumPrenorm {
            prenorm_pretrain(states.iter(), &mut params).unwrap();
        }
        let (_, grads) = loss_and_grad(&batch, &params).unwrap();
        let analytic: Vec<Vec<f64>> = grads.trainable().iter().map(|t| t.to_vec()).collect();
        let delta = 1e-5;
        for (k, g) in analytic.iter().enumerate() {
            let mut worst = 0.0f64;
            for i in 0..g.len() {
                let mut p = params.clone();
                p.trainable_mut()[k][i] += delta;
                let up = loss(&batch, &p).unwrap();
                p.trainable_mut()[k][i] -= 2.0 * delta;
                let down = loss(&batch, &p).unwrap();
                let fd = (up - down) / (2.0 * delta);
                worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6));
            }
            let e = worst_by_group.entry(names[k].clone()).or_insert(0.0);
            *e = e.max(worst);
        }
    }
    let (group, worst) = worst_by_group
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(g, w)| (g.clone(), *w))
        .unwrap();
    Outcome::new(
        worst <= 1e-4,
        format!(
            "{} parameter groups x 3 modes, max relative error {worst:.2e} in {group} (limit 1e-4, delta 1e-5)",
            worst_by_group.len()
        ),
    )
}

fn c5_prenorm() -> Outcome {
    let mut rng = RngSeed(5).rng();
    let states: Vec<_> = (0..40)
        .map(|_| {
            let (m, n) = (rng.gen_range(2..15), rng.gen_range(2..20));
            random_state(&mut rng, m, n)
        })
        .collect();
    let mut params = GcnnParams::new(ConvMode::SumPrenorm, 32, 5);
    prenorm_pretrain(states.iter(), &mut params).unwrap();
    let (sc, sv) = prenorm_output_stats(states.iter(), &params).unwrap();
    let (mut worst_mean, mut worst_std, mut skipped) = (0.0f64, 0.0f64, 0);
    for (stats, pre) in [(&sc, &params.pre_c), (&sv, &params.pre_v)] {
        let std = stats.std();
        for k in 0..pre.sigma.len() {
            worst_mean = worst_mean.max(stats.mean[k].abs());
            if pre.sigma[k] <= SIGMA_FLOOR {
                skipped += 1;
                continue;
            }
            worst_std = worst_std.max((std[k] - 1.0).abs());
        }
    }
    Outcome::new(
        worst_mean <= 1e-6 && worst_std <= 1e-6,
        format!(
            "64 channels over 40 states: max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e} (limit 1e-6); \
             {skipped} constant channels excluded from the std check"
        ),
    )
}

fn c6_equivariance() -> Outcome {
    let mut rng = RngSeed(6).rng();
    let mut worst = 0.0f64;
    for t in 0..50 {
        let (m, n) = (rng.gen_range(1..20), rng.gen_range(1..30));
        let s = random_state(&mut rng, m, n);
        let mut pr: Vec<usize> = (0..m).collect();
        let mut pc: Vec<usize> = (0..n).collect();
        let mut pe: Vec<usize> = (0..s.n_edges()).collect();
        pr.shuffle(&mut rng);
        pc.shuffle(&mut rng);
        pe.shuffle(&mut rng);
        let p = permute_state(&s, &pr, &pc, &pe);
        for mode in ConvMode::ALL {
            let params = random_params(mode, 16, 100 + t);
            let (a, _) = forward(&s, &params).unwrap();
            let (b, _) = forward(&p, &params).unwrap();
            for (j, &old) in pc.iter().enumerate() {
                worst = worst.max((b[j] - a[old]).abs());
            }
        }
    }
    Outcome::new(
        worst <= 1e-9,
        format!("50 states x 3 modes, max |p_perm - perm(p)| = {worst:.1e} (limit 1e-9)"),
    )
}

fn c7_imitation(im: &Result<Imitation, String>) -> Outcome {
    let t0 = Instant::now();
    let im = match im {
        Ok(im) => im,
        Err(e) => return Outcome::new(false, format!("could not build data or model: {e}")),
    };
    let acc = accuracy(&im.model, &im.test).unwrap();
    let uni = uniform_accuracy(&im.test);
    let secs = im.build_secs + t0.elapsed().as_secs_f64();
    Outcome::new(
        acc.at(1) >= 40.0 && acc.at(5) >= 75.0 && uni.at(1) <= 10.0 && secs <= 3600.0,
        format!(
            "held-out {} samples: acc@1 {:.1}% (min 40), acc@5 {:.1}% (min 75), acc@10 {:.1}%; \
             uniform acc@1 {:.1}% (max 10); {secs:.0}s (limit 3600s)",
            acc.samples,
            acc.at(1),
            acc.at(5),
            acc.at(10),
            uni.at(1)
        ),
    )
}

fn c8_closed_loop(im: &Result<Imitation, String>) -> Outcome {
    let im = match im {
        Ok(im) => im,
        Err(e) => return Outcome::new(false, format!("no model: {e}")),
    };
    let params = GeneratorParams::preset(Family::SetCover, "bench").unwrap();
    let insts: Vec<(String, MilpInstance)> = (0..20)
        .map(|k| {
            (
                format!("heldout-{k}"),
                params.generate(RngSeed(0xACCE_0000 + k)).unwrap(),
            )
        })
        .collect();
    let det = EvalConfig {
        node_limit: Some(20_000),
        ..EvalConfig::default()
    };
    let rnd = EvalConfig {
        seeds: vec![0, 1, 2],
        ..det.clone()
    };
    let learned = evaluate(
        &[PolicyEntry::learned("gcnn", im.model.clone())],
        &insts,
        &det,
    );
    let fsb = evaluate(&[PolicyEntry::from_spec("fsb").unwrap()], &insts, &det);
    let random = evaluate(&[PolicyEntry::from_spec("random").unwrap()], &insts, &rnd);
    let (mut below, mut obj_bad) = (0, 0);
    let (mut gn, mut fn_) = (Vec::new(), Vec::new());
    for (name, _) in &insts {
        let g = learned.run("gcnn", name, 0).unwrap();
        let f = fsb.run("fsb", name, 0).unwrap();
        let r: Vec<f64> = rnd
            .seeds
            .iter()
            .map(|&s| random.run("random", name, s).unwrap().nodes as f64)
            .collect();
        let r_solved = rnd
            .seeds
            .iter()
            .all(|&s| random.run("random", name, s).unwrap().solved);
        if g.solved && (!r_solved || (g.nodes as f64) < shifted_geomean(&r, 0.0)) {
            below += 1;
        }
        if g.solved && f.solved {
            gn.push(g.nodes as f64);
            fn_.push(f.nodes as f64);
            let (a, b) = (
                g.objective.unwrap_or(f64::NAN),
                f.objective.unwrap_or(f64::NAN),
            );
            if (a - b).abs() > 1e-6 * (1.0 + b.abs()) {
                obj_bad += 1;
            }
        } else {
            obj_bad += (g.solved != f.solved) as usize;
        }
    }
    let ratio = shifted_geomean(&gn, 0.0) / shifted_geomean(&fn_, 0.0);
    let rnd_geo = random.summary[0].nodes_geomean;
    Outcome::new(
        below * 5 >= insts.len() * 4 && ratio <= 3.0 && obj_bad == 0,
        format!(
            "set cover 250x500, 20 held-out: gcnn below random on {below}/20 (min 16); geomean nodes gcnn {:.1}, \
             fsb {:.1}, random {rnd_geo:.1}; gcnn/fsb {ratio:.2} (max 3); objective mismatches vs fsb {obj_bad}",
            shifted_geomean(&gn, 0.0),
            shifted_geomean(&fn_, 0.0)
        ),
    )
}

fn c9_generalization(im: &Result<Imitation, String>) -> Outcome {
    let im = match im {
        Ok(im) => im,
        Err(e) => return Outcome::new(false, format!("no model: {e}")),
    };
    let dir = work_dir().join("setcover-desk2x");
    let _ = std::fs::remove_dir_all(&dir);
    let params = GeneratorParams::preset(Family::SetCover, "desk2x").unwrap();
    let big = collect(
        &CollectConfig::new(params, 0, 0, 1000, 77).with_pool_ratio(POOL_RATIO),
        &dir,
    )
    .and_then(|_| load_split(&dir, Split::Test));
    let big = match big {
        Ok(b) => b,
        Err(e) => return Outcome::new(false, format!("collecting 2x labels failed: {e}")),
    };
    let acc = match accuracy(&im.model, &big) {
        Ok(a) => a,
        Err(e) => return Outcome::new(false, format!("model failed on 2x states: {e}")),
    };

    // Ablation on a slice of the imitation data, evaluated on a few harder instances.
    let load = |s| load_split(&im.dir, s).unwrap();
    let (tr, va) = (load(Split::Train), load(Split::Valid));
    let bench = GeneratorParams::preset(Family::SetCover, "bench").unwrap();
    let insts: Vec<(String, MilpInstance)> = (0..3)
        .map(|k| {
            (
                format!("ablate-{k}"),
                bench.generate(RngSeed(0xAB1A_7E00 + k)).unwrap(),
            )
        })
        .collect();
    let cfg = AblationConfig {
        train: TrainConfig {
            hidden: 32,
            max_epochs: 8,
            ..TrainConfig::default()
        },
        seeds: vec![0],
        eval: EvalConfig {
            node_limit: Some(5_000),
            ..EvalConfig::default()
        },
    };
    let report = ablate(&tr[..1500], &va[..300], &im.test[..500], &insts, &cfg);
    let (ablation_ok, table) = match report {
        Ok(r) => {
            let modes: Vec<&str> = r.modes.iter().map(|m| m.mode.as_str()).collect();
            (modes == ["mean", "sum", "sum_prenorm"], r.table())
        }
        Err(e) => (false, format!("ablation failed: {e}")),
    };
    for line in table.lines() {
        eprintln!("  {line}");
    }
    Outcome::new(
        acc.at(1) >= 30.0 && ablation_ok,
        format!(
            "set cover 200x200 ({} samples): acc@1 {:.1}% (min 30), acc@5 {:.1}%; ablation report over mean/sum/sum_prenorm {}",
            acc.samples,
            acc.at(1),
            acc.at(5),
            if ablation_ok { "emitted" } else { "missing" }
        ),
    )
}

fn c10_identities(im: &Result<Imitation, String>) -> Outcome {
    let geo = shifted_geomean(&[1.0, 3.0], 1.0);
    let geo_ok = (geo - (2.0 * 2f64.sqrt() - 1.0)).abs() <= 4.0 * f64::EPSILON
        && shifted_geomean(&[5.5; 7], 1.0) == 5.5;

    let mut rng = RngSeed(10).rng();
    let mut softmax_worst = 0.0f64;
    let mut ce_worst = 0.0f64;
    let mut mono = true;
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        mask[rng.gen_range(0..n)] = true;
        let p = masked_softmax(&logits, &mask);
        softmax_worst = softmax_worst.max((p.iter().sum::<f64>() - 1.0).abs());
        mono &= p.iter().zip(&mask).all(|(&v, &m)| m || v == 0.0);
    }
    let mut params = GcnnParams::new(ConvMode::Sum, 8, 0);
    params.zero_head();
    for _ in 0..50 {
        let (m, n) = (rng.gen_range(1..8), rng.gen_range(1..12));
        let s = random_state(&mut rng, m, n);
        let a = *s.candidates().choose(&mut rng).unwrap();
        let k = s.candidates().len() as f64;
        let l = loss(&[(&s, a)], &params).unwrap();
        ce_worst = ce_worst.max((l - k.ln()).abs());
        ce_worst = ce_worst.max((uniform_loss(&[(&s, a)]) - k.ln()).abs());
    }
    let mut acc_mono = true;
    if let Ok(im) = im {
        let a = accuracy(&im.model, &im.test).unwrap();
        let u = uniform_accuracy(&im.test);
        acc_mono &= ACC_KS
            .windows(2)
            .all(|w| a.at(w[0]) <= a.at(w[1]) && u.at(w[0]) <= u.at(w[1]));
    }
    for seed in 0..5 {
        let recs: Vec<_> = im
            .as_ref()
            .map(|im| im.test.iter().take(300).cloned().collect())
            .unwrap_or_default();
        if recs.is_empty() {
            break;
        }
        let a = accuracy(
            &GcnnParams::new(ConvMode::ALL[seed % 3], 16, seed as u64),
            &recs,
        )
        .unwrap();
        acc_mono &= ACC_KS.windows(2).all(|w| a.at(w[0]) <= a.at(w[1]));
    }
    Outcome::new(
        geo_ok && softmax_worst <= 1e-15 && mono && ce_worst <= 1e-12 && acc_mono,
        format!(
            "geomean{{1,3}} = {geo:.15} (2sqrt2-1 = {:.15}); softmax |sum-1| <= {softmax_worst:.1e}, zero off-mask {mono}; \
             uniform cross-entropy vs ln k max err {ce_worst:.1e}; acc@1<=acc@5<=acc@10 {acc_mono}",
            2.0 * 2f64.sqrt() - 1.0
        ),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));
    let names = [
        "exactness vs enumeration",
        "LP oracle and warm start",
        "expert quality ordering",
        "gradient check",
        "prenorm standardization",
        "permutation equivariance",
        "imitation at desk scale",
        "closed-loop value",
        "generalization and ablation",
        "metric identities",
    ];
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut run = |k: usize, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(k) {
            return;
        }
        eprintln!("criterion {k}: {}", names[k - 1]);
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed().as_secs_f64();
        println!(
            "[{}] {k:>2} {}: {} ({secs:.1}s)",
            if out.pass { "PASS" } else { "FAIL" },
            names[k - 1],
            out.detail
        );
        results.push((k, out, secs));
    };
    run(1, &mut c1_exactness);
    run(2, &mut c2_lp_oracle);
    run(3, &mut c3_expert_ordering);
    run(4, &mut c4_gradient_check);
    run(5, &mut c5_prenorm);
    run(6, &mut c6_equivariance);
    let needs_model = [7, 8, 9, 10].iter().any(|&k| wanted(k));
    let im = if needs_model {
        imitation()
    } else {
        Err("not built".into())
    };
    run(7, &mut || c7_imitation(&im));
    run(8, &mut || c8_closed_loop(&im));
    run(9, &mut || c9_generalization(&im));
    run(10, &mut || c10_identities(&im));
    let passed = results.iter().filter(|r| r.1.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if let Ok(im) = &im {
        let _ = DatasetManifest::load(&im.dir).map(|m| {
            let s = m.split(Split::Train).unwrap();
            println!(
                "imitation data: {} train samples from {} solves over {} unique instances",
                s.samples, s.total_solves, s.unique_instances
            );
        });
    }
    if passed != results.len() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
