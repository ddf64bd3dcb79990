use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{accuracy, mean, shifted_geomean, AccuracyReport};
use crate::bnb::{solve, Limits, SolveStatus};
use crate::datagen::SampleRecord;
use crate::encoding::BipartiteState;
use crate::gcnn::{train, ConvMode, GcnnError, GcnnParams, TrainConfig};
use crate::instances::{MilpInstance, RngSeed};
use crate::policies::{from_spec, BranchingPolicy, LearnedPolicy, PolicyError};

/// Gap below which two solving times count as a tie.
const WIN_TIE_SECS: f64 = 1e-3;

pub type PolicyFactory =
    Arc<dyn Fn() -> Result<Box<dyn BranchingPolicy + Send>, PolicyError> + Send + Sync>;

#[derive(Clone)]
pub struct PolicyEntry {
    pub name: String,
    pub factory: PolicyFactory,
}

impl PolicyEntry {
    pub fn from_spec(spec: &str) -> Result<Self, PolicyError> {
        from_spec(spec)?;
        let owned = spec.to_string();
        Ok(Self {
            name: spec.to_string(),
            factory: Arc::new(move || from_spec(&owned)),
        })
    }

    pub fn learned(name: impl Into<String>, params: GcnnParams) -> Self {
        let params = Arc::new(params);
        Self {
            name: name.into(),
            factory: Arc::new(move || {
                Ok(Box::new(LearnedPolicy::new((*params).clone()))
                    as Box<dyn BranchingPolicy + Send>)
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    /// Per-run time limit in seconds.
    pub time_limit: Option<f64>,
    pub node_limit: Option<usize>,
    /// Concurrent runs; 1 gives sequential, low-variance timings.
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            time_limit: None,
            node_limit: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub policy: String,
    pub instance: String,
    pub seed: u64,
    /// Solver status, or `error` when the run failed.
    pub status: String,
    pub solved: bool,
    pub wall_time: f64,
    pub nodes: usize,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: usize,
    pub solved: usize,
    /// 1-shifted geometric mean of solving times, unsolved runs at the time limit.
    pub time_geomean: f64,
    /// Geometric mean of node counts over the commonly solved cells.
    pub nodes_geomean: f64,
    pub wins: usize,
    /// Arithmetic mean over instances of the mean per-seed relative deviation of node counts, in percent.
    pub nodes_rel_dev_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policies: Vec<String>,
    pub instances: Vec<String>,
    pub seeds: Vec<u64>,
    /// (instance, seed) cells solved by every policy.
    pub common_cells: usize,
    pub summary: Vec<PolicySummary>,
    pub runs: Vec<EvalRun>,
}

impl EvalReport {
    pub fn policy(&self, name: &str) -> Option<&PolicySummary> {
        self.summary.iter().find(|s| s.policy == name)
    }

    pub fn run(&self, policy: &str, instance: &str, seed: u64) -> Option<&EvalRun> {
        self.runs
            .iter()
            .find(|r| r.policy == policy && r.instance == instance && r.seed == seed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn runs_csv(&self) -> String {
        let mut out =
            String::from("policy,instance,seed,status,solved,wall_time,nodes,objective\n");
        for r in &self.runs {
            let obj = r.objective.map_or(String::new(), |o| o.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.policy, r.instance, r.seed, r.status, r.solved, r.wall_time, r.nodes, obj
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out =
            String::from("policy,runs,solved,time_geomean,nodes_geomean,wins,nodes_rel_dev_pct\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.policy,
                s.runs,
                s.solved,
                s.time_geomean,
                s.nodes_geomean,
                s.wins,
                s.nodes_rel_dev_pct
            );
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<24} {:>10} {:>18} {:>6} {:>9}\n",
            "policy", "time (s)", "nodes", "wins", "solved"
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<24} {:>10.3} {:>9.1} ±{:>5.1}% {:>6} {:>4}/{:<4}",
                s.policy,
                s.time_geomean,
                s.nodes_geomean,
                s.nodes_rel_dev_pct,
                s.wins,
                s.solved,
                s.runs
            );
        }
        let _ = writeln!(
            out,
            "nodes over {} commonly solved cells",
            self.common_cells
        );
        out
    }
}

fn run_one(
    entry: &PolicyEntry,
    name: &str,
    inst: &MilpInstance,
    seed: u64,
    cfg: &EvalConfig,
) -> EvalRun {
    let limits = Limits {
        time: cfg.time_limit.map(Duration::from_secs_f64),
        nodes: cfg.node_limit,
    };
    let start = Instant::now();
    let outcome = (entry.factory)()
        .map_err(|e| e.to_string())
        .and_then(|mut policy| {
            solve(inst, policy.as_mut(), limits, None, RngSeed(seed)).map_err(|e| e.to_string())
        });
    let mut run = EvalRun {
        policy: entry.name.clone(),
        instance: name.to_string(),
        seed,
        status: "error".into(),
        solved: false,
        wall_time: start.elapsed().as_secs_f64(),
        nodes: 0,
        objective: None,
        error: None,
    };
    match outcome {
        Ok(res) => {
            run.solved = matches!(res.status, SolveStatus::Optimal | SolveStatus::Infeasible);
            run.status = serde_json::to_value(res.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            run.wall_time = res.wall_time;
            run.nodes = res.nodes;
            run.objective = res.objective;
        }
        Err(e) => run.error = Some(e),
    }
    run
}

/// Solves every (policy, instance, seed) cell and aggregates the results.
pub fn evaluate(
    policies: &[PolicyEntry],
    instances: &[(String, MilpInstance)],
    cfg: &EvalConfig,
) -> EvalReport {
    let cells: Vec<(usize, usize, u64)> = policies
        .iter()
        .enumerate()
        .flat_map(|(p, _)| {
            instances
                .iter()
                .enumerate()
                .flat_map(move |(i, _)| cfg.seeds.iter().map(move |&s| (p, i, s)))
        })
        .collect();
    let results: Vec<Mutex<Option<EvalRun>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(p, i, s)) = cells.get(k) else {
            break;
        };
        let run = run_one(&policies[p], &instances[i].0, &instances[i].1, s, cfg);
        *results[k].lock().expect("result slot") = Some(run);
    };
    let workers = cfg.workers.max(1).min(cells.len().max(1));
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(work);
            }
        });
    }
    let runs: Vec<EvalRun> = results
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot")
                .expect("every cell ran")
        })
        .collect();
    aggregate(policies, instances, cfg, runs)
}

/// Convenience wrapper resolving policies from spec strings.
pub fn evaluate_specs(
    specs: &[String],
    instances: &[(String, MilpInstance)],
    cfg: &EvalConfig,
) -> Result<EvalReport, PolicyError> {
    let entries = specs
        .iter()
        .map(|s| PolicyEntry::from_spec(s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate(&entries, instances, cfg))
}

fn aggregate(
    policies: &[PolicyEntry],
    instances: &[(String, MilpInstance)],
    cfg: &EvalConfig,
    runs: Vec<EvalRun>,
) -> EvalReport {
    let n_cells = instances.len() * cfg.seeds.len();
    // runs are laid out policy-major, then instance, then seed.
    let at = |p: usize, c: usize| &runs[p * n_cells + c];
    let common: Vec<usize> = (0..n_cells)
        .filter(|&c| (0..policies.len()).all(|p| at(p, c).solved))
        .collect();
    let mut wins = vec![0usize; policies.len()];
    for c in 0..n_cells {
        let mut times: Vec<(f64, usize)> = (0..policies.len())
            .filter(|&p| at(p, c).solved)
            .map(|p| (at(p, c).wall_time, p))
            .collect();
        times.sort_by(|a, b| a.0.total_cmp(&b.0));
        match times.as_slice() {
            [] => {}
            [(_, p)] => wins[*p] += 1,
            [(t0, p), (t1, _), ..] => {
                if t1 - t0 > WIN_TIE_SECS {
                    wins[*p] += 1;
                }
            }
        }
    }
    let n_seeds = cfg.seeds.len();
    let summary = policies
        .iter()
        .enumerate()
        .map(|(p, entry)| {
            let mine: Vec<&EvalRun> = (0..n_cells).map(|c| at(p, c)).collect();
            let times: Vec<f64> = mine
                .iter()
                .map(|r| match (r.solved, cfg.time_limit) {
                    (false, Some(limit)) => limit,
                    _ => r.wall_time,
                })
                .collect();
            let nodes: Vec<f64> = common.iter().map(|&c| at(p, c).nodes as f64).collect();
            let devs: Vec<f64> = (0..instances.len())
                .map(|i| {
                    let ns: Vec<f64> = (0..n_seeds)
                        .map(|s| at(p, i * n_seeds + s).nodes as f64)
                        .collect();
                    let mu = mean(&ns);
                    if mu > 0.0 {
                        mean(&ns.iter().map(|n| (n - mu).abs() / mu).collect::<Vec<_>>())
                    } else {
                        0.0
                    }
                })
                .collect();
            PolicySummary {
                policy: entry.name.clone(),
                runs: mine.len(),
                solved: mine.iter().filter(|r| r.solved).count(),
                time_geomean: shifted_geomean(&times, 1.0),
                nodes_geomean: shifted_geomean(&nodes, 0.0),
                wins: wins[p],
                nodes_rel_dev_pct: 100.0 * mean(&devs),
            }
        })
        .collect();
    EvalReport {
        policies: policies.iter().map(|p| p.name.clone()).collect(),
        instances: instances.iter().map(|i| i.0.clone()).collect(),
        seeds: cfg.seeds.clone(),
        common_cells: common.len(),
        summary,
        runs,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub train: TrainConfig,
    /// Training seeds; each mode trains once per seed.
    pub seeds: Vec<u64>,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: String,
    pub accuracy: AccuracyReport,
    pub eval: PolicySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub modes: Vec<ModeResult>,
    pub eval: EvalReport,
}

impl AblationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>8} {:>8} {:>8} {:>10} {:>10} {:>6}\n",
            "mode", "acc@1", "acc@5", "acc@10", "time (s)", "nodes", "wins"
        );
        for m in &self.modes {
            let _ = writeln!(
                out,
                "{:<12} {:>8.1} {:>8.1} {:>8.1} {:>10.3} {:>10.1} {:>6}",
                m.mode,
                m.accuracy.at(1),
                m.accuracy.at(5),
                m.accuracy.at(10),
                m.eval.time_geomean,
                m.eval.nodes_geomean,
                m.eval.wins
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "mode,acc1,acc1_std,acc5,acc5_std,acc10,acc10_std,time_geomean,nodes_geomean,wins\n",
        );
        for m in &self.modes {
            let a = &m.accuracy;
            let std = |k| a.std.iter().find(|(kk, _)| *kk == k).map_or(0.0, |p| p.1);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                m.mode,
                a.at(1),
                std(1),
                a.at(5),
                std(5),
                a.at(10),
                std(10),
                m.eval.time_geomean,
                m.eval.nodes_geomean,
                m.eval.wins
            );
        }
        out
    }
}

/// Trains one model per convolution mode on identical data and seeds, then
/// reports test accuracy and closed-loop performance side by side.
pub fn ablate(
    train_set: &[SampleRecord],
    valid_set: &[SampleRecord],
    test_set: &[SampleRecord],
    instances: &[(String, MilpInstance)],
    cfg: &AblationConfig,
) -> Result<AblationReport, GcnnError> {
    let (tr, va) = (training_pairs(train_set), training_pairs(valid_set));
    let modes = [ConvMode::Mean, ConvMode::Sum, ConvMode::SumPrenorm];
    let mut entries = Vec::new();
    let mut accs: BTreeMap<usize, Vec<AccuracyReport>> = BTreeMap::new();
    for (k, &mode) in modes.iter().enumerate() {
        for &seed in &cfg.seeds {
            let tc = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let (params, _) = train(&tr, &va, &tc, mode)?;
            accs.entry(k)
                .or_default()
                .push(accuracy(&params, test_set)?);
            entries.push(PolicyEntry::learned(
                format!("{}/seed{seed}", mode.name()),
                params,
            ));
        }
    }
    let eval = evaluate(&entries, instances, &cfg.eval);
    let modes = modes
        .iter()
        .enumerate()
        .map(|(k, mode)| {
            let per_seed: Vec<&PolicySummary> = eval.summary
                [k * cfg.seeds.len()..(k + 1) * cfg.seeds.len()]
                .iter()
                .collect();
            ModeResult {
                mode: mode.name().to_string(),
                accuracy: AccuracyReport::combine(&accs[&k]),
                eval: merge_summaries(mode.name(), &per_seed),
            }
        })
        .collect();
    Ok(AblationReport { modes, eval })
}

pub fn training_pairs(records: &[SampleRecord]) -> Vec<(&BipartiteState, usize)> {
    records
        .iter()
        .map(|r| (&r.state, r.expert_action))
        .collect()
}

/// Averages per-seed summaries of one mode (geometric means combined geometrically).
fn merge_summaries(name: &str, parts: &[&PolicySummary]) -> PolicySummary {
    let geo = |f: fn(&PolicySummary) -> f64, shift: f64| {
        shifted_geomean(&parts.iter().map(|p| f(p)).collect::<Vec<_>>(), shift)
    };
    PolicySummary {
        policy: name.to_string(),
        runs: parts.iter().map(|p| p.runs).sum(),
        solved: parts.iter().map(|p| p.solved).sum(),
        time_geomean: geo(|p| p.time_geomean, 1.0),
        nodes_geomean: geo(|p| p.nodes_geomean, 0.0),
        wins: parts.iter().map(|p| p.wins).sum(),
        nodes_rel_dev_pct: mean(
            &parts
                .iter()
                .map(|p| p.nodes_rel_dev_pct)
                .collect::<Vec<_>>(),
        ),
    }
}
