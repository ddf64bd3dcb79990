//! `branchlab`: generate instances, solve them, collect expert data, train and
//! evaluate branching policies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use branchlab::bench::{
    ablate, accuracy, entropy_scatter, evaluate_specs, pearson, scatter_csv, uniform_accuracy,
    AblationConfig, AccuracyReport, EvalConfig,
};
use branchlab::bnb::{solve, Limits, SolveStatus};
use branchlab::datagen::{
    collect_with_progress, load_split, CollectConfig, DatagenError, Split, DEFAULT_NODE_LIMIT,
};
use branchlab::gcnn::{
    load_model, save_model, train_with_callback, ConvMode, GcnnError, TrainConfig,
};
use branchlab::instances::{
    load_instance, save_instance, Family, GeneratorParams, InstanceError, MilpInstance, RngSeed,
};
use branchlab::policies::from_spec;

const EXIT_INVARIANT: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const INSTANCE_EXT: &str = "milp";

#[derive(Parser)]
#[command(
    name = "branchlab",
    version,
    about = "Branch-and-bound with learned variable selection"
)]
struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for collection and evaluation sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated instances to a directory.
    Generate {
        #[arg(long)]
        family: Family,
        /// Preset (easy, medium, hard, desk, desk2x, bench) or AxB.
        #[arg(long, default_value = "desk")]
        size: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one instance file.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "fsb")]
        policy: String,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Record strong-branching samples into a dataset directory.
    Collect {
        #[arg(long)]
        family: Family,
        #[arg(long, default_value = "desk")]
        size: String,
        #[arg(long, default_value_t = 10_000)]
        train: usize,
        #[arg(long, default_value_t = 2_000)]
        valid: usize,
        #[arg(long, default_value_t = 0)]
        test: usize,
        #[arg(long, default_value_t = DEFAULT_NODE_LIMIT)]
        node_limit: usize,
        /// Samples per pool instance; each split draws from `quota / ratio` instances
        #[arg(long, default_value_t = 10)]
        pool_ratio: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy network on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sum_prenorm")]
        mode: ConvMode,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Imitation accuracy of a model on a dataset split.
    Accuracy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Solve every instance of a directory with every policy and seed.
    Evaluate {
        /// Comma-separated policy specs, e.g. fsb,rpb,random,gcnn:model.bin
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        #[arg(long)]
        instances: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Policy entropy against expert entropy, one CSV row per sample.
    Entropy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one model per convolution mode.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        /// Training seeds, one model per mode and seed.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        train_seeds: Vec<u64>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
}

#[derive(Args)]
struct LimitArgs {
    /// Seconds per solve.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated solver seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[command(flatten)]
    limits: LimitArgs,
    /// Run solves one at a time for low-variance timings, ignoring --workers.
    #[arg(long)]
    sequential: bool,
    /// Directory receiving report.json, runs.csv and summary.csv.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden,
            batch_size: self.batch_size,
            lr0: self.lr,
            max_epochs: self.max_epochs,
            seed,
            ..TrainConfig::default()
        }
    }
}

impl LimitArgs {
    fn limits(&self) -> Result<Limits> {
        if self.time_limit.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            bail!(Invariant(
                "time limit must be a positive number of seconds".into()
            ));
        }
        Ok(Limits {
            time: self.time_limit.map(Duration::from_secs_f64),
            nodes: self.node_limit,
        })
    }
}

impl SweepArgs {
    fn config(&self, workers: usize) -> Result<EvalConfig> {
        self.limits.limits()?;
        Ok(EvalConfig {
            seeds: self.seeds.clone(),
            time_limit: self.limits.time_limit,
            node_limit: self.limits.node_limit,
            workers: if self.sequential { 1 } else { workers },
        })
    }
}

/// A violated precondition or invariant (exit code 1).
#[derive(Debug)]
struct Invariant(String);

impl std::fmt::Display for Invariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invariant {}

/// A solve stopped by its limits before proving optimality (exit code 3).
#[derive(Debug)]
struct LimitReached(SolveStatus);

impl std::fmt::Display for LimitReached {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "solve stopped by its limit ({:?})", self.0)
    }
}

impl std::error::Error for LimitReached {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<LimitReached>().is_some() {
        return EXIT_LIMIT;
    }
    let io = err.chain().any(|e| {
        e.downcast_ref::<std::io::Error>().is_some()
            || matches!(
                e.downcast_ref::<InstanceError>(),
                Some(InstanceError::Io(_))
            )
            || matches!(e.downcast_ref::<DatagenError>(), Some(DatagenError::Io(_)))
            || matches!(e.downcast_ref::<GcnnError>(), Some(GcnnError::Io(_)))
    });
    if io {
        EXIT_IO
    } else {
        EXIT_INVARIANT
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let Cli {
        seed,
        workers,
        json,
        command,
    } = cli;
    match command {
        Command::Generate {
            family,
            size,
            count,
            out,
        } => generate(family, &size, count, &out, seed, json),
        Command::Solve {
            instance,
            policy,
            limits,
        } => solve_one(&instance, &policy, &limits, seed, json),
        Command::Collect {
            family,
            size,
            train,
            valid,
            test,
            node_limit,
            pool_ratio,
            out,
        } => {
            let params = GeneratorParams::preset(family, &size)?;
            let mut cfg =
                CollectConfig::new(params, train, valid, test, seed).with_pool_ratio(pool_ratio);
            cfg.node_limit = node_limit;
            cfg.workers = workers.max(1);
            let mut last = 0;
            let manifest = collect_with_progress(&cfg, &out, &mut |split, done, total| {
                let pct = 100 * done / total.max(1);
                if pct / 10 != last / 10 || done == total {
                    eprintln!("{}: {done}/{total}", split.name());
                    last = pct;
                }
            })
            .with_context(|| format!("collecting into {}", out.display()))?;
            for s in &manifest.splits {
                let line = format!(
                    "{}: {} samples, {} solves, {} unique instances, {} limit hits",
                    s.split.name(),
                    s.samples,
                    s.total_solves,
                    s.unique_instances,
                    s.limit_hits
                );
                if json {
                    println!(
                        "{}",
                        serde_json::json!({"split": s.split.name(), "samples": s.samples, "total_solves": s.total_solves, "unique_instances": s.unique_instances, "limit_hits": s.limit_hits})
                    );
                } else {
                    println!("{line}");
                }
            }
            Ok(())
        }
        Command::Train {
            data,
            out,
            mode,
            train,
        } => {
            let tr = load_split(&data, Split::Train)
                .with_context(|| format!("reading {}", data.display()))?;
            let va = load_split(&data, Split::Valid)
                .with_context(|| format!("reading {}", data.display()))?;
            let tr_pairs = branchlab::bench::training_pairs(&tr);
            let va_pairs = branchlab::bench::training_pairs(&va);
            let cfg = train.config(seed);
            let (params, history) =
                train_with_callback(&tr_pairs, &va_pairs, &cfg, mode, &mut |e| {
                    eprintln!(
                        "epoch {:>4}  train {:.4}  valid {:.4}  lr {:.1e}",
                        e.epoch, e.train_loss, e.valid_loss, e.lr
                    )
                })?;
            save_model(&params, &out).with_context(|| format!("writing {}", out.display()))?;
            let hist_path = out.with_extension("history.csv");
            std::fs::write(&hist_path, history.to_csv())
                .with_context(|| format!("writing {}", hist_path.display()))?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({"model": out, "best_epoch": history.best_epoch, "best_valid_loss": history.best_valid_loss})
                );
            } else {
                println!(
                    "best epoch {} (valid loss {:.4}); model written to {}",
                    history.best_epoch,
                    history.best_valid_loss,
                    out.display()
                );
            }
            Ok(())
        }
        Command::Accuracy { model, data, split } => {
            let params =
                load_model(&model).with_context(|| format!("reading {}", model.display()))?;
            let recs = load_split(&data, parse_split(&split)?)
                .with_context(|| format!("reading {}", data.display()))?;
            if recs.is_empty() {
                bail!(Invariant("split holds no samples".into()));
            }
            let acc = accuracy(&params, &recs)?;
            let uniform = uniform_accuracy(&recs);
            if json {
                println!("{}", serde_json::json!({"model": acc, "uniform": uniform}));
            } else {
                print_accuracy("model", &acc);
                print_accuracy("uniform", &uniform);
            }
            Ok(())
        }
        Command::Evaluate {
            policies,
            instances,
            sweep,
        } => {
            let insts = load_dir(&instances)?;
            for p in &policies {
                check_policy(p)?;
            }
            let report = evaluate_specs(&policies, &insts, &sweep.config(workers)?)?;
            if let Some(dir) = &sweep.report {
                write_reports(
                    dir,
                    &[
                        ("report.json", report.to_json()),
                        ("runs.csv", report.runs_csv()),
                        ("summary.csv", report.summary_csv()),
                    ],
                )?;
            }
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.table());
            }
            Ok(())
        }
        Command::Entropy {
            model,
            data,
            split,
            out,
        } => {
            let params =
                load_model(&model).with_context(|| format!("reading {}", model.display()))?;
            let recs = load_split(&data, parse_split(&split)?)
                .with_context(|| format!("reading {}", data.display()))?;
            let pairs = entropy_scatter(&params, &recs)?;
            std::fs::write(&out, scatter_csv(&pairs))
                .with_context(|| format!("writing {}", out.display()))?;
            let r = pearson(&pairs);
            if json {
                println!(
                    "{}",
                    serde_json::json!({"samples": pairs.len(), "pearson": r})
                );
            } else {
                println!("{} samples, pearson correlation {r:.4}", pairs.len());
            }
            Ok(())
        }
        Command::Ablate {
            data,
            instances,
            train_seeds,
            train,
            sweep,
        } => {
            let tr = load_split(&data, Split::Train)
                .with_context(|| format!("reading {}", data.display()))?;
            let va = load_split(&data, Split::Valid)
                .with_context(|| format!("reading {}", data.display()))?;
            let te = load_split(&data, Split::Test)
                .with_context(|| format!("reading {}", data.display()))?;
            let insts = load_dir(&instances)?;
            let cfg = AblationConfig {
                train: train.config(seed),
                seeds: train_seeds,
                eval: sweep.config(workers)?,
            };
            let report = ablate(&tr, &va, &te, &insts, &cfg)?;
            if let Some(dir) = &sweep.report {
                write_reports(
                    dir,
                    &[
                        ("ablation.json", report.to_json()),
                        ("ablation.csv", report.to_csv()),
                    ],
                )?;
            }
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.table());
            }
            Ok(())
        }
    }
}

fn generate(
    family: Family,
    size: &str,
    count: usize,
    out: &Path,
    seed: u64,
    json: bool,
) -> Result<()> {
    let params = GeneratorParams::preset(family, size)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for k in 0..count {
        let mut inst = params.generate(RngSeed(seed).derive(k as u64))?;
        inst.name = format!("{family}-{size}-{k:04}");
        let path = out.join(format!("{}.{INSTANCE_EXT}", inst.name));
        save_instance(&inst, &path).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    if json {
        println!("{}", serde_json::json!({ "written": written }));
    } else {
        println!("wrote {count} instances to {}", out.display());
    }
    Ok(())
}

fn solve_one(path: &Path, spec: &str, limits: &LimitArgs, seed: u64, json: bool) -> Result<()> {
    let inst = load_instance(path).with_context(|| format!("reading {}", path.display()))?;
    check_policy(spec)?;
    let mut policy = from_spec(spec)?;
    let res = solve(
        &inst,
        policy.as_mut(),
        limits.limits()?,
        None,
        RngSeed(seed),
    )?;
    if json {
        println!(
            "{}",
            serde_json::json!({
                "instance": inst.name,
                "policy": policy.name(),
                "status": res.status,
                "objective": res.objective,
                "nodes": res.nodes,
                "lp_iterations": res.lp_iterations,
                "wall_time": res.wall_time,
                "gap": res.final_gap,
            })
        );
    } else {
        println!("instance   {}", inst.name);
        println!("policy     {}", policy.name());
        println!("status     {:?}", res.status);
        match res.objective {
            Some(o) => println!("objective  {o}"),
            None => println!("objective  -"),
        }
        println!("nodes      {}", res.nodes);
        println!("time (s)   {:.3}", res.wall_time);
        println!("gap        {:.3e}", res.final_gap);
    }
    match res.status {
        SolveStatus::TimeLimit | SolveStatus::NodeLimit => Err(LimitReached(res.status).into()),
        _ => Ok(()),
    }
}

/// Checks that a learned policy's model file exists before building it.
fn check_policy(spec: &str) -> Result<()> {
    if let Some(path) = spec.strip_prefix("gcnn:") {
        std::fs::metadata(path).with_context(|| format!("model file {path}"))?;
    }
    Ok(())
}

fn parse_split(name: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| {
            Invariant(format!(
                "unknown split '{name}' (expected train, valid or test)"
            ))
            .into()
        })
}

/// Instance files of a directory, sorted by file name.
fn load_dir(dir: &Path) -> Result<Vec<(String, MilpInstance)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == INSTANCE_EXT));
    paths.sort();
    if paths.is_empty() {
        bail!(Invariant(format!(
            "no .{INSTANCE_EXT} files in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let inst = load_instance(p).with_context(|| format!("reading {}", p.display()))?;
            let name = p
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            Ok((name, inst))
        })
        .collect()
}

fn write_reports(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn print_accuracy(label: &str, acc: &AccuracyReport) {
    println!(
        "{label:<8} acc@1 {:5.1}%  acc@5 {:5.1}%  acc@10 {:5.1}%  ({} samples)",
        acc.at(1),
        acc.at(5),
        acc.at(10),
        acc.samples
    );
}
