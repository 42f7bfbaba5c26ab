use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arcgd_core::mlp::{
    eta_low_ablation, load_cifar10_binary, synthetic_dataset, train_many, MlpArchitecture,
    SplitDataset, TrainPolicy, TrainingCurve,
};
use arcgd_core::report;
use arcgd_core::rosenbrock::{run_matrix, MatrixOptions, DEFAULT_SIGMA_F, DEFAULT_SIGMA_G};
use arcgd_core::{
    ArcGdConfig, ConvergencePolicy, Error, MatrixConfig, OptimizerKind, OptimizerSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Synthetic stand-in used by `--synthetic`: 32 features, 4 classes.
const SYNTHETIC_FEATURES: usize = 32;
const SYNTHETIC_CLASSES: usize = 4;
const SYNTHETIC_SAMPLES: usize = 2000;

#[derive(Debug, Parser)]
#[command(name = "arcgd", version, about = "ArcGD optimizer benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the stochastic Rosenbrock matrix for configuration A or B.
    BenchRosenbrock(BenchArgs),
    /// Train an MLP classifier with one or more optimizers.
    TrainMlp(TrainArgs),
    /// Compare two ArcGD eta_low values across architectures.
    AblateEtaLow(AblateArgs),
    /// Print a table from a summary.json written by bench-rosenbrock.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConfigName {
    A,
    B,
}

impl From<ConfigName> for MatrixConfig {
    fn from(c: ConfigName) -> Self {
        match c {
            ConfigName::A => MatrixConfig::A,
            ConfigName::B => MatrixConfig::B,
        }
    }
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum, ignore_case = true)]
    config: ConfigName,
    /// Comma-separated problem dimensions.
    #[arg(long, value_delimiter = ',', default_values_t = MatrixConfig::DEFAULT_DIMS)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = MatrixConfig::DEFAULT_RUNS, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[arg(long, default_value_t = arcgd_core::DEFAULT_SEED)]
    seed: u64,
    /// Iteration cap per run; must exceed the 1000-iteration patience.
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write a trace CSV per run, keeping every k-th iteration.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trace_every: Option<u64>,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
struct DataSource {
    /// CIFAR-10 binary batch file, or a directory of data_batch_*.bin files.
    #[arg(long, group = "source")]
    data: Option<PathBuf>,
    /// Use the built-in Gaussian-cluster dataset instead.
    #[arg(long, group = "source")]
    synthetic: bool,
}

#[derive(Debug, Args)]
struct MlpCommon {
    #[command(flatten)]
    source: DataSource,
    /// Limit the dataset to this many samples before the 80:20 split.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    subset: Option<u64>,
    #[arg(long, default_value_t = arcgd_core::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: MlpCommon,
    #[arg(long, default_value = "tiny")]
    arch: String,
    /// Comma-separated optimizers.
    #[arg(long, value_delimiter = ',', default_value = "arcgd")]
    optimizer: Vec<OptimizerKind>,
    /// Override ArcGD's eta_low.
    #[arg(long)]
    eta_low: Option<f64>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: MlpCommon,
    /// Comma-separated architectures.
    #[arg(long, value_delimiter = ',', default_value = "tiny")]
    arch: Vec<String>,
    /// eta_low of the second arm; the first arm uses the default.
    #[arg(long, default_value_t = 0.1)]
    eta_low: f64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory containing summary.json.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BenchRosenbrock(a) => bench_rosenbrock(a),
        Command::TrainMlp(a) => train_mlp(a),
        Command::AblateEtaLow(a) => ablate(a),
        Command::Report(a) => print_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::Domain(_) | Error::Shape { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn bench_rosenbrock(args: BenchArgs) -> arcgd_core::Result<()> {
    let config = MatrixConfig::from(args.config);
    let mut policy = ConvergencePolicy::default();
    if let Some(m) = args.max_iters {
        policy.max_iterations = m;
    }
    let opts = MatrixOptions {
        dims: args.dims,
        runs_per_dim: args.runs,
        master_seed: args.seed,
        policy,
        trace_every: args.trace_every,
        ..MatrixOptions::default()
    };
    let report = run_matrix(config, &opts)?;

    for set in &report.sets {
        report::emit_run_csv(
            &args.out.join(format!("records_{}.csv", set.name)),
            &set.records,
        )?;
        if let Some(k) = args.trace_every {
            for (run, opt, trace) in &set.traces {
                let path = args
                    .out
                    .join("traces")
                    .join(format!("{}_run{run}_{opt}.csv", set.name));
                report::emit_trace_csv(&path, &report::subsample(trace, k))?;
            }
        }
    }
    let specs = config.optimizers();
    let metadata = json!({
        "config": config.to_string(),
        "dims": opts.dims,
        "runs_per_dim": opts.runs_per_dim,
        "seed": opts.master_seed,
        "policy": opts.policy,
        "sigma_f": DEFAULT_SIGMA_F,
        "sigma_g": DEFAULT_SIGMA_G,
        "optimizers": specs,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let summaries = report.summaries();
    report::emit_summary_json(&args.out.join("summary.json"), &summaries, &metadata)?;
    print_summary_table(&summaries);
    Ok(())
}

fn load_data(common: &MlpCommon) -> arcgd_core::Result<SplitDataset> {
    let subset = common.subset.map(|n| n as usize);
    match &common.source.data {
        Some(path) => load_cifar10_binary(path, subset, common.seed),
        None => synthetic_dataset(
            subset.unwrap_or(SYNTHETIC_SAMPLES),
            SYNTHETIC_FEATURES,
            SYNTHETIC_CLASSES,
            common.seed,
        )?
        .split(common.seed),
    }
}

fn resolve_arch(name: &str, data: &SplitDataset) -> arcgd_core::Result<MlpArchitecture> {
    MlpArchitecture::preset(name, data.n_features(), data.n_classes())
}

fn policy_for(common: &MlpCommon) -> arcgd_core::Result<TrainPolicy> {
    let mut policy = TrainPolicy {
        seed: common.seed,
        ..TrainPolicy::default()
    };
    if let Some(m) = common.max_iters {
        policy = policy.with_max_iterations(m);
    }
    policy.check()?;
    Ok(policy)
}

fn write_curves(out: &Path, curves: &[&TrainingCurve], suffix: &str) -> arcgd_core::Result<()> {
    for c in curves {
        let path = out.join(format!("curve_{}_{}{suffix}.csv", c.arch, c.optimizer));
        report::emit_mlp_curve_csv(&path, &c.points)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> arcgd_core::Result<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn train_mlp(args: TrainArgs) -> arcgd_core::Result<()> {
    let data = load_data(&args.common)?;
    let arch = resolve_arch(&args.arch, &data)?;
    let policy = policy_for(&args.common)?;
    let mut kinds = args.optimizer.clone();
    kinds.dedup();
    let specs: Vec<OptimizerSpec> = kinds
        .iter()
        .map(|&k| match (OptimizerSpec::defaults_for(k), args.eta_low) {
            (OptimizerSpec::ArcGd(cfg), Some(eta_low)) => {
                OptimizerSpec::ArcGd(ArcGdConfig { eta_low, ..cfg })
            }
            (spec, _) => spec,
        })
        .collect();
    for s in &specs {
        s.check()?;
    }
    let curves = train_many(&arch, &specs, &policy, &data)?;
    write_curves(&args.common.out, &curves.iter().collect::<Vec<_>>(), "")?;

    let results: Vec<_> = curves
        .iter()
        .map(|c| {
            json!({
                "optimizer": c.optimizer,
                "checkpoints": c.checkpoints,
                "final_iteration": c.final_iteration,
                "stopped_early": c.stopped_early,
                "final": c.final_point(),
                "max_abs_update": c.max_abs_update,
            })
        })
        .collect();
    let doc = json!({
        "metadata": {
            "seed": args.common.seed,
            "arch": arch,
            "policy": policy,
            "optimizers": specs,
            "data": args.common.source.data,
            "subset": args.common.subset,
            "train_samples": data.train.len(),
            "test_samples": data.test.len(),
            "monitor": "test_accuracy",
            "version": env!("CARGO_PKG_VERSION"),
        },
        "results": results,
    });
    write_json(&args.common.out.join("training.json"), &doc)?;
    for c in &curves {
        let last = c.final_point();
        println!(
            "{:<6} {:<6} iter {:>6}  train_acc {:.4}  test_acc {:.4}{}",
            c.arch,
            c.optimizer,
            c.final_iteration,
            last.train_acc,
            last.test_acc,
            if c.stopped_early {
                "  (early stop)"
            } else {
                ""
            }
        );
    }
    Ok(())
}

fn ablate(args: AblateArgs) -> arcgd_core::Result<()> {
    let data = load_data(&args.common)?;
    let archs = args
        .arch
        .iter()
        .map(|a| resolve_arch(a, &data))
        .collect::<arcgd_core::Result<Vec<_>>>()?;
    let policy = policy_for(&args.common)?;
    let base = ArcGdConfig::default();
    let arms = (base.eta_low, args.eta_low);
    ArcGdConfig {
        eta_low: arms.1,
        ..base
    }
    .check()?;
    let table = eta_low_ablation(&archs, &data, &policy, base, arms)?;
    report::emit_ablation_csv(&args.common.out.join("ablation.csv"), &table)?;
    for (a, b) in &table.curves {
        write_curves(&args.common.out, &[a], "_eta_a")?;
        write_curves(&args.common.out, &[b], "_eta_b")?;
    }
    let doc = json!({
        "seed": args.common.seed,
        "eta_low_a": arms.0,
        "eta_low_b": arms.1,
        "archs": archs,
        "policy": policy,
        "base": base,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&args.common.out.join("ablation_metadata.json"), &doc)?;
    println!(
        "{:<14} {:>10} {:>10} {:>10} {:>10}",
        "arch", "checkpoint", "acc_a", "acc_b", "delta"
    );
    for r in &table.rows {
        println!(
            "{:<14} {:>10} {:>10.4} {:>10.4} {:>+10.4}",
            r.arch, r.checkpoint, r.test_acc_a, r.test_acc_b, r.delta
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.4e}"))
}

fn print_summary_table(summaries: &[arcgd_core::RunSummary]) {
    println!(
        "{:<8} {:<6} {:>9} {:>8} {:>12} {:>12} {:>12} {:>12}",
        "set", "opt", "converged", "rate", "avg_iters", "avg_dist", "avg_loss", "avg_gnorm"
    );
    for s in summaries {
        println!(
            "{:<8} {:<6} {:>5}/{:<3} {:>7.1}% {:>12} {:>12} {:>12} {:>12}",
            s.test_set,
            s.optimizer,
            s.converged_runs,
            s.total_runs,
            s.convergence_rate_pct,
            fmt_opt(s.avg_iterations),
            fmt_opt(s.avg_distance),
            fmt_opt(s.avg_final_loss),
            fmt_opt(s.avg_final_gradnorm),
        );
    }
}

fn print_report(args: ReportArgs) -> arcgd_core::Result<()> {
    let file = std::fs::File::open(args.out.join("summary.json"))?;
    let summaries = report::parse_summary_json(file)?;
    print_summary_table(&summaries);
    Ok(())
}
