use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rpg::harness::curve::{read_raw_csv, write_raw_csv};
use rpg::harness::{evaluate, run_experiment, selftest, ExperimentConfig, LearningCurve, Overrides, Task};
use rpg::learners::Method;
use rpg::nets::{Architecture, Network, PolicyNetwork};
use rpg::nn::checkpoint::{read_params, write_params};
use rpg::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rpg", version, about = "Recurrent policy-gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a multi-seed experiment and write raw and aggregate learning curves.
    Train(TrainArgs),
    /// Evaluate a saved policy checkpoint.
    Eval(EvalArgs),
    /// Run the gradient and oracle self-checks.
    Selftest,
    /// Merge raw per-run CSVs into one aggregate curve.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Flat TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    eval_interval: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Evaluate every 10 dialogs over 1000 dialogs.
    #[arg(long)]
    paper_protocol: bool,
    /// Worker threads for independent runs.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    /// Raw CSV files (`run,episodes,metric`); runs from different files are kept apart.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Aggregate CSV to write.
    #[arg(long)]
    out: PathBuf,
}

fn resolve(common: &CommonArgs, cli: Overrides) -> Result<ExperimentConfig> {
    let file = match &common.config {
        Some(p) => Overrides::from_file(p)?,
        None => Overrides::default(),
    };
    let cli = Overrides {
        task: common.task,
        seed: common.seed,
        eval_episodes: common.eval_episodes,
        ..cli
    };
    ExperimentConfig::resolve(&file, &cli)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn train(args: TrainArgs) -> Result<()> {
    let cli = Overrides {
        method: args.method,
        runs: args.runs,
        episodes: args.episodes,
        eval_interval: args.eval_interval,
        paper_protocol: args.paper_protocol.then_some(true),
        parallel: args.parallel,
        ..Overrides::default()
    };
    let cfg = resolve(&args.common, cli)?;
    let result = run_experiment(&cfg)?;
    fs::create_dir_all(&args.out)?;
    let stem = format!("{}_{}", cfg.task, cfg.learner.method);
    let raw_path = args.out.join(format!("{stem}_raw.csv"));
    let curve_path = args.out.join(format!("{stem}_curve.csv"));
    write_raw_csv(
        create(&raw_path)?,
        result.healthy_runs().map(|r| (r.run, r.points.as_slice())),
    )?;
    result.curve.write_csv(create(&curve_path)?)?;
    for r in &result.runs {
        write_params(r.policy.params(), create(&args.out.join(format!("{stem}_run{}.ckpt", r.run)))?)?;
    }
    let clamps: u64 = result.runs.iter().map(|r| r.clamp_events).sum();
    println!(
        "{} {}: {} runs ({} diverged), {} final {:.4}, normalized AUC {:.4}, ratio clamps {clamps}",
        cfg.task,
        cfg.learner.method,
        result.runs.len(),
        result.diverged,
        cfg.metric_name(),
        result.curve.points.last().map_or(f64::NAN, |p| p.mean),
        result.curve.normalized_auc(),
    );
    println!("wrote {} and {}", raw_path.display(), curve_path.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = resolve(&args.common, Overrides::default())?;
    let params = read_params(File::open(&args.checkpoint)?)?;
    let arch = Architecture::infer(&params, cfg.activation())?;
    let expected = cfg.policy_architecture();
    if arch.input_dim != expected.input_dim || arch.outputs != expected.outputs {
        return Err(Error::Config(format!(
            "checkpoint has {} inputs and {} actions; the {} task needs {} and {}",
            arch.input_dim, arch.outputs, cfg.task, expected.input_dim, expected.outputs
        )));
    }
    let policy = PolicyNetwork::new(Network::from_params(arch, params)?);
    let mut env = cfg.make_env()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = evaluate(&policy, &mut env, cfg.eval_episodes, &mut rng)?;
    println!("{} {} over {} episodes: {m:.6}", cfg.task, cfg.metric_name(), cfg.eval_episodes);
    Ok(())
}

fn curves(args: CurvesArgs) -> Result<()> {
    let mut sources = Vec::new();
    for p in &args.inputs {
        sources.push(read_raw_csv(File::open(p)?)?);
    }
    let curve = LearningCurve::from_records(sources.iter().map(Vec::as_slice))?;
    curve.write_csv(create(&args.out)?)?;
    println!("wrote {} ({} points)", args.out.display(), curve.points.len());
    Ok(())
}

/// Returns whether every check passed.
fn run_selftest() -> bool {
    let results = selftest::run_all();
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        if r.detail.is_empty() {
            println!("{tag} {}", r.name);
        } else {
            println!("{tag} {} ({})", r.name, r.detail);
        }
    }
    results.iter().all(|r| r.passed)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Curves(a) => curves(a),
        Command::Selftest => {
            return if run_selftest() { ExitCode::SUCCESS } else { ExitCode::from(2) };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
