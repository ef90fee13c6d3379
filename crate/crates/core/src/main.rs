//! `basedb` command line: run sweeps, reproduce canned studies, verify
//! instance assumptions and print batch plans.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid config or arguments,
//! 3 infeasible plan, 4 a declared assumption does not hold.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use basedb::config::{ConfigError, Experiment, ExperimentConfig};
use basedb::engine::{replication_seed, Execution};
use basedb::report::{render_csv, render_curves, render_tree_dump, run_experiment};
use basedb::studies::Study;

#[derive(Parser)]
#[command(
    name = "basedb",
    version,
    about = "Batched nonparametric contextual bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a canned study.
    Reproduce {
        #[arg(long)]
        figure: Study,
        /// Print the canned config and exit.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check the declared smoothness and margin assumptions of the configured instance.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Point pairs for the smoothness scan.
        #[arg(long, default_value_t = 100_000)]
        pairs: usize,
        /// Context samples for the margin estimate.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
    },
    /// Print the batch plan of every binning cell.
    Plan {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Results CSV path (default: the config's `output`, else `<name>.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `replications`.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write per-batch leaves of replication 0 of each binning cell.
    #[arg(long)]
    tree_dump: Option<PathBuf>,
    /// Write mean regret curves per cell.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn runtime(message: impl ToString) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, run } => ExperimentConfig::from_path(&config)
            .map_err(Failure::from)
            .and_then(|cfg| execute(cfg, &run)),
        Command::Reproduce {
            figure,
            print_config,
            run,
        } => {
            if print_config {
                print!("{}", figure.config_text());
                Ok(())
            } else {
                execute(figure.config(), &run)
            }
        }
        Command::Verify {
            config,
            seed,
            pairs,
            samples,
        } => verify(&config, seed, pairs, samples),
        Command::Plan { config } => plan(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn execute(mut cfg: ExperimentConfig, args: &RunArgs) -> Result<(), Failure> {
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.replications = reps;
    }
    let experiment = cfg.resolve()?;
    println!("config_hash={}", experiment.hash);
    let out = args
        .out
        .clone()
        .or_else(|| experiment.config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", experiment.config.name)));
    with_threads(args.threads, || -> Result<(), Failure> {
        let output = run_experiment(&experiment, Execution::Parallel).map_err(runtime)?;
        write_file(&out, &render_csv(&experiment, &output))?;
        if let Some(path) = &args.curves {
            write_file(path, &render_curves(&output))?;
        }
        if let Some(path) = &args.tree_dump {
            write_file(path, &render_tree_dump(&experiment).map_err(runtime)?)?;
        }
        for c in &output.cells {
            println!(
                "{}: mean regret {} (se {}) over {} replications",
                c.cell.id, c.stats.mean_regret, c.stats.std_err, c.stats.reps
            );
        }
        for d in &output.derived {
            println!("{} {}: {} {}", d.cell_id, d.policy, d.value, d.note);
        }
        println!("wrote {}", out.display());
        Ok(())
    })
}

#[cfg(feature = "parallel")]
fn with_threads<R>(threads: Option<usize>, job: impl FnOnce() -> Result<R, Failure> + Send) -> Result<R, Failure>
where
    R: Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(runtime)?
            .install(job),
        None => job(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R>(threads: Option<usize>, job: impl FnOnce() -> Result<R, Failure>) -> Result<R, Failure> {
    if threads.is_some() {
        eprintln!("warning: built without the `parallel` feature; --threads is ignored");
    }
    job()
}

fn verify(path: &Path, seed: Option<u64>, pairs: usize, samples: usize) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    let experiment = cfg.resolve()?;
    let cell = &experiment.cells[0];
    let rep_seed = replication_seed(experiment.config.master_seed, &cell.id, 0);
    let instance = cell.instance.build(rep_seed).map_err(runtime)?;
    let declared = instance.declared();
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    let smooth = instance.verify_smoothness(pairs, &mut rng);
    let delta0 = declared.margin.map_or(0.25, |m| m.delta0);
    let deltas: Vec<f64> = (0..8).map(|k| delta0 * 0.5f64.powi(7 - k)).collect();
    let margin = instance.verify_margin(&deltas, samples, &mut rng).map_err(runtime)?;
    println!("config_hash={}", experiment.hash);
    println!(
        "instance {} declared alpha={} beta={} L={}",
        instance.name(),
        declared.alpha,
        declared.beta,
        declared.lipschitz
    );
    println!(
        "smoothness: {} (max violation {} over {} pairs)",
        if smooth.holds { "holds" } else { "FAILS" },
        smooth.max_violation,
        smooth.pairs
    );
    for e in &margin.per_delta {
        println!(
            "margin: delta={} P(0 < |gap| <= delta)={} se={}",
            e.delta, e.prob, e.std_err
        );
    }
    match margin.envelope {
        Some(env) => println!("margin envelope: d0={} delta0={}", env.d0, env.delta0),
        None => println!("margin envelope: none declared"),
    }
    println!(
        "margin: {} (fitted d0 {})",
        if margin.holds { "holds" } else { "FAILS" },
        margin.fitted_d0
    );
    if smooth.holds && margin.holds {
        Ok(())
    } else {
        Err(Failure {
            code: 4,
            message: "a declared assumption does not hold".into(),
        })
    }
}

fn plan(path: &Path) -> Result<(), Failure> {
    let experiment: Experiment = ExperimentConfig::from_path(path)?.resolve()?;
    println!("config_hash={}", experiment.hash);
    let mut any = false;
    for cell in &experiment.cells {
        if let Some(plan) = cell.policy.effective_plan() {
            any = true;
            println!("{}", cell.id);
            println!("{plan}");
        }
    }
    if !any {
        println!("no binning policy in this config");
    }
    Ok(())
}
