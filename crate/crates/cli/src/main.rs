//! `ssbo`: run the optimizer or a batch of replications on a built-in problem.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssbo_core::harness::{export_history, export_rejects, history_file_name, write_batch, BatchConfig};
use ssbo_core::problems::BUILTIN_PROBLEMS;
use ssbo_core::{
    make_problem, run, run_batch, Criterion, KernelKind, ProblemParams, RunConfig, RunStatus, SsboError,
};

#[derive(Parser)]
#[command(name = "ssbo", version, about = "Sequential surrogate-based optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one problem and write history.csv and rejects.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// RNG seed.
        #[arg(long)]
        seed: u64,
    },
    /// Run independent replications and write per-run histories, rejects.csv
    /// and summary.json.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replications: usize,
        /// Seed of the first replication; replication i uses seed + i.
        #[arg(long)]
        seed: u64,
        /// Relative tolerance for counting a run as globally converged.
        #[arg(long, default_value_t = ssbo_core::harness::DEFAULT_GP_TOLERANCE)]
        gp_tolerance: f64,
    },
    /// List the built-in problems.
    Problems,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    problem: String,
    /// Complexity coefficient of the 1-D problem.
    #[arg(long)]
    alpha: Option<f64>,
    /// Young's modulus of the welded plate.
    #[arg(long)]
    youngs_modulus: Option<f64>,
    /// Number of evaluations added after the initial design.
    #[arg(long)]
    budget: usize,
    #[arg(long, value_parser = parse_kernel, default_value = "gaussian")]
    kernel: KernelKind,
    /// Initial design size (default 2m + 1).
    #[arg(long)]
    n0: Option<usize>,
    /// Minimum unit-cube distance between a candidate and existing samples.
    #[arg(long, default_value_t = ssbo_core::infill::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Comma-separated criterion order.
    #[arg(long, value_parser = parse_cycle, default_value = "global,local,uniform")]
    cycle: CycleArg,
    /// Keep the default shape parameter instead of tuning it.
    #[arg(long)]
    no_tune: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone)]
struct CycleArg(Vec<Criterion>);

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: SsboError| e.to_string())
}

fn parse_cycle(s: &str) -> Result<CycleArg, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse::<Criterion>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()
        .map(CycleArg)
}

impl Common {
    fn params(&self) -> ProblemParams {
        ProblemParams {
            alpha: self.alpha,
            youngs_modulus: self.youngs_modulus,
        }
    }

    fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            n0: self.n0,
            k_max: self.budget,
            epsilon: self.epsilon,
            kernel: self.kernel,
            tune: !self.no_tune,
            seed,
            criterion_cycle: self.cycle.0.clone(),
            ..Default::default()
        }
    }
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<SsboError> for Failure {
    fn from(e: SsboError) -> Self {
        match e {
            SsboError::Io(_) | SsboError::Evaluation(_) | SsboError::Unsolvable => Failure::Run(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_run(common: &Common, seed: u64) -> Result<(), Failure> {
    let problem = make_problem(&common.problem, &common.params())?;
    let config = common.run_config(seed);
    config.validate(problem.dim())?;
    let record = run(&problem, &config)?;
    create_dir(&common.out)?;
    export_history(&record, &common.out.join("history.csv"))?;
    export_rejects(std::slice::from_ref(&record), &common.out.join("rejects.csv"))?;

    println!("problem      {}", record.problem);
    println!("evaluations  {}", record.evaluations);
    println!("rejected     {}", record.rejects.len());
    if let Some(row) = record.final_row() {
        println!("final J      {}", row.incumbent_objective);
        println!("feasible     {}", row.incumbent_feasible);
    }
    match &record.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Stalled => {
            eprintln!("warning: stopped early, every criterion was rejected");
            Ok(())
        }
        RunStatus::Failed(msg) => Err(Failure::Run(msg.clone())),
    }
}

fn cmd_bench(common: &Common, replications: usize, seed: u64, gp_tolerance: f64) -> Result<(), Failure> {
    let mut config = BatchConfig::new(&common.problem, common.run_config(seed), replications, seed);
    config.params = common.params();
    config.gp_tolerance = gp_tolerance;
    let batch = run_batch(&config)?;
    write_batch(&batch, &config, &common.out)?;

    let s = &batch.summary;
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
    println!("problem             {}", s.problem);
    println!("replications        {}", s.replications);
    println!("mean J              {}", show(s.mean_objective));
    println!("std J               {}", show(s.std_objective));
    println!("mean evaluations    {}", show(s.mean_evaluations));
    println!("global probability  {}", show(s.global_probability));
    println!("histories           {} .. {}", history_file_name(0), history_file_name(replications - 1));
    if s.failed_replications.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(format!("failed replications: {:?}", s.failed_replications)))
    }
}

fn cmd_problems() -> Result<(), Failure> {
    let alpha_512 = ProblemParams {
        alpha: Some(512.0),
        ..Default::default()
    };
    let mut entries: Vec<(String, ProblemParams)> =
        BUILTIN_PROBLEMS.iter().map(|n| (n.to_string(), ProblemParams::default())).collect();
    entries.insert(1, ("forrester --alpha 512".into(), alpha_512));
    println!("{:<24} {:>3} {:>3}  {:<40} best known", "problem", "m", "q", "bounds");
    for (label, params) in entries {
        let name = label.split_whitespace().next().unwrap_or(&label);
        let p = make_problem(name, &params)?;
        let bounds: Vec<String> = p
            .space()
            .lower()
            .iter()
            .zip(p.space().upper())
            .map(|(l, u)| format!("[{l}, {u}]"))
            .collect();
        let best = p
            .best_known()
            .map_or_else(|| "-".to_string(), |b| format!("{} ({})", b.value, b.source));
        println!("{label:<24} {:>3} {:>3}  {:<40} {best}", p.dim(), p.num_constraints(), bounds.join(" "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run { common, seed } => cmd_run(common, *seed),
        Command::Bench {
            common,
            replications,
            seed,
            gp_tolerance,
        } => cmd_bench(common, *replications, *seed, *gp_tolerance),
        Command::Problems => cmd_problems(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
