use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use zonoinv::experiment::{self, ExperimentConfig};
use zonoinv::numerics::binomial;
use zonoinv::oracle::mc_volume;
use zonoinv::params::Method;
use zonoinv::problem::{check_solution, from_json, parse_solution, to_json, ProblemFile, ResultFile};
use zonoinv::solver::{solve_problem, SolveStatus};
use zonoinv::sysgen::{TrialInstance, TrialSpec};
use zonoinv::zonotope::Zonotope;

#[derive(Parser)]
#[command(name = "zonoinv", version, about = "Maximum-volume finite-horizon invariant zonotopes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem file and print the result JSON.
    Solve {
        problem: PathBuf,
        /// Write the result here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Limit on the maximization, seconds.
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Run a benchmark grid and write trial CSV, aggregates and tables.
    Experiment {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Exact volume of a zonotope file, optionally with a Monte-Carlo estimate.
    Volume {
        zonotope: PathBuf,
        /// Number of Monte-Carlo samples (d ≤ 4).
        #[arg(long)]
        mc: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Certify a solution against a problem and simulate its trajectories.
    Check {
        problem: PathBuf,
        /// Zonotope JSON or a result file from `solve`.
        solution: PathBuf,
        /// Initial states to simulate.
        #[arg(long, default_value_t = 4096)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit a random benchmark problem.
    Gen {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        generators: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "SFG+lgv")]
        method: String,
        #[arg(long, default_value_t = zonoinv::sysgen::DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, default_value_t = zonoinv::sysgen::DEFAULT_DT)]
        dt: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_problem(path: &Path) -> Result<ProblemFile> {
    ProblemFile::parse(&read(path)?).with_context(|| format!("invalid problem {}", path.display()))
}

fn cmd_solve(problem: &Path, output: Option<&Path>, time_limit: Option<f64>) -> Result<ExitCode> {
    let file = load_problem(problem)?;
    let mut opts = file.solver_options();
    if time_limit.is_some() {
        opts.time_limit_secs = time_limit;
    }
    let result = solve_problem(&file.to_problem()?, &opts)?;
    emit(&to_json(&ResultFile::from(&result)), output)?;
    Ok(match result.status {
        SolveStatus::Optimal => ExitCode::SUCCESS,
        SolveStatus::Infeasible => ExitCode::from(2),
        _ => ExitCode::from(3),
    })
}

fn cmd_experiment(
    config: &Path,
    output: Option<PathBuf>,
    jobs: Option<usize>,
    seed: Option<u64>,
    time_limit: Option<f64>,
) -> Result<ExitCode> {
    let mut cfg: ExperimentConfig =
        from_json(&read(config)?).with_context(|| format!("invalid config {}", config.display()))?;
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if time_limit.is_some() {
        cfg.time_limit_secs = time_limit;
    }
    if let Some(o) = output {
        cfg.output_dir = Some(o);
    }
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    let outcomes = experiment::run_experiment(&cfg)?;
    let records: Vec<_> = outcomes.into_iter().map(|o| o.record).collect();
    experiment::write_outputs(&dir, &cfg, &records).with_context(|| format!("writing {}", dir.display()))?;
    print!("{}", experiment::render_tables(&experiment::aggregate(&records), &cfg.methods));
    Ok(ExitCode::SUCCESS)
}

fn cmd_volume(path: &Path, mc: Option<usize>, seed: u64) -> Result<ExitCode> {
    let z = parse_solution(&read(path)?).with_context(|| format!("invalid zonotope {}", path.display()))?;
    let volume = z.volume()?;
    let mut report = json!({
        "volume": volume,
        "dim": z.dim(),
        "generators": z.num_generators(),
        "terms": binomial(z.num_generators(), z.dim()),
    });
    if let Some(n) = mc {
        let (estimate, se) = mc_volume(&z, n, seed)?;
        report["mc"] = json!({"samples": n, "estimate": estimate, "standard_error": se});
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(problem: &Path, solution: &Path, points: usize, seed: u64) -> Result<ExitCode> {
    let problem = load_problem(problem)?.to_problem()?;
    let z: Zonotope =
        parse_solution(&read(solution)?).with_context(|| format!("invalid solution {}", solution.display()))?;
    let report = check_solution(&problem, &z, points, seed)?;
    println!("{}", to_json(&report));
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    dim: usize,
    generators: usize,
    trial: usize,
    seed: u64,
    method: &str,
    horizon: usize,
    dt: f64,
    output: Option<&Path>,
) -> Result<ExitCode> {
    let method: Method = method.parse()?;
    let mut spec = TrialSpec::new(dim, generators, trial, seed)?;
    spec.horizon = horizon;
    spec.dt = dt;
    let instance = TrialInstance::generate(&spec)?;
    let file = ProblemFile::from_problem(&instance.problem(method)?, None, Some(instance.seed));
    emit(&to_json(&file), output)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve {
            problem,
            output,
            time_limit,
        } => cmd_solve(&problem, output.as_deref(), time_limit),
        Command::Experiment {
            config,
            output,
            jobs,
            seed,
            time_limit,
        } => cmd_experiment(&config, output, jobs, seed, time_limit),
        Command::Volume { zonotope, mc, seed } => cmd_volume(&zonotope, mc, seed),
        Command::Check {
            problem,
            solution,
            points,
            seed,
        } => cmd_check(&problem, &solution, points, seed),
        Command::Gen {
            dim,
            generators,
            trial,
            seed,
            method,
            horizon,
            dt,
            output,
        } => cmd_gen(dim, generators, trial, seed, &method, horizon, dt, output.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
