//! `crpo`: solve, run, compare and sweep constrained policy optimization
//! experiments on tabular CMDP model files.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tempfile::NamedTempFile;
use thiserror::Error;

use config::{AlgoArg, ExperimentConfig};
use crpo_core::envs::{
    benchmark_garnet, benchmark_gridworld, make_garnet, make_twostate, td_garnet,
};
use crpo_core::experiment::{compare, scaled_eta_grid, sweep, tune_dual_step, SweepParam};
use crpo_core::oracle::{solve_occupancy, LpStatus};
use crpo_core::pdo::DUAL_STEP_GRID;
use crpo_core::record::FEASIBILITY_SLACK;
use crpo_core::{exec, Algo, Execution, RunRecord, TabularCmdp};

#[derive(Debug, Parser)]
#[command(
    name = "crpo",
    version,
    about = "Constrained policy optimization experiments"
)]
struct Cli {
    /// Worker threads for multi-run commands (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the occupancy LP for the optimal feasible policy.
    Solve {
        #[arg(long)]
        model: PathBuf,
        /// Directory for solution.json; printed to stdout either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm and write trace.csv and summary.json.
    Run {
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run CRPO and the primal-dual baseline over shared seeds.
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        crpo_config: PathBuf,
        #[arg(long)]
        pdo_config: PathBuf,
        /// Comma-separated list or half-open range `a..b`.
        #[arg(long, default_value = "0..10", value_parser = parse_seeds)]
        seeds: Seeds,
        /// Pick the dual stepsize from the standard grid before comparing.
        #[arg(long)]
        tune_dual: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid of runs over one hyperparameter.
    Sweep {
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        /// Defaults to the scaled tolerance grid for eta and the dual grid for beta_dual.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_enum, default_value = "crpo")]
        algo: AlgoArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "0..5", value_parser = parse_seeds)]
        seeds: Seeds,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a generated model file.
    Generate {
        #[arg(value_enum)]
        env: EnvArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        states: usize,
        #[arg(long, default_value_t = 5)]
        actions: usize,
        #[arg(long, default_value_t = 3)]
        branching: usize,
        #[arg(long, default_value_t = 1)]
        costs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnvArg {
    Twostate,
    /// TwoState with limit −1.
    Infeasible,
    Garnet,
    BenchmarkGarnet,
    TdGarnet,
    Gridworld,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] crpo_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no policy satisfies the constraints")]
    Infeasible,
    #[error("N_0 is empty: no iterate passed the constraint check")]
    EmptyN0,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible | CliError::Core(crpo_core::Error::Infeasible { .. }) => 2,
            CliError::EmptyN0 => 3,
            _ => 1,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Seeds given on the command line.
#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("{x:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => Ok(Seeds((num(a)?..num(b)?).collect())),
        None => s.split(',').map(num).collect::<Result<_, _>>().map(Seeds),
    }
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: crpo_core::Error| e.to_string())
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn load_model(path: &Path) -> CliResult<TabularCmdp> {
    let model = TabularCmdp::from_json(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    model
        .validate()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(model)
}

fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    ExperimentConfig::from_json(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let io = |source| CliError::Io {
        path: path.into(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = temp_file(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(unix)]
fn temp_file(dir: &Path) -> std::io::Result<NamedTempFile> {
    use std::os::unix::fs::PermissionsExt;
    tempfile::Builder::new()
        .permissions(fs::Permissions::from_mode(0o644))
        .tempfile_in(dir)
}

#[cfg(not(unix))]
fn temp_file(dir: &Path) -> std::io::Result<NamedTempFile> {
    NamedTempFile::new_in(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(crpo_core::Error::from)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_trace(path: &Path, record: &RunRecord) -> CliResult {
    write_atomic(path, record.to_csv_string()?.as_bytes())
}

fn execution(jobs: usize) -> Execution {
    if jobs == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn cmd_solve(model: &Path, out: Option<&Path>) -> CliResult {
    let model = load_model(model)?;
    let sol = solve_occupancy(&model)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&sol).map_err(crpo_core::Error::from)?
    );
    if let Some(dir) = out {
        write_json(&dir.join("solution.json"), &sol)?;
    }
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(CliError::Infeasible),
    }
}

fn cmd_run(algo: AlgoArg, model: &Path, config: &Path, out: &Path, seed: u64) -> CliResult {
    let model = load_model(model)?;
    let spec = load_config(config)?
        .to_spec(algo, &model, seed)
        .map_err(CliError::Usage)?;
    let record = spec.run(&model)?;
    write_trace(&out.join("trace.csv"), &record)?;
    let summary = record.summary();
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "{}",
        serde_json::to_string(&summary).map_err(crpo_core::Error::from)?
    );
    if matches!(record.algo, Algo::Crpo | Algo::NeuralCrpo) && record.outcome.empty_n0 {
        return Err(CliError::EmptyN0);
    }
    Ok(())
}

fn cmd_compare(
    model: &Path,
    crpo_config: &Path,
    pdo_config: &Path,
    seeds: &[u64],
    tune_dual: bool,
    out: &Path,
    exec: Execution,
) -> CliResult {
    if seeds.len() < 2 {
        return Err(CliError::Usage(format!(
            "compare needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let model = load_model(model)?;
    let crpo = load_config(crpo_config)?
        .to_spec(AlgoArg::Crpo, &model, 0)
        .map_err(CliError::Usage)?;
    let mut pdo = load_config(pdo_config)?
        .to_spec(AlgoArg::Pdo, &model, 0)
        .map_err(CliError::Usage)?;
    if tune_dual {
        let (best, grid) = tune_dual_step(&model, &pdo, seeds, exec)?;
        let mut csv = Vec::new();
        grid.write_csv(&mut csv)?;
        write_atomic(&out.join("dual_grid.csv"), &csv)?;
        println!("dual stepsize {best} selected from {DUAL_STEP_GRID:?}");
        pdo = pdo.with_param(SweepParam::BetaDual, best)?;
    }
    let report = compare(&model, &crpo, &pdo, seeds, exec)?;
    for (name, algo) in [("crpo", &report.crpo), ("pdo", &report.pdo)] {
        for r in &algo.runs {
            write_trace(&out.join(format!("{name}_seed{}.csv", r.seed)), r)?;
        }
    }
    write_json(&out.join("report.json"), &report)?;
    let show = |x: Option<f64>| x.map_or("never".to_string(), |v| v.to_string());
    println!(
        "median first sustained feasibility: crpo {} pdo {}",
        show(report.crpo.median_first_feasible),
        show(report.pdo.median_first_feasible)
    );
    println!(
        "median final gap: crpo {} pdo {}",
        report.crpo.median_final_gap, report.pdo.median_final_gap
    );
    println!(
        "crpo feasible first: {}",
        if report.crpo_feasible_first {
            "PASS"
        } else {
            "FAIL"
        }
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepReport {
    param: SweepParam,
    values: Vec<f64>,
    median_final_j0: Vec<f64>,
    median_final_gap: Vec<f64>,
    median_final_violation: Vec<f64>,
    /// Spread of the median final `J_0` across values.
    robustness: f64,
    /// Lowest-gap value among those within the feasibility slack.
    best_by_gap: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    param: SweepParam,
    values: Vec<f64>,
    algo: AlgoArg,
    model: &Path,
    config: &Path,
    seeds: &[u64],
    out: &Path,
    exec: Execution,
) -> CliResult {
    let model = load_model(model)?;
    let base = load_config(config)?
        .to_spec(algo, &model, 0)
        .map_err(CliError::Usage)?;
    let values = match (values.is_empty(), param) {
        (false, _) => values,
        (true, SweepParam::Eta) => scaled_eta_grid(&model),
        (true, SweepParam::BetaDual) => DUAL_STEP_GRID.to_vec(),
        (true, SweepParam::Alpha) => {
            return Err(CliError::Usage("--values is required for alpha".into()))
        }
    };
    let grid = sweep(&model, &base, param, &values, seeds, exec)?;
    let mut csv = Vec::new();
    grid.write_csv(&mut csv)?;
    write_atomic(&out.join("sweep.csv"), &csv)?;
    let column = |f: &dyn Fn(f64) -> f64| values.iter().map(|&v| f(v)).collect::<Vec<_>>();
    let report = SweepReport {
        param,
        median_final_j0: column(&|v| grid.median_final_j0(v)),
        median_final_gap: column(&|v| grid.median_final_gap(v)),
        median_final_violation: column(&|v| grid.median_final_violation(v)),
        robustness: grid.robustness(),
        best_by_gap: grid.best_by_gap(FEASIBILITY_SLACK),
        values: values.clone(),
    };
    write_json(&out.join("sweep.json"), &report)?;
    println!(
        "{param} robustness (spread of median final J_0): {}",
        report.robustness
    );
    println!("best {param} by final gap: {}", report.best_by_gap);
    Ok(())
}

fn cmd_generate(env: EnvArg, seed: u64, shape: [usize; 4], out: &Path) -> CliResult {
    let [states, actions, branching, costs] = shape;
    let model = match env {
        EnvArg::Twostate => make_twostate(),
        EnvArg::Infeasible => TabularCmdp {
            limits: vec![-1.0],
            ..make_twostate()
        },
        EnvArg::Garnet => make_garnet(states, actions, branching, costs, seed)?,
        EnvArg::BenchmarkGarnet => benchmark_garnet(),
        EnvArg::TdGarnet => td_garnet(),
        EnvArg::Gridworld => benchmark_gridworld(),
    };
    let mut text = model.to_json()?;
    text.push('\n');
    write_atomic(out, text.as_bytes())
}

fn dispatch(cli: Cli) -> CliResult {
    let exec = execution(cli.jobs);
    match cli.command {
        Command::Solve { model, out } => cmd_solve(&model, out.as_deref()),
        Command::Run {
            algo,
            model,
            config,
            out,
            seed,
        } => cmd_run(algo, &model, &config, &out, seed),
        Command::Compare {
            model,
            crpo_config,
            pdo_config,
            seeds,
            tune_dual,
            out,
        } => cmd_compare(
            &model,
            &crpo_config,
            &pdo_config,
            &seeds.0,
            tune_dual,
            &out,
            exec,
        ),
        Command::Sweep {
            param,
            values,
            algo,
            model,
            config,
            seeds,
            out,
        } => cmd_sweep(param, values, algo, &model, &config, &seeds.0, &out, exec),
        Command::Generate {
            env,
            seed,
            states,
            actions,
            branching,
            costs,
            out,
        } => cmd_generate(env, seed, [states, actions, branching, costs], &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => e.exit(),
    };
    let jobs = cli.jobs;
    match exec::with_jobs(jobs, || dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
