use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cdac::approx::{approx_value_iteration, ApproxConfig, ApproxError, ApproxSolution};
use cdac::baselines::{
    infomax_solve_with, BaselineError, ContinuationRule, InfomaxConfig, ThresholdPolicy,
};
use cdac::harness::compare::{compare_policies, CompareError};
use cdac::harness::config::{parse_fixation, ConfigError, EnvironmentConfig};
use cdac::harness::export::{export_policy_map, export_policy_pgm, ExportError};
use cdac::harness::stats::{run_batch, TrialStats};
use cdac::harness::store::{load_tables, save_tables, StoreError};
use cdac::harness::trial::{AlwaysStop, Controller, TableController, TrialRng};
use cdac::solver::{value_iteration_with, PolicyTable, SolveError, Transitions};
use cdac::{SimplexGrid, TaskKind};
use rand::SeedableRng;

#[derive(Parser)]
#[command(name = "cdac", version, about = "Cost-sensitive active visual search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the belief-grid Bellman equation and optionally save the tables.
    Solve {
        #[command(flatten)]
        env: EnvArgs,
        /// Binary table file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded batch of trials for one policy.
    Simulate {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, value_enum, default_value_t = Method::Cdac)]
        method: Method,
        /// Stopping threshold for infomax and greedy-map.
        #[arg(long)]
        threshold: Option<f64>,
        /// Read C-DAC tables instead of solving.
        #[arg(long)]
        load: Option<PathBuf>,
    },
    /// C-DAC against accuracy-matched infomax (and greedy MAP).
    Compare {
        #[command(flatten)]
        env: EnvArgs,
        /// Also run greedy MAP.
        #[arg(long)]
        greedy: bool,
        /// CSV report to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Approximate value iteration with an RBF or GP representation.
    Approx {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, value_enum, default_value_t = ApproxMethod::Rbf)]
        method: ApproxMethod,
        /// Samples per iteration (defaults: 1000 for rbf, 200 for gpr).
        #[arg(long)]
        samples: Option<usize>,
        /// Reuse the first sample set instead of drawing fresh points.
        #[arg(long)]
        fixed_samples: bool,
        /// Report cell agreement with the exact policy.
        #[arg(long)]
        compare_exact: bool,
        /// JSON file for the fitted representation.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a policy map as CSV (and optionally PGM).
    ExportMap {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, value_enum, default_value_t = Method::Cdac)]
        method: Method,
        #[arg(long)]
        threshold: Option<f64>,
        /// Current fixation of the slice ("1", "l123", ...); defaults to the first.
        #[arg(long)]
        fixation: Option<String>,
        #[arg(long)]
        load: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Method {
    Cdac,
    Infomax,
    GreedyMap,
    AlwaysStop,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ApproxMethod {
    Rbf,
    Gpr,
    GprArd,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Simple,
    Peripheral,
}

/// Environment flags; each overrides the matching field of `--config`.
#[derive(Args)]
struct EnvArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    cs: Option<f64>,
    /// One beta per flag, repeatable.
    #[arg(long = "beta")]
    beta: Vec<f64>,
    /// Comma-separated betas.
    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Infomax look-ahead horizon.
    #[arg(long)]
    horizon: Option<usize>,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::NotConverged { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<BaselineError> for Failure {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::CalibrationFailed { .. } => Failure::Numerical(e.to_string()),
            BaselineError::Solve(s) => s.into(),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<CompareError> for Failure {
    fn from(e: CompareError) -> Self {
        match e {
            CompareError::Solve(s) => s.into(),
            // The target here is C-DAC's simulated accuracy, not user input.
            CompareError::Baseline(b @ BaselineError::BadTarget(_)) => Failure::Numerical(b.to_string()),
            CompareError::Baseline(b) => b.into(),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<ApproxError> for Failure {
    fn from(e: ApproxError) -> Self {
        match e {
            ApproxError::NotConverged { .. }
            | ApproxError::IllConditioned { .. }
            | ApproxError::NotPositiveDefinite => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<ExportError> for Failure {
    fn from(e: ExportError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

impl EnvArgs {
    fn resolve(&self) -> Result<EnvironmentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => EnvironmentConfig::load(path)?,
            None => {
                let task = self.task.ok_or_else(|| {
                    Failure::Usage("either --config or --task is required".into())
                })?;
                let c = self.c.ok_or_else(|| Failure::Usage("--c is required".into()))?;
                let kind = match task {
                    TaskArg::Simple => TaskKind::Simple,
                    TaskArg::Peripheral => TaskKind::Peripheral,
                };
                EnvironmentConfig::new(kind, c, 0.0, Vec::new())
            }
        };
        if let Some(task) = self.task {
            cfg.task = match task {
                TaskArg::Simple => TaskKind::Simple,
                TaskArg::Peripheral => TaskKind::Peripheral,
            };
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(cs) = self.cs {
            cfg.cs = cs;
        }
        if !self.beta.is_empty() && !self.betas.is_empty() {
            return Err(Failure::Usage("use either --beta or --betas, not both".into()));
        }
        if !self.beta.is_empty() {
            cfg.betas = self.beta.clone();
        }
        if !self.betas.is_empty() {
            cfg.betas = self.betas.clone();
        }
        if let Some(n) = self.grid_n {
            cfg.grid_n = n;
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(h) = self.horizon {
            cfg.infomax_horizon = h;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn transitions(env: &EnvironmentConfig) -> Result<Transitions, Failure> {
    let model = env.model()?;
    let grid = SimplexGrid::new(model.locations(), env.grid_n).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Transitions::new(&model, Arc::new(grid))?)
}

fn cdac_policy(env: &EnvironmentConfig, load: Option<&PathBuf>) -> Result<PolicyTable, Failure> {
    let model = env.model()?;
    let costs = env.costs()?;
    if let Some(path) = load {
        return Ok(load_tables(path, &model, &costs, env.grid_n)?.1);
    }
    let sol = value_iteration_with(&model, &costs, &transitions(env)?, env.solve_options())?;
    eprintln!("value iteration converged in {} sweeps", sol.sweeps);
    Ok(sol.policy)
}

fn threshold_policy(
    env: &EnvironmentConfig,
    method: Method,
    threshold: Option<f64>,
) -> Result<ThresholdPolicy, Failure> {
    let theta = threshold.ok_or_else(|| Failure::Usage("--threshold is required for this method".into()))?;
    let rule = match method {
        Method::Infomax => {
            let t = transitions(env)?;
            let p = infomax_solve_with(&t, InfomaxConfig { horizon: env.infomax_horizon })?;
            ContinuationRule::Infomax(Arc::new(p))
        }
        _ => ContinuationRule::GreedyMap,
    };
    Ok(ThresholdPolicy::new(env.model()?, rule, theta)?)
}

fn print_stats(name: &str, s: &TrialStats) {
    println!("policy      {name}");
    println!("trials      {} (seed {})", s.n_trials, s.seed);
    println!("accuracy    {:.4} ± {:.4}", s.accuracy.mean, s.accuracy.se());
    println!("steps       {:.4} ± {:.4}", s.steps.mean, s.steps.se());
    println!("switches    {:.4} ± {:.4}", s.switches.mean, s.switches.se());
    println!("total cost  {:.4} ± {:.4}", s.total_cost.mean, s.total_cost.se());
    println!("capped      {}", s.capped);
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { env, out } => {
            let env = env.resolve()?;
            let model = env.model()?;
            let costs = env.costs()?;
            let sol = value_iteration_with(&model, &costs, &transitions(&env)?, env.solve_options())?;
            println!("sweeps        {}", sol.sweeps);
            println!("final change  {:.3e}", sol.final_change);
            println!("cells         {}", sol.values.grid().len());
            println!("stop actions  {} of {}", sol.policy.stop_count(), sol.policy.as_slice().len());
            if let Some(path) = out {
                save_tables(&path, &model, &costs, &sol.values, &sol.policy)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Simulate { env, method, threshold, load } => {
            let env = env.resolve()?;
            let setup = env.trial_setup()?;
            let stats = match method {
                Method::Cdac => {
                    let policy = cdac_policy(&env, load.as_ref())?;
                    run_batch(&TableController { policy: &policy }, &setup, env.trials, env.seed)
                }
                Method::AlwaysStop => {
                    let ctl = AlwaysStop { rule: setup.model.stop_rule() };
                    run_batch(&ctl, &setup, env.trials, env.seed)
                }
                Method::Infomax | Method::GreedyMap => {
                    let p = threshold_policy(&env, method, threshold)?;
                    run_batch(&p as &dyn Controller, &setup, env.trials, env.seed)
                }
            };
            let name = match method {
                Method::Cdac => "c-dac",
                Method::Infomax => "infomax",
                Method::GreedyMap => "greedy-map",
                Method::AlwaysStop => "always-stop",
            };
            print_stats(name, &stats);
        }
        Command::Compare { env, greedy, out } => {
            let mut env = env.resolve()?;
            env.include_greedy |= greedy;
            let report = compare_policies(&env)?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                std::fs::write(&path, report.to_csv()).map_err(|e| io_failure(&path, e))?;
            }
        }
        Command::Approx { env, method, samples, fixed_samples, compare_exact, out } => {
            let env = env.resolve()?;
            let model = env.model()?;
            let costs = env.costs()?;
            let mut cfg = match method {
                ApproxMethod::Rbf => ApproxConfig::rbf(env.seed),
                ApproxMethod::Gpr => ApproxConfig::gpr(env.seed),
                ApproxMethod::GprArd => ApproxConfig::gpr_ard(env.seed),
            };
            if let Some(m) = samples {
                cfg.samples = m;
            }
            cfg.resample = !fixed_samples;
            let grid = Arc::new(
                SimplexGrid::new(model.locations(), env.grid_n).map_err(|e| Failure::Usage(e.to_string()))?,
            );
            let (sol, failure): (ApproxSolution, Option<Failure>) =
                match approx_value_iteration(&model, &costs, grid.clone(), &cfg) {
                    Ok(s) => (s, None),
                    Err(ApproxError::NotConverged { iterations, change, last }) => {
                        let msg = format!("not converged after {iterations} iterations (last change {change:.3e})");
                        (*last, Some(Failure::Numerical(msg)))
                    }
                    Err(e) => return Err(e.into()),
                };
            println!("iterations    {}", sol.iterations);
            println!("final change  {:.3e}", sol.final_change());
            if let Some(d) = &sol.diagnostics {
                println!("rbf rank      {:?} (condition {:.3e})", d.rank, d.condition[0]);
            }
            if compare_exact {
                let exact = cdac_policy(&env, None)?;
                let f = exact.fixations();
                let same = (0..grid.len())
                    .flat_map(|c| (0..f).map(move |l| (c, l)))
                    .filter(|&(c, l)| exact.get(c, l) == sol.policy.get(c, l))
                    .count();
                let same0 = (0..grid.len()).filter(|&c| exact.get(c, 0) == sol.policy.get(c, 0)).count();
                println!("agreement     {:.4} (all fixations) {:.4} (first fixation)",
                    same as f64 / (grid.len() * f) as f64,
                    same0 as f64 / grid.len() as f64);
            }
            if let Some(path) = out {
                sol.value.save(&path)?;
            }
            if let Some(f) = failure {
                return Err(f);
            }
        }
        Command::ExportMap { env, method, threshold, fixation, load, out, pgm } => {
            let env = env.resolve()?;
            let model = env.model()?;
            let fixation = match &fixation {
                Some(name) => parse_fixation(&model, name)?,
                None => 0,
            };
            let policy = match method {
                Method::Cdac => cdac_policy(&env, load.as_ref())?,
                Method::Infomax | Method::GreedyMap => {
                    let p = threshold_policy(&env, method, threshold)?;
                    let grid = Arc::new(
                        SimplexGrid::new(model.locations(), env.grid_n)
                            .map_err(|e| Failure::Usage(e.to_string()))?,
                    );
                    p.to_policy_table(grid, &mut TrialRng::seed_from_u64(env.seed))?
                }
                Method::AlwaysStop => return Err(Failure::Usage("always-stop has no map to export".into())),
            };
            export_policy_map(&policy, fixation, &out)?;
            if let Some(p) = pgm {
                export_policy_pgm(&policy, fixation, &p)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
