//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for model or convergence failures, 2 for
//! input errors such as unreadable files or malformed specs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::dataset::{format_summary, load_long_table, save_long_table, summarize_attributes, TableSchema};
use crate::draws::DrawPlan;
use crate::error::{Error, Result};
use crate::estimate::estimate;
use crate::optim::OptimizerConfig;
use crate::results::{read_result, read_truth, write_result, write_truth};
use crate::simulate::{compare_recovery, generate_design, simulate_choices, TrueParameters};
use crate::spec::{parse_model_spec, ModelSpec};
use crate::wtp::{build_report, FloodThreat};

#[derive(Debug, Parser)]
#[command(name = "mixlogit", version, about = "Panel mixed logit estimation in preference and WTP space")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a model and write the result JSON.
    Estimate(EstimateArgs),
    /// Simulate choices at known parameters.
    Simulate(SimulateArgs),
    /// Money values and threat-scenario tables.
    Wtp(WtpArgs),
    /// Re-estimate on simulated data and compare with the truth.
    Recover(RecoverArgs),
    /// Summary statistics per attribute.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Long-format choice data (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Person-level columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Column holding peer shares.
    #[arg(long)]
    peer_share: Option<String>,
    /// The peer-share column holds counts out of 5.
    #[arg(long, requires = "peer_share")]
    peer_counts: bool,
}

impl DataArgs {
    fn load(&self) -> Result<crate::dataset::ChoiceDataset> {
        let schema = TableSchema {
            covariates: self.covariates.clone(),
            peer_share: self.peer_share.clone(),
            peer_counts: self.peer_counts,
            ..TableSchema::default()
        };
        load_long_table(&self.data, &schema)
    }
}

#[derive(Debug, Args)]
struct DrawArgs {
    /// Halton draws per individual.
    #[arg(long, default_value_t = 500)]
    draws: usize,
    /// Leading Halton points discarded per dimension.
    #[arg(long, default_value_t = crate::draws::DEFAULT_BURN_IN)]
    burn_in: usize,
    /// Halton bases, comma separated (default: first primes).
    #[arg(long, value_delimiter = ',')]
    halton_primes: Vec<u64>,
    /// Iteration cap for the optimizer.
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
}

impl DrawArgs {
    fn plan(&self, spec: &ModelSpec) -> Result<DrawPlan> {
        let plan = DrawPlan::new(self.draws, spec.n_random())?.with_burn_in(self.burn_in);
        if self.halton_primes.is_empty() {
            Ok(plan)
        } else {
            plan.with_primes(self.halton_primes.clone())
        }
    }

    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            max_iterations: self.max_iterations,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model specification file.
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    draws: DrawArgs,
    /// Seed for the draw shuffle; the default of 0 leaves draws unshuffled.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Model specification file.
    #[arg(long)]
    spec: PathBuf,
    /// True parameter values (JSON with `parameters` or `estimates`).
    #[arg(long)]
    truth: PathBuf,
    /// Number of individuals.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; `truth.json` is written alongside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WtpArgs {
    /// Result JSON from `estimate`.
    #[arg(long)]
    result: PathBuf,
    /// Restrict scenario rows to one threat level.
    #[arg(long)]
    scenario: Option<FloodThreat>,
    /// Seed for preference-space ratio simulation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report CSV path (the table always goes to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecoverArgs {
    /// Model specification file.
    #[arg(long)]
    spec: PathBuf,
    /// True parameter values.
    #[arg(long)]
    truth: PathBuf,
    /// Number of simulated individuals.
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    draws: DrawArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tolerance in robust standard errors.
    #[arg(long, default_value_t = 2.0)]
    tolerance: f64,
    /// Optional result JSON of the re-estimation.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    #[command(flatten)]
    data: DataArgs,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Evaluation { .. }
        | Error::StartPoint(_)
        | Error::SingularHessian { .. }
        | Error::Identification(_)
        | Error::Domain(_)
        | Error::UndefinedCov => 1,
        _ => 2,
    }
}

fn read_spec(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model_spec(&text).map_err(|errors| {
        for e in &errors {
            eprintln!("{}:{}:{}: {}", path.display(), e.line, e.column, e.message);
        }
        Error::Spec(errors)
    })
}

fn load_truth(spec: &ModelSpec, path: &Path, seed: u64) -> Result<TrueParameters> {
    let doc = read_truth(path)?;
    TrueParameters::from_named(spec.clone(), &doc.values(), seed)
}

fn run_estimate(a: &EstimateArgs) -> Result<i32> {
    let dataset = a.data.load()?;
    let spec = read_spec(&a.spec)?;
    let mut plan = a.draws.plan(&spec)?;
    if a.seed != 0 {
        plan.permutation_seed = Some(a.seed);
    }
    let result = estimate(&dataset, &spec, &plan, &a.draws.optimizer())?;
    write_result(&result, &a.out)?;
    println!(
        "LL {:.3} (null {:.3}), adjusted rho-square {:.4}, {} iterations",
        result.ll_final, result.ll_null, result.adjusted_rho_sq, result.iterations
    );
    if let Some(e) = &result.covariance_error {
        eprintln!("standard errors unavailable: {e}");
    }
    if !result.converged {
        eprintln!("optimizer did not converge ({:?}); diagnostics written to {}", result.termination, a.out.display());
        return Ok(1);
    }
    Ok(0)
}

fn run_simulate(a: &SimulateArgs) -> Result<i32> {
    let spec = read_spec(&a.spec)?;
    let truth = load_truth(&spec, &a.truth, a.seed)?;
    let design = generate_design(a.n, a.seed);
    let dataset = simulate_choices(&design, &truth)?;
    save_long_table(&dataset, &a.out)?;
    let truth_path = a
        .out
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join("truth.json");
    write_truth(&truth, &truth_path)?;
    info!("wrote {} and {}", a.out.display(), truth_path.display());
    println!("{} individuals, {} choice tasks", dataset.individuals.len(), dataset.n_observations);
    Ok(0)
}

fn run_wtp(a: &WtpArgs) -> Result<i32> {
    let result = read_result(&a.result)?;
    let threats: Vec<FloodThreat> = match a.scenario {
        Some(t) => vec![t],
        None => FloodThreat::ALL.to_vec(),
    };
    let report = build_report(&result, &threats, a.seed)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        std::fs::write(out, report.to_csv()).map_err(|e| Error::io(out, e))?;
    }
    Ok(0)
}

fn run_recover(a: &RecoverArgs) -> Result<i32> {
    let spec = read_spec(&a.spec)?;
    let truth = load_truth(&spec, &a.truth, a.seed)?;
    let dataset = simulate_choices(&generate_design(a.n, a.seed), &truth)?;
    let plan = a.draws.plan(&spec)?;
    let result = estimate(&dataset, &spec, &plan, &a.draws.optimizer())?;
    if let Some(out) = &a.out {
        write_result(&result, out)?;
    }
    let report = compare_recovery(&truth, &result);
    print!("{}", report.to_table());
    println!(
        "{:.1}% within {} robust SEs; fixed signs {}",
        100.0 * report.share_within(a.tolerance),
        a.tolerance,
        if report.fixed_signs_match() { "all match" } else { "DIFFER" }
    );
    Ok(if result.converged { 0 } else { 1 })
}

fn run_summarize(a: &SummarizeArgs) -> Result<i32> {
    let dataset = a.data.load()?;
    println!(
        "{} individuals, {} choice tasks, {} alternatives",
        dataset.individuals.len(),
        dataset.n_observations,
        dataset.n_alternatives
    );
    print!("{}", format_summary(&summarize_attributes(&dataset)));
    Ok(0)
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            info!("thread pool already configured: {e}");
        }
    }
    let outcome = match &cli.command {
        Command::Estimate(a) => run_estimate(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Wtp(a) => run_wtp(a),
        Command::Recover(a) => run_recover(a),
        Command::Summarize(a) => run_summarize(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
