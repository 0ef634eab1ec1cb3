//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! malformed model/policy), 3 numeric or resource failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::builtin;
use crate::error::{Error, Result};
use crate::estep::{bellman_solve, Algorithm};
use crate::format::{
    parse_model_with_discount, parse_policy, serialize_policy, write_trace_csv, ModelDocument,
};
use crate::kernel::build_joint_chain;
use crate::model::{DecPomdpModel, InitScheme};
use crate::solver::{expected_return, run, IterationTrace, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "decpomdp", version, about = "EM planners for DEC-POMDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize finite-state controllers and write the trace and policy.
    Solve(SolveArgs),
    /// Check a model file and print OK.
    Validate(ModelArgs),
    /// Exact expected return of a policy file.
    Eval(EvalArgs),
    /// Run em, bem and mbem on one model, one CSV each.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file in .dpomdp format.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    pub model: Option<PathBuf>,
    /// Bundled model: chain2 or toy2agent.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Override the discount factor of the model.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Error budget of the em and mbem E-steps.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Controller memory per agent; one value is used for every agent.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub memory: Vec<usize>,
    /// Number of outer iterations.
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial policy: random or uniform.
    #[arg(long, default_value = "random")]
    pub init: InitScheme,
    /// Record J from an exact solve every iteration.
    #[arg(long)]
    pub exact_j: bool,
    /// Stop before --iters once J and the policy stop changing.
    #[arg(long)]
    pub stop_early: bool,
    /// Write 0 in the elapsed_ms column, for reproducible output.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "mbem")]
    pub algo: Algorithm,
    #[command(flatten)]
    pub run: RunArgs,
    /// Trace CSV path; standard output when omitted.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub policy_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub policy: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory receiving em.csv, bem.csv and mbem.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn load_model(args: &ModelArgs) -> Result<DecPomdpModel> {
    match (&args.model, &args.builtin) {
        (Some(path), _) => Ok(ModelDocument::load(path, args.gamma)?.model),
        (None, Some(name)) => parse_model_with_discount(builtin::source(name)?, args.gamma),
        (None, None) => Err(Error::InvalidArgument("one of --model or --builtin is required".into())),
    }
}

fn config_for(run: &RunArgs, algorithm: Algorithm) -> SolverConfig {
    SolverConfig {
        algorithm,
        epsilon: run.epsilon,
        max_iters: run.iters,
        stop_on_convergence: run.stop_early,
        memory_sizes: run.memory.clone(),
        seed: run.seed,
        init: run.init,
        exact_j: run.exact_j,
        ..SolverConfig::default()
    }
}

fn trace_text(trace: &[IterationTrace], no_timing: bool) -> String {
    if no_timing {
        let zeroed: Vec<IterationTrace> = trace
            .iter()
            .map(|t| IterationTrace {
                elapsed_ms: 0.0,
                estep_ms: 0.0,
                mstep_ms: 0.0,
                ..t.clone()
            })
            .collect();
        write_trace_csv(&zeroed)
    } else {
        write_trace_csv(trace)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let model = load_model(&args.model)?;
    let outcome = run(&model, &config_for(&args.run, args.algo))?;
    let csv = trace_text(&outcome.trace, args.run.no_timing);
    match &args.trace {
        Some(path) => write_file(path, &csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    if let Some(path) = &args.policy_out {
        write_file(path, &serialize_policy(&outcome.policy))?;
    }
    if let Some(last) = outcome.trace.last() {
        writeln!(
            err,
            "{}: {} iterations, J = {}{}",
            args.algo,
            outcome.trace.len(),
            last.expected_return,
            if outcome.converged { ", converged" } else { "" }
        )?;
    }
    Ok(())
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&args.model)?;
    let text = std::fs::read_to_string(&args.policy)?;
    let policy = parse_policy(&text)?;
    let chain = build_joint_chain(&model, &policy)?;
    let exact = bellman_solve(&chain)?;
    writeln!(out, "{}", expected_return(&chain, &model, &policy, &exact.frequency))?;
    Ok(())
}

fn bench(args: &BenchArgs, err: &mut dyn Write) -> Result<()> {
    let model = load_model(&args.model)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let results: Vec<(Algorithm, Result<Vec<IterationTrace>>)> = std::thread::scope(|s| {
        let handles: Vec<_> = Algorithm::ALL
            .iter()
            .map(|&algo| {
                let model = model.clone();
                let config = config_for(&args.run, algo);
                s.spawn(move || (algo, run(&model, &config).map(|o| o.trace)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    for (algo, trace) in results {
        let trace = trace?;
        let path = args.out_dir.join(format!("{algo}.csv"));
        write_file(&path, &trace_text(&trace, args.run.no_timing))?;
        let last = trace.last().map_or(f64::NAN, |t| t.expected_return);
        writeln!(err, "{algo}: J = {last}, wrote {}", path.display())?;
    }
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_NUMERIC,
    }
}

/// Caps the rayon pool at `DECPOMDP_THREADS` threads when the variable is
/// set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DECPOMDP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("DECPOMDP_THREADS must be a positive integer, got '{raw}'")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Resource(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Runs the CLI on `argv` and returns the process exit code.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a, out, err),
        Command::Validate(a) => load_model(a).and_then(|_| Ok(writeln!(out, "OK")?)),
        Command::Eval(a) => eval(a, out),
        Command::Bench(a) => bench(a, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
