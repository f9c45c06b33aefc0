//! `fkppg`: validate probabilistic program graphs, compute exact truncated
//! semantics, or run a particle filter.
//!
//! Exit codes: 0 ok, 1 other runtime error, 2 parse or validation error
//! (including bad arguments), 3 I/O error, 4 continuous distribution in
//! `oracle`, 5 path explosion in `oracle`, 6 weight collapse in `run`.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fkppg::models::ModelMeta;
use fkppg::oracle::DEFAULT_CAP;
use fkppg::{
    enumerate_paths, filtering_distribution, parse_model, run_and_estimate, semantics_bounds, Engine, Execution,
    LiftedQuery, OracleError, PfConfig, PfError, Ppg, Resampler,
};

use report::{FilterEntry, OracleReport, RunReport, ValidateReport};

#[derive(Parser)]
#[command(name = "fkppg", version, about = "Exact and particle-filter inference for probabilistic program graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model; print a summary.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Enumerate all paths up to the horizon and report exact bounds.
    Oracle(OracleArgs),
    /// Run a particle filter and report the estimate and bounds.
    Run(RunArgs),
}

#[derive(Args)]
struct QueryArgs {
    /// Model file (`.ppg`). A sidecar `<model>.json` supplies defaults.
    #[arg(long)]
    model: PathBuf,
    /// Query expression `h` over the model's variables.
    #[arg(long)]
    query: Option<String>,
    /// Upper bound `M` on the query (`inf` allowed).
    #[arg(long)]
    bound: Option<f64>,
    /// Horizon: number of states per path.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Maximum number of live path prefixes.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Number of particles.
    #[arg(long = "N", alias = "n", default_value_t = 10_000)]
    n: usize,
    #[arg(long, env = "FKPPG_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = EngineArg::Vpf)]
    engine: EngineArg,
    #[arg(long, value_enum, default_value_t = ResamplerArg::Multinomial)]
    resampler: ResamplerArg,
    /// Worker threads for the vectorized engine. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Scalar,
    Vpf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResamplerArg {
    Multinomial,
    Systematic,
}

#[derive(Debug)]
enum Failure {
    Runtime(String),
    Invalid(String),
    Io(String),
    Continuous(String),
    Explosion(String),
    Collapse(String, Box<RunReport>),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Io(_) => 3,
            Failure::Continuous(_) => 4,
            Failure::Explosion(_) => 5,
            Failure::Collapse(..) => 6,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Validate { model } => cmd_validate(&model),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Run(args) => cmd_run(&args),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            match &failure {
                Failure::Collapse(msg, partial) => {
                    eprintln!("error: {msg}");
                    eprintln!("{}", serde_json::to_string(partial).expect("report serializes"));
                }
                Failure::Runtime(msg)
                | Failure::Invalid(msg)
                | Failure::Io(msg)
                | Failure::Continuous(msg)
                | Failure::Explosion(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(failure.code())
        }
    }
}

fn load_model(path: &Path) -> Result<Ppg, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let ast = parse_model(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    Ppg::validate(&ast).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_sidecar(model: &Path) -> Result<Option<ModelMeta>, Failure> {
    let path = model.with_extension("json");
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    ModelMeta::from_json(&text)
        .map(Some)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

struct Resolved {
    g: Ppg,
    query_text: String,
    query: LiftedQuery,
    t: usize,
}

fn resolve(args: &QueryArgs) -> Result<Resolved, Failure> {
    let g = load_model(&args.model)?;
    let meta = load_sidecar(&args.model)?;
    let (query_text, sidecar_bound) = match (&args.query, &meta) {
        (Some(q), _) => (q.clone(), None),
        (None, Some(m)) => (m.query.clone(), m.bound),
        (None, None) => return Err(Failure::Invalid("--query is required when the model has no sidecar".into())),
    };
    let bound = args.bound.or(sidecar_bound);
    let query = LiftedQuery::parse(&query_text, g.vars(), bound).map_err(|e| Failure::Invalid(e.to_string()))?;
    let t = match (args.t, &meta) {
        (Some(t), _) => t,
        (None, Some(m)) => m.horizon,
        (None, None) => return Err(Failure::Invalid("--t is required when the model has no sidecar".into())),
    };
    if t == 0 {
        return Err(Failure::Invalid("--t must be at least 1".into()));
    }
    Ok(Resolved { g, query_text, query, t })
}

fn cmd_validate(model: &Path) -> Result<String, Failure> {
    let g = load_model(model)?;
    let report = ValidateReport::new(model, &g);
    Ok(report::to_json(&report))
}

fn cmd_oracle(args: &OracleArgs) -> Result<String, Failure> {
    let r = resolve(&args.query)?;
    let oracle_failure = |e: OracleError| match e {
        OracleError::ContinuousDistribution { .. } => Failure::Continuous(e.to_string()),
        OracleError::PathExplosion { .. } => Failure::Explosion(e.to_string()),
        OracleError::Program(_) | OracleError::Query(_) => Failure::Invalid(e.to_string()),
        _ => Failure::Runtime(e.to_string()),
    };
    let table = enumerate_paths(&r.g, r.t, args.cap).map_err(oracle_failure)?;
    let bounds = semantics_bounds(&r.g, &table, &r.query).map_err(oracle_failure)?;
    let filtering = filtering_distribution(&table)
        .map_err(oracle_failure)?
        .into_iter()
        .map(|a| FilterEntry { node: r.g.declared_id(a.state.checkpoint), state: a.state.store, mass: a.mass })
        .collect();
    let report = OracleReport::new(&args.query.model, &r.query_text, r.query.bound, r.t, table.paths.len(), bounds, filtering);
    Ok(match args.query.format {
        Format::Json => report::to_json(&report),
        Format::Csv => report.to_csv(),
    })
}

fn cmd_run(args: &RunArgs) -> Result<String, Failure> {
    let r = resolve(&args.query)?;
    if args.n == 0 {
        return Err(Failure::Invalid("--N must be at least 1".into()));
    }
    let engine = match args.engine {
        EngineArg::Scalar => Engine::Scalar,
        EngineArg::Vpf => Engine::Vpf,
    };
    let resampler = match args.resampler {
        ResamplerArg::Multinomial => Resampler::Multinomial,
        ResamplerArg::Systematic => Resampler::Systematic,
    };
    let cfg = PfConfig::new(r.t, args.n, args.seed).with_resampler(resampler);
    let header = RunReport::header(&args.query.model, &r.query_text, r.query.bound, &cfg, engine);
    let outcome = with_threads(args.threads, || run_and_estimate(&r.g, &cfg, engine, Execution::Parallel, &r.query))?;
    match outcome {
        Ok(est) => {
            let report = header.complete(&est);
            Ok(match args.query.format {
                Format::Json => report::to_json(&report),
                Format::Csv => report.to_csv(),
            })
        }
        Err(PfError::ZeroWeightEnsemble { step }) => {
            let msg = format!("all particle weights are zero at step {step}");
            Err(Failure::Collapse(msg, Box::new(header.collapsed(step))))
        }
        Err(e @ (PfError::Program { .. } | PfError::Query { .. })) => Err(Failure::Invalid(e.to_string())),
        Err(e) => Err(Failure::Runtime(e.to_string())),
    }
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    Ok(f())
}
