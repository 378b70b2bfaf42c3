//! Command-line front end. Exit codes: 0 pass, 1 input error,
//! 2 no convergence, 3 inequality failure, 4 search exhausted.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::campaign::{
    run_campaign, run_instance, write_report, CampaignConfig, CampaignRecord, CampaignSummary,
    CheckInstance,
};
use crate::error::{Error, Result};
use crate::inequalities::{kantorovich, optimality_scan, CheckReport, ScanMode, SearchConfig};
use crate::meanfns::RepFnSpec;
use crate::multimeans::{evaluate, MultiMeanSpec, SolverConfig};
use crate::psd::SpdMatrix;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;
pub const EXIT_EXHAUSTED: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "opmean",
    version,
    about = "Operator means and power inequality checks for positive definite matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalOpts,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Override the campaign seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Solver stopping tolerance (Thompson metric) or check tolerance for searches.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Worker threads for campaigns; all cores by default.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a mean: SPEC is a mean description, MATRICES a JSON list of matrices.
    Mean { spec: PathBuf, matrices: PathBuf },
    /// Run a campaign file, or re-verify a single instance or report line.
    Verify { input: PathBuf },
    /// Search for a violation of a bracket inequality outside its exponent range.
    Search {
        tau: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        r: f64,
        /// Search grid overrides (JSON).
        #[arg(long)]
        budget: Option<PathBuf>,
    },
    /// Evaluate the generalized Kantorovich constant K(h, p).
    Kantorovich {
        #[arg(long)]
        h: f64,
        #[arg(long)]
        p: f64,
    },
}

/// What `verify` accepts.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum VerifyInput {
    Campaign(CampaignConfig),
    Instance(CheckInstance),
    Record { instance: CheckInstance },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatricesFile {
    List(Vec<SpdMatrix>),
    Wrapped { matrices: Vec<SpdMatrix> },
}

/// Output of one command.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

impl Outcome {
    fn new(code: i32, stdout: String) -> Self {
        Outcome { code, stdout }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn solver_config(g: &GlobalOpts, base: SolverConfig) -> Result<SolverConfig> {
    let mut cfg = base;
    if let Some(t) = g.tol {
        cfg.dt_tol = t;
    }
    if let Some(m) = g.max_iters {
        cfg.max_iters = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn error_json(e: &Error) -> String {
    let mut v = json!({ "error": e.to_string() });
    if let Error::NoConvergence {
        iterations,
        residual,
        last,
    } = e
    {
        v["iterations"] = json!(iterations);
        v["residual_dt"] = json!(residual);
        if let Some(m) = last {
            v["last"] = serde_json::to_value(m).unwrap_or_default();
        }
    }
    v.to_string()
}

fn error_code(e: &Error) -> i32 {
    match crate::campaign::ErrorKind::of(e) {
        crate::campaign::ErrorKind::NoConvergence => EXIT_NO_CONVERGENCE,
        crate::campaign::ErrorKind::Input => EXIT_INPUT,
    }
}

/// Runs a parsed command line. Result text goes to `--output` when given,
/// and is also returned for stdout.
pub fn execute(cli: &Cli) -> Outcome {
    let g = &cli.global;
    let result = match &cli.command {
        Command::Mean { spec, matrices } => cmd_mean(spec, matrices, g),
        Command::Verify { input } => cmd_verify(input, g),
        Command::Search {
            tau,
            mode,
            r,
            budget,
        } => cmd_search(tau, mode, *r, budget.as_deref(), g),
        Command::Kantorovich { h, p } => kantorovich(*h, *p).map(|k| {
            Outcome::new(
                EXIT_PASS,
                json!({ "h": h, "p": p, "value": k }).to_string() + "\n",
            )
        }),
    };
    let outcome = result.unwrap_or_else(|e| Outcome::new(error_code(&e), error_json(&e) + "\n"));
    if let Some(path) = &g.output {
        if let Err(e) = fs::write(path, &outcome.stdout) {
            return Outcome::new(EXIT_INPUT, error_json(&Error::from(e)) + "\n");
        }
    }
    outcome
}

pub fn cmd_mean(spec_file: &Path, matrices_file: &Path, g: &GlobalOpts) -> Result<Outcome> {
    let spec: MultiMeanSpec = read_json(spec_file)?;
    let mats = match read_json::<MatricesFile>(matrices_file)? {
        MatricesFile::List(m) | MatricesFile::Wrapped { matrices: m } => m,
    };
    let cfg = solver_config(g, SolverConfig::default())?;
    let result = evaluate(&spec, &mats, &cfg)?;
    Ok(Outcome::new(
        EXIT_PASS,
        serde_json::to_string(&result)? + "\n",
    ))
}

pub fn cmd_verify(input: &Path, g: &GlobalOpts) -> Result<Outcome> {
    match read_json::<VerifyInput>(input)? {
        VerifyInput::Campaign(mut cfg) => {
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if g.tol.is_some() || g.max_iters.is_some() {
                cfg.solver = Some(solver_config(g, cfg.solver_config())?);
            }
            let (records, summary) = match g.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?
                    .install(|| run_campaign(&cfg))?,
                None => run_campaign(&cfg)?,
            };
            let mut buf = Vec::new();
            write_report(&mut buf, &records, &summary)?;
            let text = String::from_utf8(buf).expect("JSON is UTF-8");
            if g.output.is_none() {
                if let Some(path) = &cfg.output_path {
                    fs::write(path, &text)?;
                    return Ok(Outcome::new(summary.exit_code(), summary_line(&summary)));
                }
            }
            Ok(Outcome::new(summary.exit_code(), text))
        }
        VerifyInput::Instance(inst) | VerifyInput::Record { instance: inst } => {
            let cfg = solver_config(g, CampaignConfig::new(&[], vec![], 1, 0).solver_config())?;
            let report: CheckReport = run_instance(&inst, &cfg, crate::inequalities::CHECK_TOL)?;
            let code = if report.holds {
                EXIT_PASS
            } else {
                EXIT_FAILURE
            };
            let rec = CampaignRecord::Report {
                report,
                instance: None,
            };
            Ok(Outcome::new(code, serde_json::to_string(&rec)? + "\n"))
        }
    }
}

fn summary_line(s: &CampaignSummary) -> String {
    serde_json::to_string(&CampaignRecord::Summary { summary: s.clone() }).unwrap_or_default()
        + "\n"
}

pub fn cmd_search(
    tau_file: &Path,
    mode: &str,
    r: f64,
    budget: Option<&Path>,
    g: &GlobalOpts,
) -> Result<Outcome> {
    let tau: RepFnSpec = read_json(tau_file)?;
    let mode: ScanMode = mode.parse()?;
    let mut search: SearchConfig = match budget {
        Some(p) => read_json(p)?,
        None => SearchConfig::default(),
    };
    if let Some(t) = g.tol {
        search.tol = t;
    }
    match optimality_scan(&tau, r, mode, &search)? {
        Some(cx) => Ok(Outcome::new(EXIT_PASS, serde_json::to_string(&cx)? + "\n")),
        None => Ok(Outcome::new(EXIT_EXHAUSTED, "none\n".into())),
    }
}

/// Entry point for the binary.
pub fn main_with(cli: &Cli) -> i32 {
    let outcome = execute(cli);
    if cli.global.output.is_none() {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        let _ = lock.write_all(outcome.stdout.as_bytes());
    }
    outcome.code
}
