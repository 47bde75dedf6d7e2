//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O, 2 invalid input, 3 numerical consistency
//! failure, 4 no accepted rounds where conditional estimates were asked
//! for, 5 oracle-check violation.

pub mod suites;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tracing::info;

use qsv::certbank::{certify, dqsv_intermediates, CertificateQuery, DqsvIntermediates, Protocol};
use qsv::config::{Lambda, OutputConfig, OutputFormat, RunConfig, SourceConfig, SourceModel};
use qsv::output::{round_records, write_csv, write_json};
use qsv::reproduce::{
    certificate_at, fig3, fig4, fig5, write_fig3, write_fig4, write_fig5, Fig3Options, Fig4Options,
    Fig5Options,
};
use qsv::rng::{experiment, SeedPlan};
use qsv::sim::{run_experiment, ExperimentSummary, StoppingRule};
use qsv::QsvError;

pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NO_ACCEPTED: i32 = 4;
pub const EXIT_VIOLATION: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<QsvError> for CliError {
    fn from(e: QsvError) -> Self {
        let code = match e {
            QsvError::Numerical(_) => EXIT_NUMERICAL,
            QsvError::Io(_) | QsvError::Csv(_) | QsvError::Json(_) => EXIT_IO,
            _ => EXIT_INVALID,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_IO, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new(EXIT_IO, e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "qsv",
    version,
    about = "Quantum state verification certificates and simulations"
)]
pub struct Cli {
    /// Master seed for all random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Format of printed results and summaries.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the certificate for one query.
    Certify(CertifyArgs),
    /// Run a simulated experiment from a config file and/or flags.
    Simulate(SimulateArgs),
    /// Regenerate one of the canned experiment grids.
    Reproduce {
        #[command(subcommand)]
        figure: Figure,
    },
    /// Run a self-check suite against the exact oracles.
    OracleCheck(OracleCheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Sqsv,
    Dqsv,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Sqsv => Protocol::Sqsv,
            ProtocolArg::Dqsv => Protocol::Dqsv,
        }
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Number of tests.
    #[arg(long)]
    pub n: u64,
    /// Largest number of tolerated failures.
    #[arg(long)]
    pub k: u64,
    #[arg(long)]
    pub delta: f64,
    /// Decimal or fraction, e.g. `1/3`.
    #[arg(long, default_value = "1/3")]
    pub lambda: Lambda,
    /// Include the `h`, `g`, `ẑ`, `κ` and `ζ̃` behind a DQSV certificate.
    #[arg(long)]
    pub intermediates: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML run configuration; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub k: Option<u64>,
    #[arg(long)]
    pub lambda: Option<Lambda>,
    /// Also report certificates at this fixed `δ`.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    /// Per-copy preparation fidelity.
    #[arg(long)]
    pub fidelity: Option<f64>,
    /// Phase of the odd copy for `rho2`.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Run exactly this many rounds.
    #[arg(long, conflicts_with = "until_accepted")]
    pub rounds: Option<u64>,
    /// Run until this many rounds are accepted.
    #[arg(long)]
    pub until_accepted: Option<u64>,
    /// Cap on rounds with `--until-accepted`.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_rounds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Honest,
    Rho1,
    Rho2,
}

#[derive(Debug, Subcommand)]
pub enum Figure {
    /// All-or-nothing correlated source, `N = 100`, `k = 0..=k_max`.
    Fig3 {
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long, default_value_t = 10)]
        k_max: u64,
        #[arg(long, default_value_t = 10_000)]
        rounds: u64,
        #[arg(long, default_value_t = 1.0)]
        prep_fidelity: f64,
    },
    /// Hidden phase-flip source over `N` and over `φ`.
    Fig4 {
        #[arg(long, default_value_t = 1000)]
        target_accepted: u64,
        #[arg(long, default_value_t = 1_000_000)]
        max_rounds: u64,
        #[arg(long, default_value_t = 1.0)]
        prep_fidelity: f64,
    },
    /// Certified infidelity against `N` for an honest source.
    Fig5 {
        #[arg(long, default_value_t = 0.99)]
        fidelity: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 80)]
        rounds: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Binom,
    Sqsv,
    DqsvSweep,
    Factorization,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Size limit: largest `z` (binom), largest `N` (sqsv, factorization).
    #[arg(long)]
    pub budget: Option<u64>,
    /// Sweep size `n`.
    #[arg(long, default_value_t = 6)]
    pub n: u64,
    /// Sweep threshold `k`.
    #[arg(long, default_value_t = 1)]
    pub k: u64,
    /// Sweep trials.
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Sweep `λ`.
    #[arg(long, default_value = "1/3")]
    pub lambda: Lambda,
}

const DEFAULT_SEED: u64 = 0;

impl Cli {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }

    fn out_dir(&self, fallback: &Path) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| fallback.to_path_buf())
    }
}

/// Runs a parsed command, printing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult {
    match &cli.command {
        Command::Certify(a) => cmd_certify(cli, a, out),
        Command::Simulate(a) => cmd_simulate(cli, a, out),
        Command::Reproduce { figure } => cmd_reproduce(cli, figure, out),
        Command::OracleCheck(a) => cmd_oracle_check(cli, a, out),
    }
}

#[derive(Debug, Serialize)]
pub struct CertifyOutput {
    pub protocol: Protocol,
    pub n: u64,
    pub k: u64,
    pub delta: f64,
    pub lambda: f64,
    pub fidelity_bound: f64,
    pub infidelity_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediates: Option<DqsvIntermediates>,
}

fn cmd_certify(cli: &Cli, a: &CertifyArgs, out: &mut dyn Write) -> CliResult {
    let q = CertificateQuery::new(a.protocol.into(), a.n, a.k, a.delta, a.lambda.0)?;
    let c = certify(&q)?;
    let intermediates = if a.intermediates {
        if q.protocol != Protocol::Dqsv {
            return Err(CliError::new(
                EXIT_INVALID,
                "--intermediates is only available for dqsv",
            ));
        }
        // Degenerate queries (certificate 0) have no intermediates.
        match dqsv_intermediates(&q) {
            Ok(i) => Some(i),
            Err(QsvError::Domain(_)) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let o = CertifyOutput {
        protocol: q.protocol,
        n: q.n,
        k: q.k,
        delta: q.delta,
        lambda: q.lambda,
        fidelity_bound: c.fidelity_bound,
        infidelity_bound: c.infidelity_bound,
        intermediates,
    };
    match cli.format() {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &o)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(
                out,
                "protocol,n,k,delta,lambda,fidelity_bound,infidelity_bound"
            )?;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                o.protocol, o.n, o.k, o.delta, o.lambda, o.fidelity_bound, o.infidelity_bound
            )?;
        }
    }
    Ok(())
}

fn missing(field: &str) -> CliError {
    CliError::new(
        EXIT_INVALID,
        format!("config error in `{field}`: required (set it in --config or pass --{field})"),
    )
}

/// The effective configuration: file values, then flag overrides.
pub fn simulate_config(cli: &Cli, a: &SimulateArgs) -> CliResult<RunConfig> {
    let mut c = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig {
            protocol: a.protocol.ok_or_else(|| missing("protocol"))?.into(),
            n: a.n.ok_or_else(|| missing("n"))?,
            k: a.k.ok_or_else(|| missing("k"))?,
            delta: None,
            lambda: Lambda::default(),
            source: SourceConfig {
                model: match a.source.ok_or_else(|| missing("source"))? {
                    SourceArg::Honest => SourceModel::Honest,
                    SourceArg::Rho1 => SourceModel::Rho1,
                    SourceArg::Rho2 => SourceModel::Rho2,
                },
                fidelity: 1.0,
                phi: None,
                branches: Vec::new(),
            },
            stopping: StoppingRule::FixedRounds { rounds: 1000 },
            seed: DEFAULT_SEED,
            output: OutputConfig::default(),
        },
    };
    if let Some(p) = a.protocol {
        c.protocol = p.into();
    }
    if let Some(n) = a.n {
        c.n = n;
    }
    if let Some(k) = a.k {
        c.k = k;
    }
    if let Some(l) = a.lambda {
        c.lambda = l;
    }
    if a.delta.is_some() {
        c.delta = a.delta;
    }
    if let Some(s) = a.source {
        c.source.model = match s {
            SourceArg::Honest => SourceModel::Honest,
            SourceArg::Rho1 => SourceModel::Rho1,
            SourceArg::Rho2 => SourceModel::Rho2,
        };
        c.source.branches.clear();
    }
    if let Some(f) = a.fidelity {
        c.source.fidelity = f;
    }
    if a.phi.is_some() {
        c.source.phi = a.phi;
    }
    if let Some(r) = a.rounds {
        c.stopping = StoppingRule::FixedRounds { rounds: r };
    }
    if let Some(t) = a.until_accepted {
        c.stopping = StoppingRule::UntilAccepted {
            target: t,
            max_rounds: a.max_rounds,
        };
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        c.output.dir = d.clone();
    }
    if let Some(f) = cli.format {
        c.output.format = f.into();
    }
    Ok(c)
}

#[derive(Debug, Serialize)]
pub struct CertificateSet {
    /// At the point estimate `p̂`.
    pub at_p_hat: Option<f64>,
    /// At the lower edge of the `p̂` confidence interval.
    pub at_p_lo: Option<f64>,
    /// At the configured fixed `δ`, if any.
    pub at_delta: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub config: RunConfig,
    pub summary: ExperimentSummary,
    pub certificates: CertificateSet,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    protocol: Protocol,
    n: u64,
    k: u64,
    rounds: u64,
    accepted: u64,
    p_hat: f64,
    p_lo: f64,
    p_hi: f64,
    conditional_truth: Option<f64>,
    conditional_truth_se: Option<f64>,
    conditional_measured: Option<f64>,
    conditional_measured_se: Option<f64>,
    unconditional_truth: f64,
    unconditional_truth_se: f64,
    unconditional_measured: f64,
    unconditional_measured_se: f64,
    cert_p_hat: Option<f64>,
    cert_p_lo: Option<f64>,
    cert_delta: Option<f64>,
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, out: &mut dyn Write) -> CliResult {
    let config = simulate_config(cli, a)?;
    let plan = config.plan()?;
    let n = config.n;
    let k = config.k;
    let lambda = config.lambda.0;
    info!(protocol = %config.protocol, n, k, "simulating");
    let exp = run_experiment(
        &plan.mixture,
        n as usize,
        k,
        &plan.strategy,
        config.protocol,
        config.stopping,
        SeedPlan::new(config.seed, experiment::SIMULATE),
    )?;
    let s = exp.summary;
    let certificates = CertificateSet {
        at_p_hat: certificate_at(config.protocol, n, k, s.p_hat, lambda)?,
        at_p_lo: certificate_at(config.protocol, n, k, s.p_hat_ci[0], lambda)?,
        at_delta: match config.delta {
            Some(d) => certificate_at(config.protocol, n, k, d, lambda)?,
            None => None,
        },
    };
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match config.output.format {
        OutputFormat::Json => {
            let path = dir.join("summary.json");
            let report = SimulateReport {
                config: config.clone(),
                summary: s.clone(),
                certificates,
            };
            write_json(&path, &report)?;
            written.push(path);
        }
        OutputFormat::Csv => {
            let path = dir.join("summary.csv");
            let est = |e: Option<qsv::sim::Estimate>| (e.map(|e| e.mean), e.map(|e| e.std_error));
            let (ct, cts) = est(s.conditional_fidelity_truth);
            let (cm, cms) = est(s.conditional_fidelity_measured);
            let row = SummaryRow {
                protocol: s.protocol,
                n,
                k,
                rounds: s.rounds,
                accepted: s.accepted,
                p_hat: s.p_hat,
                p_lo: s.p_hat_ci[0],
                p_hi: s.p_hat_ci[1],
                conditional_truth: ct,
                conditional_truth_se: cts,
                conditional_measured: cm,
                conditional_measured_se: cms,
                unconditional_truth: s.unconditional_fidelity_truth.mean,
                unconditional_truth_se: s.unconditional_fidelity_truth.std_error,
                unconditional_measured: s.unconditional_fidelity_measured.mean,
                unconditional_measured_se: s.unconditional_fidelity_measured.std_error,
                cert_p_hat: certificates.at_p_hat,
                cert_p_lo: certificates.at_p_lo,
                cert_delta: certificates.at_delta,
            };
            write_csv(&path, "summary", &[row])?;
            written.push(path);
        }
    }
    if config.output.per_round {
        let path = dir.join("rounds.csv");
        write_csv(&path, "rounds", &round_records(&exp.outcomes, k))?;
        written.push(path);
    }
    for p in &written {
        writeln!(out, "{}", p.display())?;
    }
    if config.protocol == Protocol::Dqsv && s.accepted == 0 {
        return Err(CliError::new(
            EXIT_NO_ACCEPTED,
            format!(
                "no round out of {} was accepted; conditional fidelities are undefined",
                s.rounds
            ),
        ));
    }
    Ok(())
}

fn cmd_reproduce(cli: &Cli, figure: &Figure, out: &mut dyn Write) -> CliResult {
    let seed = cli.seed();
    let dir = cli.out_dir(Path::new("out"));
    let json = cli.format() == Format::Json;
    let written = match *figure {
        Figure::Fig3 {
            n,
            k_max,
            rounds,
            prep_fidelity,
        } => {
            let t = fig3(&Fig3Options {
                n,
                k_max,
                rounds,
                prep_fidelity,
                seed,
            })?;
            write_fig3(&dir, &t, json)?
        }
        Figure::Fig4 {
            target_accepted,
            max_rounds,
            prep_fidelity,
        } => {
            let t = fig4(&Fig4Options {
                target_accepted,
                max_rounds,
                prep_fidelity,
                seed,
                ..Fig4Options::default()
            })?;
            write_fig4(&dir, &t, json)?
        }
        Figure::Fig5 {
            fidelity,
            delta,
            rounds,
        } => {
            let t = fig5(&Fig5Options {
                fidelity,
                delta,
                rounds,
                seed,
                ..Fig5Options::default()
            })?;
            write_fig5(&dir, &t, json)?
        }
    };
    for p in written {
        writeln!(out, "{}", p.display())?;
    }
    Ok(())
}

fn cmd_oracle_check(cli: &Cli, a: &OracleCheckArgs, out: &mut dyn Write) -> CliResult {
    let seed = cli.seed();
    let value = match a.suite {
        Suite::Binom => serde_json::to_value(suites::binom_with_h(a.budget.unwrap_or(200))?)?,
        Suite::Sqsv => serde_json::to_value(suites::sqsv(a.budget.unwrap_or(100))?)?,
        Suite::Factorization => {
            serde_json::to_value(suites::factorization(a.budget.unwrap_or(8), seed)?)?
        }
        Suite::DqsvSweep => {
            serde_json::to_value(suites::dqsv_sweep(a.n, a.k, a.lambda.0, a.trials, seed)?)?
        }
    };
    serde_json::to_writer_pretty(&mut *out, &value)?;
    writeln!(out)?;
    let passed = value
        .get("passed")
        .and_then(|v| v.as_bool())
        .unwrap_or(false);
    if passed {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_VIOLATION,
            format!("oracle check `{:?}` found violations", a.suite),
        ))
    }
}
