//! `qkdlab`: batch front end for tag-stream analysis and key-rate curves.

mod commands;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "qkdlab",
    version,
    about = "Key-rate pipeline for single-photon QKD links"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Parameter preset (baseline, improved, qd) or a path to a JSON document.
    #[arg(long, global = true, default_value = "baseline")]
    pub preset: String,
    /// Override one parameter, `key=value`. Keys may be dotted
    /// (receiver.p_dc) or bare (p_dc); `repeater.<field>` sets repeater
    /// parameters. Repeatable.
    #[arg(long = "param", global = true, value_name = "KEY=VALUE", value_parser = parse_override)]
    pub params: Vec<(String, f64)>,
    /// RNG seed for stream generation.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output format for tables and reports.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; a `<file>.manifest.json` is written beside it.
    /// Without it, output goes to stdout and no manifest is written.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true, env = "QKDLAB_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic tag stream (QTT1 by default, CSV with --format csv).
    Generate(commands::GenerateArgs),
    /// Sift a tag stream through one temporal filter or sweep the filter grid.
    ///
    /// Columns: t0_ns, dt_ns, n_received, n_errors, n_double, n_empty,
    /// sikr_bps, qber, skr_bps. With --sweep and --out, three maps
    /// (<stem>_sikr.csv, <stem>_qber.csv, <stem>_skr.csv; rows t0, columns dt)
    /// are written beside the table.
    Sift(commands::SiftArgs),
    /// Optimized secure-key-rate curve versus channel loss.
    ///
    /// Columns: loss_db, distance_km, rate_per_pulse, rate_bps, p_x_opt,
    /// eta_tr_opt, feasible, node_frac_to_alice (repeater only; blank otherwise).
    Curve(commands::CurveArgs),
    /// Compare two curve CSVs: crossover loss, tolerable losses, rate ratios (JSON).
    Compare(commands::CompareArgs),
    /// Second-order correlation histogram between the two detector channels.
    ///
    /// Columns: delay_ps (bin left edge), count.
    G2(commands::G2Args),
    /// Single-exponential emitter lifetime fit.
    ///
    /// Columns: tau_ns, residual, events, fit_start_ns, fit_end_ns.
    Lifetime(commands::LifetimeArgs),
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|e| format!("value for `{k}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Exit statuses: 2 usage, 3 malformed input, 4 infeasible computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Usage = 2,
    Input = 3,
    Infeasible = 4,
}

/// An error tagged with the exit status it maps to.
#[derive(Debug)]
pub struct Coded {
    pub code: Failure,
    pub message: String,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

pub fn fail(code: Failure, message: impl Into<String>) -> anyhow::Error {
    Coded {
        code,
        message: message.into(),
    }
    .into()
}

fn exit_status(err: &anyhow::Error) -> u8 {
    use qkdlab::Error as E;
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code as u8;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidParameter { .. }
                | E::ProbabilityOutOfRange(_)
                | E::Domain(_)
                | E::UnknownPreset(_) => 2,
                E::Format { .. } | E::Stream(_) | E::Csv(_) | E::Json(_) => 3,
                E::Infeasible(_) | E::ZeroClickProbability | E::Estimate(_) => 4,
                E::Io(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let g = &cli.global;
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(g, a),
        Command::Sift(a) => commands::sift(g, a),
        Command::Curve(a) => commands::curve(g, a),
        Command::Compare(a) => commands::compare(g, a),
        Command::G2(a) => commands::g2(g, a),
        Command::Lifetime(a) => commands::lifetime(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
