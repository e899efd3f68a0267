use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use qkdlab::b92::skr_from_counts;
use qkdlab::bb84::{BB84Options, LeakModel};
use qkdlab::model::{apply_override, instance_from_value, preset_document};
use qkdlab::optimizer::{build_curve, loss_grid, Calculator, CurveMeta, RateCurve};
use qkdlab::repeater::{crossover, RepeaterParams};
use qkdlab::timetag::{
    default_filter_grids, fit_lifetime_with, g2_histogram, generate_stream_with, grid,
    sift as sift_window, sweep_filters, trigger_period_ps, ApparatusProfile, DetectionMode,
    FilterWindow, GeneratorConfig, LifetimeFitOptions, PhotonStatistics, SiftedStats, TagStream,
    QTT1_MAGIC,
};
use qkdlab::ProtocolInstance;

use crate::manifest::{FileDigest, RunManifest};
use crate::{fail, Failure, Format, GlobalArgs};

const REPEATER_PREFIX: &str = "repeater.";

/// Preset, overrides and optional preset file, resolved.
struct Setup {
    inst: ProtocolInstance,
    repeater: RepeaterParams,
    inputs: Vec<FileDigest>,
}

fn setup(g: &GlobalArgs) -> Result<Setup> {
    let mut inputs = Vec::new();
    let as_path = Path::new(&g.preset);
    let mut doc = if g.preset.ends_with(".json") || as_path.is_file() {
        let bytes =
            fs::read(as_path).with_context(|| format!("reading preset {}", as_path.display()))?;
        inputs.push(FileDigest::of(as_path, &bytes));
        serde_json::from_slice::<Value>(&bytes)
            .map_err(qkdlab::Error::from)
            .with_context(|| format!("parsing preset {}", as_path.display()))?
    } else {
        preset_document(&g.preset)?
    };

    let mut repeater = serde_json::to_value(RepeaterParams::default())?;
    for (key, value) in &g.params {
        if let Some(field) = key.strip_prefix(REPEATER_PREFIX) {
            let slot = repeater.get_mut(field).ok_or_else(|| {
                fail(
                    Failure::Usage,
                    format!("unknown repeater parameter `{field}`"),
                )
            })?;
            *slot = json!(value);
        } else {
            apply_override(&mut doc, key, *value)?;
        }
    }
    let repeater: RepeaterParams = serde_json::from_value(repeater)
        .map_err(|e| fail(Failure::Usage, format!("repeater parameters: {e}")))?;
    repeater.validate()?;
    Ok(Setup {
        inst: instance_from_value(&doc)?,
        repeater,
        inputs,
    })
}

/// Writes the primary output (to `--out` or stdout) plus any side files,
/// then the manifest beside the primary output.
fn emit(
    g: &GlobalArgs,
    mut manifest: RunManifest,
    primary: Vec<u8>,
    side: Vec<(PathBuf, Vec<u8>)>,
) -> Result<()> {
    let Some(out) = &g.out else {
        std::io::stdout().write_all(&primary)?;
        if !side.is_empty() {
            eprintln!("note: side files are only written with --out");
        }
        return Ok(());
    };
    fs::write(out, &primary).with_context(|| format!("writing {}", out.display()))?;
    manifest.outputs.push(FileDigest::of(out, &primary));
    for (path, bytes) in &side {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        manifest.outputs.push(FileDigest::of(path, bytes));
    }
    manifest.write_beside(out)?;
    Ok(())
}

fn side_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn read_tags(path: &Path, inst: &ProtocolInstance) -> Result<(TagStream, FileDigest)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = FileDigest::of(path, &bytes);
    let stream = if bytes.starts_with(&QTT1_MAGIC[..4]) {
        TagStream::read_qtt1(bytes.as_slice())
    } else {
        TagStream::read_csv(
            bytes.as_slice(),
            trigger_period_ps(inst.source.clock_rate_hz),
        )
    }
    .with_context(|| format!("parsing {}", path.display()))?;
    Ok((stream, digest))
}

fn parse_range(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Vec<f64> = parts.iter().filter_map(|p| p.trim().parse().ok()).collect();
    match nums[..] {
        [a, b, c] if parts.len() == 3 => Ok((a, b, c)),
        _ => Err(fail(
            Failure::Usage,
            format!("expected start:stop:step, got `{s}`"),
        )),
    }
}

/// Parses a duration such as `10ms`, `2.5us`, `1s` or a bare number of
/// seconds.
fn parse_seconds(s: &str) -> Result<f64> {
    let s = s.trim();
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    let split = s
        .find(|c: char| c.is_ascii_alphabetic() || c == 'µ')
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| fail(Failure::Usage, format!("bad duration `{s}`")))?;
    // Divide by exact powers of ten so "5us" is the nearest double to 5e-6.
    let per_second = match unit {
        "" | "s" => 1.0,
        "ms" => 1e3,
        "us" | "µs" => 1e6,
        "ns" => 1e9,
        _ => {
            return Err(fail(
                Failure::Usage,
                format!("unknown duration unit in `{s}`"),
            ))
        }
    };
    Ok(value / per_second)
}

fn to_json(v: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    Ok(text.into_bytes())
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    B92,
    Hbt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhotonArg {
    Single,
    Pairs,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApparatusArg {
    None,
    FreeSpaceLink,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Acquisition time in seconds.
    #[arg(long)]
    pub duration: f64,
    #[arg(long, value_enum, default_value = "b92")]
    pub mode: ModeArg,
    /// Photon statistics; `pairs` uses the preset's g2_zero.
    #[arg(long, value_enum, default_value = "single")]
    pub photons: PhotonArg,
    /// Transmitter imperfection profile.
    #[arg(long, value_enum, default_value = "none")]
    pub apparatus: ApparatusArg,
    /// Timing jitter σ in ps.
    #[arg(long, default_value_t = 350.0)]
    pub jitter_ps: f64,
}

pub fn generate(g: &GlobalArgs, a: &GenerateArgs) -> Result<()> {
    let s = setup(g)?;
    if !(a.duration > 0.0 && a.duration.is_finite()) {
        return Err(fail(
            Failure::Usage,
            format!("--duration must be > 0, got {}", a.duration),
        ));
    }
    let cfg = GeneratorConfig {
        photons: match a.photons {
            PhotonArg::Single => PhotonStatistics::Single,
            PhotonArg::Pairs => PhotonStatistics::Pairs {
                g2: s.inst.source.g2_zero,
            },
            PhotonArg::Poisson => PhotonStatistics::Poisson,
        },
        mode: match a.mode {
            ModeArg::B92 => DetectionMode::B92,
            ModeArg::Hbt => DetectionMode::Hbt,
        },
        apparatus: match a.apparatus {
            ApparatusArg::None => None,
            ApparatusArg::FreeSpaceLink => Some(ApparatusProfile::free_space_link()),
        },
        jitter_ps: a.jitter_ps,
        ..GeneratorConfig::default()
    };
    let stream = generate_stream_with(&s.inst, a.duration, g.seed, &cfg)?;
    let mut bytes = Vec::new();
    let tag_format = match g.format {
        None => "qtt1",
        Some(Format::Csv) => "csv",
        Some(Format::Json) => {
            return Err(fail(
                Failure::Usage,
                "tag streams are written as QTT1 or CSV",
            ))
        }
    };
    if tag_format == "csv" {
        stream.write_csv(&mut bytes)?;
    } else {
        stream.write_qtt1(&mut bytes)?;
    }
    eprintln!(
        "{} triggers, {} clicks over {} s",
        stream.trigger_count(),
        stream.clicks.len(),
        stream.duration_s
    );
    let args = json!({
        "duration_s": a.duration,
        "mode": format!("{:?}", a.mode),
        "photons": format!("{:?}", a.photons),
        "apparatus": format!("{:?}", a.apparatus),
        "jitter_ps": a.jitter_ps,
        "tag_format": tag_format,
    });
    let mut m = RunManifest::new("generate", &g.preset, &g.params, Some(g.seed), args);
    m.inputs = s.inputs;
    emit(g, m, bytes, Vec::new())
}

// ---------------------------------------------------------------- sift

#[derive(Args, Debug)]
pub struct SiftArgs {
    /// Tag file (QTT1 or CSV; CSV takes its trigger period from the preset clock).
    pub tags: PathBuf,
    /// Window start after each trigger, ns.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// Window width, ns. Defaults to the rest of the trigger period.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Sweep the (t0, dt) grid instead of a single window.
    #[arg(long)]
    pub sweep: bool,
    /// t0 sweep grid, start:stop:step in ns.
    #[arg(long, default_value = "0:4:0.1")]
    pub t0_grid: String,
    /// dt sweep grid, start:stop:step in ns.
    #[arg(long, default_value = "3:12:0.1")]
    pub dt_grid: String,
    /// Block length in seconds for the finite-key SKR.
    #[arg(long, default_value_t = 1.0)]
    pub block_s: f64,
}

const SIFT_HEADER: &str =
    "t0_ns,dt_ns,n_received,n_errors,n_double,n_empty,sikr_bps,qber,skr_bps\n";

fn sift_row(out: &mut String, t0: f64, dt: f64, s: &SiftedStats, skr: f64) {
    let _ = writeln!(
        out,
        "{t0},{dt},{},{},{},{},{},{},{skr}",
        s.n_received, s.n_errors, s.n_double, s.n_empty, s.sikr_bps, s.qber
    );
}

fn map_csv(t0: &[f64], dt: &[f64], map: &[Vec<f64>]) -> Vec<u8> {
    let mut out = String::from("t0_ns");
    for d in dt {
        let _ = write!(out, ",{d}");
    }
    out.push('\n');
    for (a, row) in t0.iter().zip(map) {
        out.push_str(&a.to_string());
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub fn sift(g: &GlobalArgs, a: &SiftArgs) -> Result<()> {
    let s = setup(g)?;
    if !(a.block_s > 0.0) {
        return Err(fail(Failure::Usage, "--block-s must be > 0"));
    }
    let (stream, digest) = read_tags(&a.tags, &s.inst)?;
    let security = s.inst.security;
    let block_s = a.block_s;
    let skr = move |st: &SiftedStats, duration: f64| {
        skr_from_counts(st.n_received, st.n_errors, duration, &security, block_s)
    };
    let format = g.format.unwrap_or(Format::Csv);
    let mut m = RunManifest::new("sift", &g.preset, &g.params, None, Value::Null);
    m.inputs = s.inputs;
    m.inputs.push(digest);

    if stream.clicks.is_empty() {
        eprintln!("warning: stream holds no detector clicks");
    }

    if !a.sweep {
        let window = FilterWindow::new(
            a.t0,
            a.dt.unwrap_or(stream.trigger_period_ps as f64 * 1e-3 - a.t0),
        );
        let stats = if stream.triggers.is_empty() {
            eprintln!("warning: stream holds no triggers");
            SiftedStats {
                n_received: 0,
                n_errors: 0,
                n_double: 0,
                n_empty: 0,
                sikr_bps: 0.0,
                qber: 0.0,
            }
        } else {
            sift_window(&stream, window)?
        };
        let key = skr(&stats, stream.duration_s);
        m.args = json!({ "t0_ns": window.t0_ns, "dt_ns": window.dt_ns, "block_s": block_s });
        let bytes = match format {
            Format::Csv => {
                let mut out = String::from(SIFT_HEADER);
                sift_row(&mut out, window.t0_ns, window.dt_ns, &stats, key);
                out.into_bytes()
            }
            Format::Json => to_json(&json!({ "window": window, "stats": stats, "skr_bps": key }))?,
        };
        return emit(g, m, bytes, Vec::new());
    }

    let (t0_grid, dt_grid) = if a.t0_grid == "0:4:0.1" && a.dt_grid == "3:12:0.1" {
        default_filter_grids()
    } else {
        let (t0a, t0b, t0s) = parse_range(&a.t0_grid)?;
        let (dta, dtb, dts) = parse_range(&a.dt_grid)?;
        (grid(t0a, t0b, t0s)?, grid(dta, dtb, dts)?)
    };
    let sweep = sweep_filters(&stream, &t0_grid, &dt_grid, skr)?;
    let best = sweep.best_window();
    let best_stats = sweep.best_stats();
    let (bi, bj) = sweep.argmax;
    eprintln!(
        "best window t0 = {} ns, dt = {} ns: SKR {} bps, SiKR {} bps, QBER {}",
        best.t0_ns, best.dt_ns, sweep.skr_map[bi][bj], best_stats.sikr_bps, best_stats.qber
    );
    m.args =
        json!({ "sweep": true, "t0_grid": a.t0_grid, "dt_grid": a.dt_grid, "block_s": block_s });

    let mut side = Vec::new();
    let bytes = match format {
        Format::Csv => {
            let mut out = String::from(SIFT_HEADER);
            for (i, &t0) in sweep.t0_grid.iter().enumerate() {
                for (j, &dt) in sweep.dt_grid.iter().enumerate() {
                    sift_row(&mut out, t0, dt, &sweep.stats[i][j], sweep.skr_map[i][j]);
                }
            }
            if let Some(path) = &g.out {
                for (suffix, map) in [
                    ("sikr", &sweep.sikr_map),
                    ("qber", &sweep.qber_map),
                    ("skr", &sweep.skr_map),
                ] {
                    side.push((
                        side_path(path, suffix),
                        map_csv(&sweep.t0_grid, &sweep.dt_grid, map),
                    ));
                }
            }
            out.into_bytes()
        }
        Format::Json => to_json(&json!({
            "t0_grid": sweep.t0_grid,
            "dt_grid": sweep.dt_grid,
            "sikr_map": sweep.sikr_map,
            "qber_map": sweep.qber_map,
            "skr_map": sweep.skr_map,
            "best": { "window": best, "stats": best_stats, "skr_bps": sweep.skr_map[bi][bj] },
        }))?,
    };
    emit(g, m, bytes, side)
}

// ---------------------------------------------------------------- curve

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalculatorArg {
    Bb84Finite,
    Bb84Asymptotic,
    Repeater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LeakArg {
    Efficiency,
    Binomial,
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    #[arg(value_enum)]
    pub calculator: CalculatorArg,
    /// Acquisition time per block, seconds (finite BB84).
    #[arg(long)]
    pub ts: Option<f64>,
    /// Loss grid, start:stop:step in dB.
    #[arg(long, default_value = "0:35:0.5")]
    pub loss_range: String,
    /// Evaluate a single loss point; a zero rate then exits with status 4.
    #[arg(long, conflicts_with = "loss_range")]
    pub loss: Option<f64>,
    /// Memory coherence time for the repeater (e.g. 10ms, 1s, inf).
    #[arg(long)]
    pub t2: Option<String>,
    /// Error-correction leak model for finite BB84.
    #[arg(long, value_enum, default_value = "efficiency")]
    pub leak: LeakArg,
}

pub fn curve(g: &GlobalArgs, a: &CurveArgs) -> Result<()> {
    let mut s = setup(g)?;
    if let Some(ts) = a.ts {
        if !(ts > 0.0) {
            return Err(fail(Failure::Usage, format!("--ts must be > 0, got {ts}")));
        }
        s.inst = s.inst.with_block_time(ts);
    }
    if let Some(t2) = &a.t2 {
        s.repeater = s.repeater.with_t2(parse_seconds(t2)?);
        s.repeater.validate()?;
    }
    let calc = match a.calculator {
        CalculatorArg::Bb84Finite => Calculator::Bb84Finite {
            options: BB84Options {
                leak: match a.leak {
                    LeakArg::Efficiency => LeakModel::Efficiency,
                    LeakArg::Binomial => LeakModel::Binomial,
                },
                ..BB84Options::default()
            },
        },
        CalculatorArg::Bb84Asymptotic => Calculator::Bb84Asymptotic,
        CalculatorArg::Repeater => Calculator::Repeater { params: s.repeater },
    };
    let losses = match a.loss {
        Some(l) => vec![l],
        None => {
            let (lo, hi, step) = parse_range(&a.loss_range)?;
            loss_grid(lo, hi, step)?
        }
    };
    let curve = build_curve(&calc, &s.inst, &g.preset, &losses)?;
    if a.loss.is_some() && !curve.points[0].feasible() {
        return Err(fail(
            Failure::Infeasible,
            format!("no positive key rate at {} dB", losses[0]),
        ));
    }
    match curve.max_tolerable_loss() {
        Some(l) => eprintln!("{}: positive rate up to {l} dB", calc.id()),
        None => eprintln!("{}: no positive rate on the grid", calc.id()),
    }

    let bytes = match g.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            curve.write_csv(&mut buf, s.inst.channel.db_per_km)?;
            buf
        }
        Format::Json => to_json(&curve)?,
    };
    let args = json!({
        "calculator": calc.id(),
        "t_s": s.inst.t_s,
        "losses": a.loss.map(|l| l.to_string()).unwrap_or_else(|| a.loss_range.clone()),
        "t2_s": s.repeater.t2_s.to_string(),
        "leak": format!("{:?}", a.leak),
    });
    let mut m = RunManifest::new("curve", &g.preset, &g.params, None, args);
    m.inputs = s.inputs;
    emit(g, m, bytes, Vec::new())
}

// ---------------------------------------------------------------- compare

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Reference curve CSV.
    pub curve_a: PathBuf,
    /// Challenger curve CSV (e.g. a repeater curve); the crossover is where it
    /// first overtakes the reference in bits per second.
    pub curve_b: PathBuf,
}

fn read_curve(path: &Path) -> Result<(RateCurve, FileDigest)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let meta = CurveMeta {
        calculator: String::new(),
        preset: String::new(),
        t_s: 0.0,
    };
    let curve = RateCurve::read_csv(bytes.as_slice(), meta)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok((curve, FileDigest::of(path, &bytes)))
}

pub fn compare(g: &GlobalArgs, a: &CompareArgs) -> Result<()> {
    if g.format == Some(Format::Csv) {
        return Err(fail(Failure::Usage, "compare writes a JSON report"));
    }
    let (ca, da) = read_curve(&a.curve_a)?;
    let (cb, db) = read_curve(&a.curve_b)?;

    // Losses present in both curves, matched to 1e-9 dB.
    let mut shared = Vec::new();
    for pa in &ca.points {
        if let Some(pb) = cb
            .points
            .iter()
            .find(|p| (p.loss_db - pa.loss_db).abs() < 1e-9)
        {
            shared.push((pa.loss_db, pa.rate_bps, pb.rate_bps));
        }
    }
    if shared.len() < 2 {
        return Err(fail(
            Failure::Input,
            format!("curves share {} loss points; need at least 2", shared.len()),
        ));
    }
    let losses: Vec<f64> = shared.iter().map(|s| s.0).collect();
    let ra: Vec<f64> = shared.iter().map(|s| s.1).collect();
    let rb: Vec<f64> = shared.iter().map(|s| s.2).collect();
    let cross = crossover(&losses, &ra, &rb);
    let ratios: Vec<Value> = shared
        .iter()
        .filter(|s| (s.0 / 5.0 - (s.0 / 5.0).round()).abs() < 1e-9)
        .map(|&(l, x, y)| json!({ "loss_db": l, "rate_a_bps": x, "rate_b_bps": y, "ratio_b_over_a": (x > 0.0).then(|| y / x) }))
        .collect();
    let report = json!({
        "curve_a": a.curve_a.display().to_string(),
        "curve_b": a.curve_b.display().to_string(),
        "shared_points": shared.len(),
        "crossover_db": cross.crossover_db,
        "max_tolerable_loss_db": { "a": ca.max_tolerable_loss(), "b": cb.max_tolerable_loss() },
        "rate_ratios": ratios,
    });
    match cross.crossover_db {
        Some(x) => eprintln!("curve b overtakes curve a at {x:.3} dB"),
        None => eprintln!("no crossover on the shared grid"),
    }
    let mut m = RunManifest::new("compare", "", &[], None, Value::Null);
    m.inputs = vec![da, db];
    emit(g, m, to_json(&report)?, Vec::new())
}

// ---------------------------------------------------------------- g2 / lifetime

#[derive(Args, Debug)]
pub struct G2Args {
    pub tags: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub bin_ps: u64,
    /// Half-width of the delay span, ns.
    #[arg(long, default_value_t = 100.0)]
    pub span_ns: f64,
}

pub fn g2(g: &GlobalArgs, a: &G2Args) -> Result<()> {
    let s = setup(g)?;
    let (stream, digest) = read_tags(&a.tags, &s.inst)?;
    let hist = g2_histogram(&stream, a.bin_ps, a.span_ns)?;
    eprintln!(
        "g2(0) = {} (zero-delay peak {}, {} side peaks)",
        hist.g2_zero,
        hist.zero_peak,
        hist.side_peaks.len()
    );
    let bytes = match g.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = String::from("delay_ps,count\n");
            for (d, c) in hist.delays_ps.iter().zip(&hist.counts) {
                let _ = writeln!(out, "{d},{c}");
            }
            out.into_bytes()
        }
        Format::Json => to_json(&hist)?,
    };
    let mut m = RunManifest::new(
        "g2",
        &g.preset,
        &g.params,
        None,
        json!({ "bin_ps": a.bin_ps, "span_ns": a.span_ns }),
    );
    m.inputs = s.inputs;
    m.inputs.push(digest);
    emit(g, m, bytes, Vec::new())
}

#[derive(Args, Debug)]
pub struct LifetimeArgs {
    pub tags: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub bin_ps: u64,
    /// Gap between the histogram peak and the first fitted bin, ns.
    #[arg(long, default_value_t = 0.5)]
    pub start_after_peak_ns: f64,
}

pub fn lifetime(g: &GlobalArgs, a: &LifetimeArgs) -> Result<()> {
    let s = setup(g)?;
    let (stream, digest) = read_tags(&a.tags, &s.inst)?;
    let opts = LifetimeFitOptions {
        bin_ps: a.bin_ps,
        start_after_peak_ns: a.start_after_peak_ns,
        ..LifetimeFitOptions::default()
    };
    let fit = fit_lifetime_with(&stream, &opts)?;
    eprintln!("tau = {} ns from {} events", fit.tau_ns, fit.events);
    let bytes = match g.format.unwrap_or(Format::Csv) {
        Format::Csv => format!(
            "tau_ns,residual,events,fit_start_ns,fit_end_ns\n{},{},{},{},{}\n",
            fit.tau_ns, fit.residual, fit.events, fit.fit_start_ns, fit.fit_end_ns
        )
        .into_bytes(),
        Format::Json => to_json(&fit)?,
    };
    let args = json!({ "bin_ps": a.bin_ps, "start_after_peak_ns": a.start_after_peak_ns });
    let mut m = RunManifest::new("lifetime", &g.preset, &g.params, None, args);
    m.inputs = s.inputs;
    m.inputs.push(digest);
    emit(g, m, bytes, Vec::new())
}
