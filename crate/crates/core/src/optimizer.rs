//! Rate-versus-loss curves with the basis bias p_x and Alice's
//! pre-attenuation η_tr optimized independently at every loss.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::asymptotic_rate;
use crate::bb84::{finite_key, BB84Options};
use crate::error::{invalid, Error, Result};
use crate::model::ProtocolInstance;
use crate::repeater::{optimize_placement, RepeaterParams};

const GRID_POINTS: usize = 60;
const ETA_MIN: f64 = 1e-4;
const P_X_MAX: f64 = 1.0 - 1e-5;
const REL_TOL: f64 = 1e-4;
const LINE_TOL: f64 = 1e-6;
const MAX_SWEEPS: usize = 50;
const STARTS: [f64; 3] = [1.0, 0.1, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Calculator {
    Bb84Finite { options: BB84Options },
    Bb84Asymptotic,
    Repeater { params: RepeaterParams },
}

impl Calculator {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Bb84Finite { .. } => "bb84-finite",
            Self::Bb84Asymptotic => "bb84-asymptotic",
            Self::Repeater { .. } => "repeater",
        }
    }

    pub fn finite() -> Self {
        Self::Bb84Finite {
            options: BB84Options::default(),
        }
    }
}

/// Optimal operating point at one loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOptimum {
    pub loss_db: f64,
    pub rate_per_pulse: f64,
    pub rate_bps: f64,
    /// `None` when no positive rate exists or the calculator has no such knob.
    pub p_x: Option<f64>,
    pub eta_tr: Option<f64>,
    pub node_frac_to_alice: Option<f64>,
}

impl PointOptimum {
    pub fn feasible(&self) -> bool {
        self.rate_per_pulse > 0.0
    }
}

/// Rate per pulse at a given (p_x, η_tr); infeasible points give 0.
pub fn rate_at(calc: &Calculator, inst: &ProtocolInstance, p_x: f64, eta_tr: f64) -> Result<f64> {
    match calc {
        Calculator::Bb84Finite { options } => {
            Ok(finite_key(&inst.with_choice(p_x, eta_tr), options)?.rate_per_pulse)
        }
        Calculator::Bb84Asymptotic => match asymptotic_rate(&inst.with_choice(0.5, eta_tr)) {
            Ok(r) => Ok(r.rate_per_pulse),
            Err(Error::ZeroClickProbability) => Ok(0.0),
            Err(e) => Err(e),
        },
        Calculator::Repeater { .. } => {
            Err(invalid("calculator", "repeater has no (p_x, eta_tr) knobs"))
        }
    }
}

fn eta_grid() -> Vec<f64> {
    let lmin = ETA_MIN.log10();
    let mut g: Vec<f64> = (0..GRID_POINTS)
        .map(|i| 10f64.powf(lmin * (1.0 - i as f64 / (GRID_POINTS - 1) as f64)))
        .collect();
    *g.last_mut().unwrap() = 1.0;
    g
}

/// p_x = 1 − 10^(−u), u from log10(2) (p_x = 0.5) to 5.
fn px_of(u: f64) -> f64 {
    1.0 - 10f64.powf(-u)
}

fn u_of(p_x: f64) -> f64 {
    -(1.0 - p_x).log10()
}

fn u_bounds() -> (f64, f64) {
    (u_of(0.5), u_of(P_X_MAX))
}

fn px_grid() -> Vec<f64> {
    let (lo, hi) = u_bounds();
    let mut g: Vec<f64> = (0..GRID_POINTS)
        .map(|i| px_of(lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64))
        .collect();
    g[0] = 0.5;
    g
}

/// Golden-section maximization of `f` on [lo, hi], starting from a known
/// value at `x0`; returns the better of the refined point and `x0`.
fn line_max(
    f: &dyn Fn(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    x0: f64,
    f0: f64,
) -> Result<(f64, f64)> {
    const G: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - G * (b - a);
    let mut d = a + G * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > LINE_TOL * (1.0 + a.abs().max(b.abs())) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - G * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + G * (b - a);
            fd = f(d)?;
        }
    }
    let (x, fx) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok(if fx > f0 { (x, fx) } else { (x0, f0) })
}

/// Coordinate descent in (log10 η_tr, u) from a starting point, each line
/// search bracketed to two grid cells either side of the incumbent.
fn refine(
    calc: &Calculator,
    inst: &ProtocolInstance,
    mut le: f64,
    mut u: f64,
    fixed_px: bool,
) -> Result<(f64, f64, f64)> {
    let (umin, umax) = u_bounds();
    let lmin = ETA_MIN.log10();
    let le_cell = -lmin / (GRID_POINTS - 1) as f64;
    let u_cell = (umax - umin) / (GRID_POINTS - 1) as f64;
    let mut best = rate_at(calc, inst, px_of(u), 10f64.powf(le))?;

    for _ in 0..MAX_SWEEPS {
        let before = best;
        let along_eta = |x: f64| rate_at(calc, inst, px_of(u), 10f64.powf(x));
        let (nle, r) = line_max(
            &along_eta,
            (le - 2.0 * le_cell).max(lmin),
            (le + 2.0 * le_cell).min(0.0),
            le,
            best,
        )?;
        le = nle;
        best = r;
        if !fixed_px {
            let along_px = |x: f64| rate_at(calc, inst, px_of(x), 10f64.powf(le));
            let (nu, r) = line_max(
                &along_px,
                (u - 2.0 * u_cell).max(umin),
                (u + 2.0 * u_cell).min(umax),
                u,
                best,
            )?;
            u = nu;
            best = r;
        }
        if best <= 0.0 || best - before <= REL_TOL * best {
            break;
        }
    }
    Ok((best, le, u))
}

/// Optimal (p_x, η_tr) at one loss: full grid scan, then multi-start
/// coordinate descent from the grid optimum and from η_tr ∈ {1, 0.1, 0.01}.
pub fn optimize_point(
    calc: &Calculator,
    inst: &ProtocolInstance,
    loss_db: f64,
) -> Result<PointOptimum> {
    let inst = inst.with_loss(loss_db);
    if let Calculator::Repeater { params } = calc {
        let opt = optimize_placement(params, loss_db)?;
        let feasible = opt.rate.rate_per_use > 0.0;
        return Ok(PointOptimum {
            loss_db,
            rate_per_pulse: opt.rate.rate_per_use,
            rate_bps: opt.rate.rate_bps,
            p_x: None,
            eta_tr: None,
            node_frac_to_alice: feasible.then_some(opt.placement.frac_to_alice),
        });
    }
    let fixed_px = matches!(calc, Calculator::Bb84Asymptotic);
    let etas = eta_grid();
    let pxs = if fixed_px { vec![0.5] } else { px_grid() };

    // (rate, log10 η, u); ties keep the earlier grid entry.
    let mut best = (f64::NEG_INFINITY, 0.0, u_of(0.5));
    for &eta in &etas {
        for &px in &pxs {
            let r = rate_at(calc, &inst, px, eta)?;
            if r > best.0 {
                best = (r, eta.log10(), u_of(px));
            }
        }
    }
    let mut seeds = vec![(best.1, best.2)];
    seeds.extend(STARTS.iter().map(|s| (s.log10(), best.2)));

    let mut winner = (best.0, best.1, best.2);
    for (le, u) in seeds {
        let cand = refine(calc, &inst, le, u, fixed_px)?;
        if cand.0 > winner.0 {
            winner = cand;
        }
    }

    let (rate, le, u) = winner;
    let rate = rate.max(0.0);
    let feasible = rate > 0.0;
    Ok(PointOptimum {
        loss_db,
        rate_per_pulse: rate,
        rate_bps: rate * inst.source.clock_rate_hz,
        p_x: feasible.then(|| if fixed_px { 1.0 } else { px_of(u) }),
        eta_tr: feasible.then(|| 10f64.powf(le)),
        node_frac_to_alice: None,
    })
}

/// Evenly spaced loss grid, endpoints included.
pub fn loss_grid(start_db: f64, stop_db: f64, step_db: f64) -> Result<Vec<f64>> {
    if !(step_db > 0.0 && start_db >= 0.0 && stop_db >= start_db && stop_db.is_finite()) {
        return Err(invalid(
            "loss_range",
            format!("bad range {start_db}:{stop_db}:{step_db}"),
        ));
    }
    let n = ((stop_db - start_db) / step_db + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start_db + step_db * i as f64) * 1e9).round() / 1e9)
        .collect())
}

pub fn default_loss_grid() -> Vec<f64> {
    loss_grid(0.0, 35.0, 0.5).expect("static range")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub calculator: String,
    pub preset: String,
    pub t_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<PointOptimum>,
    pub meta: CurveMeta,
}

pub const CURVE_COLUMNS: [&str; 8] = [
    "loss_db",
    "distance_km",
    "rate_per_pulse",
    "rate_bps",
    "p_x_opt",
    "eta_tr_opt",
    "feasible",
    "node_frac_to_alice",
];

impl RateCurve {
    pub fn loss_grid_db(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.loss_db).collect()
    }

    pub fn rates_per_pulse(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate_per_pulse).collect()
    }

    pub fn rates_bps(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate_bps).collect()
    }

    /// Largest grid loss with a positive rate.
    pub fn max_tolerable_loss(&self) -> Option<f64> {
        self.points
            .iter()
            .rev()
            .find(|p| p.feasible())
            .map(|p| p.loss_db)
    }

    /// Writes the curve as CSV. Floats use Rust's shortest round-trip
    /// formatting so output is byte-stable.
    pub fn write_csv<W: Write>(&self, out: W, db_per_km: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CURVE_COLUMNS)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.points {
            w.write_record([
                p.loss_db.to_string(),
                (p.loss_db / db_per_km).to_string(),
                p.rate_per_pulse.to_string(),
                p.rate_bps.to_string(),
                opt(p.p_x),
                opt(p.eta_tr),
                p.feasible().to_string(),
                opt(p.node_frac_to_alice),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a curve CSV. The trailing placement column is optional.
    pub fn read_csv<R: Read>(input: R, meta: CurveMeta) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Format {
                    offset: 0,
                    reason: format!("missing column `{name}`"),
                })
        };
        let (i_loss, i_pp, i_bps, i_px, i_eta) = (
            col("loss_db")?,
            col("rate_per_pulse")?,
            col("rate_bps")?,
            col("p_x_opt")?,
            col("eta_tr_opt")?,
        );
        let i_node = headers.iter().position(|h| h == "node_frac_to_alice");
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| Error::Format {
                        offset,
                        reason: format!("column {i}: {e}"),
                    })
            };
            let opt = |i: usize| -> Result<Option<f64>> {
                match rec.get(i).unwrap_or("") {
                    "" => Ok(None),
                    _ => num(i).map(Some),
                }
            };
            points.push(PointOptimum {
                loss_db: num(i_loss)?,
                rate_per_pulse: num(i_pp)?,
                rate_bps: num(i_bps)?,
                p_x: opt(i_px)?,
                eta_tr: opt(i_eta)?,
                node_frac_to_alice: match i_node {
                    Some(i) => opt(i)?,
                    None => None,
                },
            });
        }
        Ok(Self { points, meta })
    }
}

/// Optimizes every loss point in parallel; the result does not depend on
/// the thread count.
pub fn build_curve(
    calc: &Calculator,
    inst: &ProtocolInstance,
    preset_id: &str,
    losses: &[f64],
) -> Result<RateCurve> {
    let points = losses
        .par_iter()
        .map(|&l| optimize_point(calc, inst, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateCurve {
        points,
        meta: CurveMeta {
            calculator: calc.id().to_string(),
            preset: preset_id.to_string(),
            t_s: inst.t_s,
        },
    })
}

/// Rate at fixed (p_x, η_tr) on every loss point, for comparing against
/// the optimized curve.
pub fn fixed_choice_curve(
    calc: &Calculator,
    inst: &ProtocolInstance,
    p_x: f64,
    eta_tr: f64,
    losses: &[f64],
) -> Result<Vec<f64>> {
    losses
        .par_iter()
        .map(|&l| rate_at(calc, &inst.with_loss(l), p_x, eta_tr))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::preset;

    #[test]
    fn grids_cover_required_points() {
        let e = eta_grid();
        assert!(e.len() >= 50);
        assert_eq!(*e.last().unwrap(), 1.0);
        assert!((e[0] - ETA_MIN).abs() < 1e-15);
        let p = px_grid();
        assert!(p.len() >= 50);
        assert_eq!(p[0], 0.5);
        assert!((p.last().unwrap() - P_X_MAX).abs() < 1e-12);
    }

    #[test]
    fn pure_source_keeps_full_intensity() {
        let mut inst = preset("baseline").unwrap();
        inst.source.g2_zero = 0.0;
        inst.receiver.p_dc = 0.0;
        let o = optimize_point(&Calculator::Bb84Asymptotic, &inst, 10.0).unwrap();
        assert_eq!(o.eta_tr, Some(1.0));
        assert_eq!(o.p_x, Some(1.0));
    }

    #[test]
    fn baseline_asymptotic_attenuates_at_22db() {
        let inst = preset("baseline").unwrap();
        let o = optimize_point(&Calculator::Bb84Asymptotic, &inst, 22.0).unwrap();
        let eta = o.eta_tr.unwrap();
        assert!(eta < 1.0);
        // Exhaustive 1000-point oracle: the interior optimum beats the boundary.
        let at_loss = inst.with_loss(22.0);
        let boundary = rate_at(&Calculator::Bb84Asymptotic, &at_loss, 0.5, 1.0).unwrap();
        let grid_best = (0..1000)
            .map(|i| 10f64.powf(-4.0 * (1.0 - i as f64 / 999.0)))
            .map(|e| rate_at(&Calculator::Bb84Asymptotic, &at_loss, 0.5, e).unwrap())
            .fold(0.0, f64::max);
        assert!(grid_best > boundary);
        assert!(o.rate_per_pulse >= grid_best * (1.0 - 1e-4));
    }

    #[test]
    fn large_blocks_bias_key_basis() {
        let inst = preset("baseline").unwrap().with_block_time(100.0);
        let o = optimize_point(&Calculator::finite(), &inst, 10.0).unwrap();
        assert!(o.p_x.unwrap() > 0.5);
    }

    #[test]
    fn loss_grid_includes_endpoints() {
        let g = default_loss_grid();
        assert_eq!(g.len(), 71);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 35.0);
        assert!(loss_grid(5.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let inst = preset("baseline").unwrap();
        let curve =
            build_curve(&Calculator::Bb84Asymptotic, &inst, "baseline", &[0.0, 30.0]).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf, 0.2).unwrap();
        let back = RateCurve::read_csv(buf.as_slice(), curve.meta.clone()).unwrap();
        assert_eq!(back, curve);
    }
}
