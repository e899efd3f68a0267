//! Single-node memory-assisted QKD.
//!
//! A middle node holds two quantum memories. QM-A repeatedly tries to
//! entangle with a photon sent towards Alice; once heralded it waits while
//! QM-B tries towards Bob, dephasing all the while. A Bell-state
//! measurement then joins the two links. Each attempt succeeds with
//! probability η_p·η_c·η_d·10^(−loss/10), and the number of attempts is
//! geometric.
//!
//! With N attempts on Bob's side, each of duration τ_B, QM-A's coherence
//! decays by e^(−N·τ_B/T₂); averaged over the geometric distribution this is
//! E = p_B·x / (1 − (1 − p_B)·x) with x = e^(−τ_B/T₂). The resulting phase
//! flip probability (1 − E)/2 enters the X-basis error only.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mathkit::h;

const LOG10_E: f64 = std::f64::consts::LOG10_E;
const GOLDEN: f64 = 0.618_033_988_749_894_8;
const PLACEMENT_SCAN: usize = 101;
pub const PLACEMENT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeaterParams {
    pub eta_p: f64,
    /// Preparation time per attempt, seconds.
    pub t_p: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub lambda_bsm: f64,
    pub eta_bsm: f64,
    pub f: f64,
    pub e_ma: f64,
    pub e_mb: f64,
    pub t2_s: f64,
    pub l_att_km: f64,
    /// Fraction of the heralding round trip 2L/v that adds to each attempt.
    /// Zero models fully pipelined attempts, one a blocking round trip.
    pub herald_latency_scale: f64,
    /// Signal speed in fibre, m/s.
    pub fiber_speed_m_s: f64,
    /// Photon-memory pairs multiplexed per attempt.
    pub m: u32,
}

impl Default for RepeaterParams {
    fn default() -> Self {
        Self {
            eta_p: 0.7,
            t_p: 1e-6,
            eta_c: 0.7,
            eta_d: 0.7,
            lambda_bsm: 1.0,
            eta_bsm: 0.175,
            f: 1.16,
            e_ma: 1e-2,
            e_mb: 1e-2,
            t2_s: 10e-3,
            l_att_km: 22.0,
            herald_latency_scale: 0.07,
            fiber_speed_m_s: 2e8,
            m: 1,
        }
    }
}

impl RepeaterParams {
    pub fn with_t2(mut self, t2_s: f64) -> Self {
        self.t2_s = t2_s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_p", self.eta_p),
            ("eta_c", self.eta_c),
            ("eta_d", self.eta_d),
            ("lambda_bsm", self.lambda_bsm),
            ("eta_bsm", self.eta_bsm),
            ("e_ma", self.e_ma),
            ("e_mb", self.e_mb),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("must lie in [0,1], got {v}")));
            }
        }
        for (name, v) in [
            ("t_p", self.t_p),
            ("l_att_km", self.l_att_km),
            ("fiber_speed_m_s", self.fiber_speed_m_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        // T₂ may be +∞ (ideal memory) but not zero or negative.
        if !(self.t2_s > 0.0) {
            return Err(invalid("t2_s", format!("must be > 0, got {}", self.t2_s)));
        }
        if !(self.herald_latency_scale >= 0.0) {
            return Err(invalid("herald_latency_scale", "must be >= 0"));
        }
        if self.f < 1.0 {
            return Err(invalid("f", format!("must be >= 1, got {}", self.f)));
        }
        if self.m == 0 {
            return Err(invalid("m", "at least one pair per attempt"));
        }
        Ok(())
    }

    fn segment_km(&self, loss_db: f64) -> f64 {
        loss_db * self.l_att_km / (10.0 * LOG10_E)
    }

    fn attempt_success(&self, loss_db: f64) -> f64 {
        let single = self.eta_p * self.eta_c * self.eta_d * 10f64.powf(-loss_db / 10.0);
        if self.m == 1 {
            single
        } else {
            1.0 - (1.0 - single).powi(self.m as i32)
        }
    }

    fn attempt_time(&self, loss_db: f64) -> f64 {
        let round_trip = 2.0 * self.segment_km(loss_db) * 1e3 / self.fiber_speed_m_s;
        self.t_p + self.herald_latency_scale * round_trip
    }
}

/// Fraction of the total loss on the Alice–node segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePlacement {
    pub frac_to_alice: f64,
}

impl NodePlacement {
    pub const MIDPOINT: Self = Self { frac_to_alice: 0.5 };

    pub fn new(frac_to_alice: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&frac_to_alice) {
            return Err(invalid(
                "frac_to_alice",
                format!("must lie in [0,1], got {frac_to_alice}"),
            ));
        }
        Ok(Self { frac_to_alice })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeaterRate {
    /// Secret bits per channel use (per attempt pair slot).
    pub rate_per_use: f64,
    pub rate_bps: f64,
    pub qber_z: f64,
    pub qber_x: f64,
}

fn flip(a: f64, b: f64) -> f64 {
    a * (1.0 - b) + b * (1.0 - a)
}

pub fn ma_qkd_rate(
    params: &RepeaterParams,
    total_loss_db: f64,
    placement: NodePlacement,
) -> Result<RepeaterRate> {
    params.validate()?;
    if !(total_loss_db >= 0.0) {
        return Err(invalid(
            "loss_db",
            format!("must be >= 0, got {total_loss_db}"),
        ));
    }
    let loss_a = placement.frac_to_alice * total_loss_db;
    let loss_b = total_loss_db - loss_a;
    let (p_a, p_b) = (
        params.attempt_success(loss_a),
        params.attempt_success(loss_b),
    );
    let (tau_a, tau_b) = (params.attempt_time(loss_a), params.attempt_time(loss_b));

    let x = (-tau_b / params.t2_s).exp();
    let coherence = p_b * x / (1.0 - (1.0 - p_b) * x);
    let dephasing = (1.0 - coherence) / 2.0;

    let lam = params.lambda_bsm;
    let misalign = flip(params.e_ma, params.e_mb);
    let qber_z = lam * misalign + (1.0 - lam) / 2.0;
    let qber_x = lam * flip(misalign, dephasing) + (1.0 - lam) / 2.0;

    let fraction = (1.0 - h(qber_x) - params.f * h(qber_z)).max(0.0);
    let per_key = params.eta_bsm * fraction;
    let (uses, seconds) = if p_a > 0.0 && p_b > 0.0 {
        (1.0 / p_a + 1.0 / p_b, tau_a / p_a + tau_b / p_b)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(RepeaterRate {
        rate_per_use: per_key / uses,
        rate_bps: per_key / seconds,
        qber_z,
        qber_x,
    })
}

/// Point-to-point transmission with the same photon source and detector:
/// one attempt per use, success η_p·η_c·η_d·η_Ch, and the misalignment
/// error of one link. This is the reference slope for the repeater.
pub fn direct_rate_per_use(params: &RepeaterParams, loss_db: f64) -> f64 {
    let p = params.eta_p * params.eta_c * params.eta_d * 10f64.powf(-loss_db / 10.0);
    (p * (1.0 - (1.0 + params.f) * h(params.e_ma))).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementOptimum {
    pub placement: NodePlacement,
    pub rate: RepeaterRate,
}

/// Maximizes the per-use rate over the node position: a 101-point pre-scan
/// brackets the peak, golden-section search refines it to 1e-4.
pub fn optimize_placement(params: &RepeaterParams, total_loss_db: f64) -> Result<PlacementOptimum> {
    let eval = |frac: f64| -> Result<f64> {
        Ok(ma_qkd_rate(
            params,
            total_loss_db,
            NodePlacement {
                frac_to_alice: frac,
            },
        )?
        .rate_per_use)
    };
    let step = 1.0 / (PLACEMENT_SCAN - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..PLACEMENT_SCAN {
        let r = eval(i as f64 * step)?;
        // Ties resolve to the point nearest the midpoint.
        let closer = (i as f64 * step - 0.5).abs() < (best.0 as f64 * step - 0.5).abs();
        if r > best.1 || (r == best.1 && closer) {
            best = (i, r);
        }
    }

    let frac = if best.1 <= 0.0 {
        0.5
    } else {
        let mut lo = (best.0 as f64 - 1.0).max(0.0) * step;
        let mut hi = (best.0 as f64 + 1.0).min((PLACEMENT_SCAN - 1) as f64) * step;
        let mut c = hi - GOLDEN * (hi - lo);
        let mut d = lo + GOLDEN * (hi - lo);
        let (mut fc, mut fd) = (eval(c)?, eval(d)?);
        while hi - lo > PLACEMENT_TOL {
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - GOLDEN * (hi - lo);
                fc = eval(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + GOLDEN * (hi - lo);
                fd = eval(d)?;
            }
        }
        let mid = 0.5 * (lo + hi);
        let scanned = best.0 as f64 * step;
        if eval(mid)? >= best.1 {
            mid
        } else {
            scanned
        }
    };
    let placement = NodePlacement {
        frac_to_alice: frac,
    };
    Ok(PlacementOptimum {
        placement,
        rate: ma_qkd_rate(params, total_loss_db, placement)?,
    })
}

/// Local log-rate slope of the placement-optimized repeater relative to the
/// direct link, on consecutive loss pairs: ≈ 0.5 while memory dephasing is
/// negligible, approaching 1 once it dominates.
pub fn slope_ratios(params: &RepeaterParams, losses: &[f64]) -> Result<Vec<(f64, f64)>> {
    let rates = losses
        .iter()
        .map(|&l| optimize_placement(params, l).map(|o| o.rate.rate_per_use))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses
        .windows(2)
        .zip(rates.windows(2))
        .filter(|(_, r)| r[0] > 0.0 && r[1] > 0.0)
        .map(|(l, r)| {
            let direct =
                (direct_rate_per_use(params, l[1]) / direct_rate_per_use(params, l[0])).ln();
            (0.5 * (l[0] + l[1]), (r[1] / r[0]).ln() / direct)
        })
        .collect())
}

/// Loss at which the repeater's scaling turns over: the first point where
/// the slope ratio reaches 0.75, midway between the square-root and the
/// direct-link regimes, linearly interpolated.
pub fn scaling_transition(params: &RepeaterParams, losses: &[f64]) -> Result<Option<f64>> {
    const MIDWAY: f64 = 0.75;
    let ratios = slope_ratios(params, losses)?;
    for (i, &(l, s)) in ratios.iter().enumerate() {
        if s >= MIDWAY {
            return Ok(Some(match i {
                0 => l,
                _ => {
                    let (l0, s0) = ratios[i - 1];
                    l0 + (l - l0) * (MIDWAY - s0) / (s - s0)
                }
            }));
        }
    }
    Ok(None)
}

/// Outcome of intersecting a repeater curve with a point-to-point curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// Smallest loss at which the repeater beats the reference, linearly
    /// interpolated in log-rate between grid points. `None` if it never does.
    pub crossover_db: Option<f64>,
    /// Largest grid loss with a positive repeater rate.
    pub repeater_limit_db: Option<f64>,
}

/// Finds where `repeater` first exceeds `reference` on a shared loss grid.
pub fn crossover(loss_db: &[f64], reference: &[f64], repeater: &[f64]) -> Crossover {
    assert_eq!(loss_db.len(), reference.len());
    assert_eq!(loss_db.len(), repeater.len());
    let ahead = |i: usize| repeater[i] > reference[i];
    let mut crossover_db = None;
    for i in 0..loss_db.len() {
        if ahead(i) {
            crossover_db = Some(if i == 0 {
                loss_db[0]
            } else {
                interpolate_crossing(
                    (loss_db[i - 1], reference[i - 1], repeater[i - 1]),
                    (loss_db[i], reference[i], repeater[i]),
                )
            });
            break;
        }
    }
    let repeater_limit_db = (0..loss_db.len())
        .rev()
        .find(|&i| repeater[i] > 0.0)
        .map(|i| loss_db[i]);
    Crossover {
        crossover_db,
        repeater_limit_db,
    }
}

fn interpolate_crossing(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (x0, r0, p0) = a;
    let (x1, r1, p1) = b;
    if r0 > 0.0 && r1 > 0.0 && p0 > 0.0 && p1 > 0.0 {
        // Difference of log-rates is linear-ish between grid points.
        let d0 = p0.ln() - r0.ln();
        let d1 = p1.ln() - r1.ln();
        if d1 != d0 {
            return x0 + (x1 - x0) * (-d0) / (d1 - d0);
        }
    }
    x1
}
