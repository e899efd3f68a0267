//! Asymptotic BB84 key rate with a multi-photon fraction, in the limit of
//! perfect error correction and a vanishing test basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkit::h;
use crate::model::{expected_qber, p_click, p_multiphoton, ProtocolInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticResult {
    pub rate_per_pulse: f64,
    pub rate_bps: f64,
    /// Fraction of detections guaranteed not to come from multi-photon pulses.
    pub delta: f64,
    pub q: f64,
    pub p_clk: f64,
}

/// S∞ = P_clk·[Δ(1 − h(Q/Δ)) − h(Q)], clamped at 0.
///
/// The meaningful region is Q/Δ ≤ 0.5; beyond it h is still evaluated
/// (it is symmetric) and the rate clamps to zero in practice.
pub fn asymptotic_rate(inst: &ProtocolInstance) -> Result<AsymptoticResult> {
    let p_clk = p_click(inst)?;
    if p_clk <= 0.0 {
        return Err(Error::ZeroClickProbability);
    }
    let q = expected_qber(inst)?;
    let delta = ((p_clk - p_multiphoton(inst)) / p_clk).clamp(0.0, 1.0);

    let rate = if delta <= 0.0 || q / delta > 1.0 {
        0.0
    } else {
        (p_clk * (delta * (1.0 - h(q / delta)) - h(q))).max(0.0)
    };
    Ok(AsymptoticResult {
        rate_per_pulse: rate,
        rate_bps: rate * inst.source.clock_rate_hz,
        delta,
        q,
        p_clk,
    })
}
