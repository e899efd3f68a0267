//! Finite-key BB84 without decoy states: multiplicative Chernoff bound on
//! multi-photon detections and γᵁ inflation of the phase-error rate.

use serde::{Deserialize, Serialize};

use crate::b92::leak_ec;
use crate::error::{Error, Result};
use crate::mathkit::{chernoff_upper, clamp_lambda, gamma_upper, h, LAMBDA_MIN};
use crate::model::{
    p_click, p_error_bb84, p_multiphoton, DarkErrorTerm, ProtocolInstance, SecurityParams,
};

/// Error-reconciliation leak model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakModel {
    /// f_EC·N_R^X·h(Q).
    #[default]
    Efficiency,
    /// Binomial-quantile bound, as used for B92.
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BB84Options {
    pub dark_term: DarkErrorTerm,
    pub leak: LeakModel,
    /// Round expected counts conservatively to integers: detections down,
    /// errors up.
    pub floor_counts: bool,
    pub lambda_min: f64,
}

impl Default for BB84Options {
    fn default() -> Self {
        Self {
            dark_term: DarkErrorTerm::default(),
            leak: LeakModel::default(),
            floor_counts: false,
            lambda_min: LAMBDA_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BB84Counts {
    pub n_s: f64,
    pub n_r_x: f64,
    pub n_r_z: f64,
    pub m_x: f64,
    pub m_z: f64,
    /// Chernoff upper bounds on multi-photon detections in each basis.
    pub n_mp_x: f64,
    pub n_mp_z: f64,
    pub n_nmp_x: f64,
    pub n_nmp_z: f64,
    pub phi_x: f64,
    pub phi_x_bar: f64,
    /// Bit error rate P_err/P_clk.
    pub qber: f64,
}

pub fn expected_counts(inst: &ProtocolInstance, opts: &BB84Options) -> Result<BB84Counts> {
    inst.validate()?;
    let sec = &inst.security;
    let down = |x: f64| if opts.floor_counts { x.floor() } else { x };
    let up = |x: f64| if opts.floor_counts { x.ceil() } else { x };

    let p_clk = p_click(inst)?;
    if p_clk <= 0.0 {
        return Err(Error::ZeroClickProbability);
    }
    let p_err = p_error_bb84(inst, opts.dark_term);
    let p_m = p_multiphoton(inst);
    let n_s = inst.n_sent();
    let (px2, pz2) = (inst.p_x * inst.p_x, inst.p_z() * inst.p_z());

    let n_r_x = down(n_s * px2 * p_clk);
    let n_r_z = down(n_s * pz2 * p_clk);
    let m_x = up(n_s * px2 * p_err);
    let m_z = up(n_s * pz2 * p_err);
    let n_mp_x = chernoff_upper(n_s * px2 * p_m, sec.eps_pe).upper();
    let n_mp_z = chernoff_upper(n_s * pz2 * p_m, sec.eps_pe).upper();
    let n_nmp_x = n_r_x - n_mp_x;
    let n_nmp_z = n_r_z - n_mp_z;
    if !(n_nmp_x > 0.0 && n_nmp_z > 0.0) {
        return Err(Error::Infeasible(format!(
            "multi-photon bound exceeds detections (X: {n_nmp_x:.3e}, Z: {n_nmp_z:.3e})"
        )));
    }

    let phi_x = m_z / n_nmp_z;
    let lam = clamp_lambda(phi_x, opts.lambda_min);
    let gamma = gamma_upper(n_r_z.max(1.0), n_r_x.max(1.0), lam, sec.eps_pa)
        .map_err(|e| Error::Infeasible(format!("phase-error inflation undefined: {e}")))?;

    Ok(BB84Counts {
        n_s,
        n_r_x,
        n_r_z,
        m_x,
        m_z,
        n_mp_x,
        n_mp_z,
        n_nmp_x,
        n_nmp_z,
        phi_x,
        phi_x_bar: phi_x + gamma,
        qber: p_err / p_clk,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BB84KeyResult {
    pub key_len_bits: f64,
    /// ℓ/N_S.
    pub rate_per_pulse: f64,
    /// False when the counts were infeasible; the key length is then 0.
    pub feasible: bool,
    pub clamped: bool,
}

impl BB84KeyResult {
    fn infeasible() -> Self {
        Self {
            key_len_bits: 0.0,
            rate_per_pulse: 0.0,
            feasible: false,
            clamped: true,
        }
    }
}

/// ℓ = N̲ˣ_nmp[1 − h(φ̄ˣ)] − L_EC − 2log₂(1/(2ε_PA)) − log₂(2/ε_cor), clamped at 0.
pub fn key_length_bb84(counts: &BB84Counts, sec: &SecurityParams, leak: LeakModel) -> Result<f64> {
    if counts.phi_x_bar >= 0.5 {
        return Ok(0.0);
    }
    let leak_bits = match leak {
        LeakModel::Efficiency => sec.f_ec * counts.n_r_x * h(counts.qber),
        LeakModel::Binomial => leak_ec(counts.n_r_x.max(1.0), counts.qber, sec.eps_cor)?,
    };
    let raw = counts.n_nmp_x * (1.0 - h(counts.phi_x_bar))
        - leak_bits
        - 2.0 * (1.0 / (2.0 * sec.eps_pa)).log2()
        - (2.0 / sec.eps_cor).log2();
    Ok(raw.max(0.0))
}

/// Full finite-key evaluation; infeasible counts give a zero key with
/// `feasible = false` instead of an error.
pub fn finite_key(inst: &ProtocolInstance, opts: &BB84Options) -> Result<BB84KeyResult> {
    let counts = match expected_counts(inst, opts) {
        Ok(c) => c,
        Err(Error::Infeasible(_)) | Err(Error::ZeroClickProbability) => {
            return Ok(BB84KeyResult::infeasible())
        }
        Err(e) => return Err(e),
    };
    let key = key_length_bb84(&counts, &inst.security, opts.leak)?;
    Ok(BB84KeyResult {
        key_len_bits: key,
        rate_per_pulse: key / counts.n_s,
        feasible: true,
        clamped: key == 0.0,
    })
}

/// Composed secrecy parameter ε_PA + ε_PE + ε_EC.
pub fn eps_sec(sec: &SecurityParams) -> f64 {
    sec.eps_pa + sec.eps_pe + sec.eps_ec
}
