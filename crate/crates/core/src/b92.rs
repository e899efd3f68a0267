//! B92 finite secure key length from sifted statistics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mathkit::{h, inv_binomial_cdf};
use crate::model::SecurityParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B92Input {
    /// Received (conclusive, sifted) key size N_R in one block.
    pub n_r: f64,
    pub qber: f64,
    /// Quality factor q = −log₂ c of the prepared states; 1 for ideal qubits.
    pub q_factor: f64,
    pub security: SecurityParams,
    /// Size of the block the reconciliation leak is evaluated on. `None`
    /// uses the X-arm half of the conclusive events, N_R/2.
    pub n_r_x: Option<f64>,
    /// Acquisition time of the block, in seconds.
    pub block_s: f64,
}

impl B92Input {
    pub fn new(n_r: f64, qber: f64, security: SecurityParams) -> Self {
        Self {
            n_r,
            qber,
            q_factor: 1.0,
            security,
            n_r_x: None,
            block_s: 1.0,
        }
    }

    pub fn leak_block(&self) -> f64 {
        self.n_r_x.unwrap_or(self.n_r / 2.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.n_r >= 1.0 && self.n_r.is_finite()) {
            return Err(invalid("n_r", format!("must be >= 1, got {}", self.n_r)));
        }
        if !(0.0..=1.0).contains(&self.qber) {
            return Err(Error::ProbabilityOutOfRange(self.qber));
        }
        if !(self.q_factor > 0.0 && self.q_factor <= 1.0) {
            return Err(invalid(
                "q_factor",
                format!("must lie in (0,1], got {}", self.q_factor),
            ));
        }
        if !(self.block_s > 0.0) {
            return Err(invalid("block_s", "must be > 0"));
        }
        self.security.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B92KeyResult {
    pub leak_bits: f64,
    /// N_R·q − N_R·h(Q): the smooth min-entropy lower bound.
    pub hmin_bits: f64,
    pub key_len_bits: f64,
    pub skr_bps: f64,
    /// Set when the unclamped key length was negative.
    pub clamped: bool,
    /// Overall security parameter ε_cor + 2ε̄ + ε_PA.
    pub eps_qkd: f64,
}

/// One-way error-reconciliation leak for a block of `n` bits at error rate
/// `qber`, lower-bounded through the binomial quantile at `eps_cor`.
///
/// At Q ∈ {0, 1} the quantile bracket is dropped. The result is never
/// negative.
pub fn leak_ec(n: f64, qber: f64, eps_cor: f64) -> Result<f64> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(invalid("n_r_x", format!("must be >= 1, got {n}")));
    }
    if !(0.0..=1.0).contains(&qber) {
        return Err(Error::ProbabilityOutOfRange(qber));
    }
    if !(eps_cor > 0.0 && eps_cor < 1.0) {
        return Err(invalid(
            "eps_cor",
            format!("must lie in (0,1), got {eps_cor}"),
        ));
    }
    let mut leak = n * h(qber) - 0.5 * n.log2() - (1.0 / eps_cor).log2();
    if qber > 0.0 && qber < 1.0 {
        let trials = n.round() as u64;
        let quantile = inv_binomial_cdf(eps_cor, trials, 1.0 - qber) as f64;
        leak += (n * (1.0 - qber) - quantile) * ((1.0 - qber) / qber).log2();
    }
    Ok(leak.max(0.0))
}

pub fn key_length_b92(input: &B92Input) -> Result<B92KeyResult> {
    input.validate()?;
    let sec = &input.security;
    let n_r = input.n_r;
    let leak = leak_ec(input.leak_block(), input.qber, sec.eps_cor)?;
    let hmin = n_r * input.q_factor - n_r * h(input.qber);
    let raw = hmin - leak - 2.0 * (1.0 / (2.0 * sec.eps_pa)).log2() - (2.0 / sec.eps_cor).log2();
    let key_len = raw.max(0.0);
    Ok(B92KeyResult {
        leak_bits: leak,
        hmin_bits: hmin,
        key_len_bits: key_len,
        skr_bps: key_len / input.block_s,
        clamped: raw < 0.0,
        eps_qkd: sec.eps_cor + 2.0 * sec.eps_bar + sec.eps_pa,
    })
}

/// Secure key rate (bits/s) for a sifting result: the sifted rate is
/// scaled to a block of `block_s` seconds before the bound is applied.
/// Empty results give 0.
pub fn skr_from_counts(
    n_received: u64,
    n_errors: u64,
    duration_s: f64,
    security: &SecurityParams,
    block_s: f64,
) -> f64 {
    if n_received == 0 || duration_s <= 0.0 {
        return 0.0;
    }
    let n_r = n_received as f64 / duration_s * block_s;
    if n_r < 1.0 {
        return 0.0;
    }
    let qber = n_errors as f64 / n_received as f64;
    let mut input = B92Input::new(n_r, qber, *security);
    input.block_s = block_s;
    key_length_b92(&input).map(|r| r.skr_bps).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sec() -> SecurityParams {
        SecurityParams::default()
    }

    #[test]
    fn leak_at_half_drops_bracket() {
        for n in [10.0, 1000.0, 17_500.0] {
            let expected = n - 0.5 * f64::log2(n) - f64::log2(1e10);
            let got = leak_ec(n, 0.5, 1e-10).unwrap();
            assert!(
                (got - expected.max(0.0)).abs() < 1e-9 * n,
                "{n}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn leak_endpoints_clamp() {
        assert_eq!(leak_ec(100.0, 0.0, 1e-10).unwrap(), 0.0);
        assert_eq!(leak_ec(100.0, 1.0, 1e-10).unwrap(), 0.0);
        assert!(leak_ec(0.5, 0.1, 1e-10).is_err());
    }

    #[test]
    fn leak_shannon_envelope() {
        let n = 1e6;
        let l = leak_ec(n, 0.02, 1e-10).unwrap() / n;
        let hq = h(0.02);
        assert!(l >= hq && l <= 1.2 * hq, "{l} vs {hq}");
    }

    #[test]
    fn reference_point_near_seven_kbps() {
        let r = key_length_b92(&B92Input::new(17_500.0, 0.0649, sec())).unwrap();
        assert!((r.skr_bps - 7000.0).abs() <= 0.15 * 7000.0, "{}", r.skr_bps);
        assert!(!r.clamped);
        assert!((r.eps_qkd - (1e-15 + 2.0 * 1.5625e-22 + 1e-10)).abs() < 1e-25);
    }

    #[test]
    fn high_qber_clamps_to_zero() {
        let r = key_length_b92(&B92Input::new(17_500.0, 0.2, sec())).unwrap();
        assert_eq!(r.key_len_bits, 0.0);
        assert!(r.clamped);
    }

    #[test]
    fn zero_qber_subtracts_only_constants() {
        let s = sec();
        let r = key_length_b92(&B92Input::new(1e5, 0.0, s)).unwrap();
        let constants = 2.0 * (1.0 / (2.0 * s.eps_pa)).log2() + (2.0 / s.eps_cor).log2();
        assert_eq!(r.leak_bits, 0.0);
        assert!((r.key_len_bits - (1e5 - constants)).abs() < 1e-6);
    }

    #[test]
    fn longer_blocks_approach_asymptote() {
        let s = sec();
        let rate = 17_500.0;
        let per_second: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&t| skr_from_counts((rate * t) as u64, (rate * t * 0.0649) as u64, t, &s, t))
            .collect();
        assert!(
            per_second[0] < per_second[1] && per_second[1] < per_second[2],
            "{per_second:?}"
        );
        // Large-block limit: N_R(1 − h) minus the leak on the N_R/2 key arm.
        assert!(per_second[2] < rate * (1.0 - 1.5 * h(0.0649)));
    }

    #[test]
    fn non_increasing_in_qber_on_grid() {
        let s = sec();
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let q = 0.001 + 0.001 * i as f64;
            let l = key_length_b92(&B92Input::new(50_000.0, q, s))
                .unwrap()
                .key_len_bits;
            assert!(l <= prev + 1e-9, "q={q}: {l} > {prev}");
            prev = l;
        }
    }

    #[test]
    fn empty_counts_give_zero() {
        assert_eq!(skr_from_counts(0, 0, 10.0, &sec(), 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn key_never_exceeds_block(n in 1.0f64..1e8, q in 0.0f64..=0.5) {
            let r = key_length_b92(&B92Input::new(n, q, sec())).unwrap();
            prop_assert!(r.key_len_bits <= n);
            prop_assert!(r.key_len_bits >= 0.0 && r.leak_bits >= 0.0);
        }

        #[test]
        fn increasing_in_block(n in 1e4f64..1e7, q in 0.005f64..0.06) {
            let a = key_length_b92(&B92Input::new(n, q, sec())).unwrap().key_len_bits;
            let b = key_length_b92(&B92Input::new(n * 1.1, q, sec())).unwrap().key_len_bits;
            prop_assume!(a > 0.0);
            prop_assert!(b > a);
        }

        #[test]
        fn rate_bounded_by_entropy(q in 0.001f64..0.1) {
            let n = 1e9;
            let r = key_length_b92(&B92Input::new(n, q, sec())).unwrap();
            prop_assert!(r.key_len_bits / n <= 1.0 - h(q));
        }
    }
}
