//! Numerical primitives shared by the key-length bounds.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Default clamp keeping λ(1−λ) away from zero in [`gamma_upper`].
pub const LAMBDA_MIN: f64 = 1e-12;

/// Above this many trials the binomial quantile switches to a normal
/// approximation with continuity correction.
pub const EXACT_BINOMIAL_LIMIT: u64 = 1_000_000;

/// Width, in standard deviations, of the region outside which binomial
/// mass is treated as zero.
const TAIL_SIGMAS: f64 = 40.0;

/// Binary Shannon entropy in bits, with h(0) = h(1) = 0.
pub fn binary_entropy(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::ProbabilityOutOfRange(q));
    }
    Ok(h(q))
}

/// Unchecked binary entropy; callers guarantee `q ∈ [0,1]`.
pub(crate) fn h(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Smallest `k` such that `P[Binomial(n, p) ≤ k] ≥ eps`.
///
/// Exact log-space summation for `n ≤ 10⁶`; above that a normal
/// approximation with continuity correction and a Cornish–Fisher skew term.
pub fn inv_binomial_cdf(eps: f64, n: u64, p: f64) -> u64 {
    debug_assert!(eps > 0.0 && eps < 1.0, "eps = {eps}");
    debug_assert!((0.0..=1.0).contains(&p), "p = {p}");
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n > EXACT_BINOMIAL_LIMIT {
        binomial_quantile_normal(eps, n, p)
    } else {
        binomial_quantile_exact(eps, n, p)
    }
}

fn binomial_quantile_normal(eps: f64, n: u64, p: f64) -> u64 {
    let nf = n as f64;
    let mean = nf * p;
    let sd = (nf * p * (1.0 - p)).sqrt();
    let z = Normal::standard().inverse_cdf(eps);
    // First-order Cornish–Fisher skew term keeps the approximation within
    // one count of exact summation at the switchover for skewed p.
    let skew = (1.0 - 2.0 * p) / sd;
    let zc = z + (z * z - 1.0) * skew / 6.0;
    let k = (mean + zc * sd - 0.5).ceil();
    k.clamp(0.0, nf) as u64
}

/// Support window [lo, hi] outside which binomial mass is negligible.
fn binomial_window(n: u64, p: f64) -> (u64, u64) {
    let nf = n as f64;
    let mean = nf * p;
    let spread = TAIL_SIGMAS * (nf * p * (1.0 - p)).sqrt() + TAIL_SIGMAS;
    let lo = (mean - spread).floor().max(0.0) as u64;
    let hi = ((mean + spread).ceil().min(nf)) as u64;
    (lo, hi)
}

/// Below this many trials the pmf is evaluated directly as C(n,k)·pᵏ·qⁿ⁻ᵏ,
/// which is exact to a few ulp and so resolves near-ties that a log-gamma
/// round trip would misplace. Neither factor can overflow or lose
/// non-negligible mass to underflow at this size.
const DIRECT_PMF_LIMIT: u64 = 1000;

fn binomial_pmf(n: u64, p: f64) -> Box<dyn Fn(u64) -> f64> {
    let nf = n as f64;
    let q = 1.0 - p;
    if n <= DIRECT_PMF_LIMIT {
        let mut coeff = 1.0;
        let table: Vec<f64> = (0..=n)
            .map(|k| {
                let v = coeff * p.powi(k as i32) * q.powi((n - k) as i32);
                coeff = coeff * (n - k) as f64 / (k + 1) as f64;
                v
            })
            .collect();
        return Box::new(move |k| table[k as usize]);
    }
    let ln_n_fact = ln_gamma(nf + 1.0);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    Box::new(move |k| {
        let kf = k as f64;
        (ln_n_fact - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0) + kf * lp + (nf - kf) * lq).exp()
    })
}

fn binomial_quantile_exact(eps: f64, n: u64, p: f64) -> u64 {
    let pmf = binomial_pmf(n, p);
    let (lo, hi) = binomial_window(n, p);

    if eps <= 0.5 {
        // Accumulate the lower tail upward.
        let mut cdf = 0.0;
        for k in lo..=hi {
            cdf += pmf(k);
            if cdf >= eps {
                return k;
            }
        }
        hi.max(lo)
    } else {
        // Accumulate the upper tail downward: the answer is the smallest k
        // with P[X > k] ≤ 1 − eps, which avoids cancellation near eps → 1.
        let budget = 1.0 - eps;
        let mut survival = 0.0;
        let mut k = hi;
        while k > lo {
            let next = survival + pmf(k);
            if next > budget {
                return k;
            }
            survival = next;
            k -= 1;
        }
        lo
    }
}

/// Multiplicative Chernoff upper bound on an observed count with
/// expectation `mean_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffBound {
    pub beta: f64,
    pub mean_star: f64,
    pub delta_u: f64,
}

impl ChernoffBound {
    pub fn upper(&self) -> f64 {
        self.mean_star + self.delta_u
    }
}

/// N̄ = N̄* + Δᵁ with Δᵁ = (β + √(8βN̄* + β²))/2 and β = −ln ε_PE.
pub fn chernoff_upper(mean_star: f64, eps_pe: f64) -> ChernoffBound {
    debug_assert!(mean_star >= 0.0);
    let beta = -eps_pe.ln();
    let delta_u = (beta + (8.0 * beta * mean_star + beta * beta).sqrt()) / 2.0;
    ChernoffBound {
        beta,
        mean_star,
        delta_u,
    }
}

/// Clamps λ into `[lam_min, 1 − lam_min]`.
pub fn clamp_lambda(lam: f64, lam_min: f64) -> f64 {
    lam.clamp(lam_min, 1.0 - lam_min)
}

/// Statistical inflation γᵁ(n, k, λ, ε) of an observed error rate λ on a
/// sample of `k` to the worst case on a sample of `n` drawn from the same
/// population.
pub fn gamma_upper(n: f64, k: f64, lam: f64, eps: f64) -> Result<f64> {
    if !(n >= 1.0 && k >= 1.0) {
        return Err(Error::Domain(format!(
            "gamma_upper needs n, k >= 1 (n={n}, k={k})"
        )));
    }
    let var = lam * (1.0 - lam);
    if !(var > 0.0) {
        return Err(Error::Domain(format!(
            "gamma_upper singular at lambda = {lam}"
        )));
    }
    let sum = n + k;
    let arg = sum / (2.0 * std::f64::consts::PI * n * k * var * eps * eps);
    if !(arg > 1.0) {
        return Err(Error::Domain(format!(
            "gamma_upper log argument {arg} <= 1"
        )));
    }
    let g = sum / (n * k) * arg.ln();
    let a = n.max(k);
    let ag = a * a * g;
    let numer = (1.0 - 2.0 * lam) * a * g / sum + (ag * g / (sum * sum) + 4.0 * var * g).sqrt();
    let denom = 2.0 + 2.0 * ag / (sum * sum);
    Ok(numer / denom)
}
