//! Independent reference implementations used as test oracles. Shared with
//! the acceptance suite, so everything here reports failures as `Err`
//! instead of panicking.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use qkdlab::timetag::{channel_for_bit, FilterWindow, TagStream};

pub const QUANTILE_EPS: [f64; 9] = [1e-15, 1e-10, 1e-6, 1e-3, 0.01, 0.1, 0.3, 0.7, 0.99];

pub fn quantile_p_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn exact_fraction(x: f64) -> (BigInt, BigInt) {
    let r = BigRational::from_float(x).expect("finite");
    (r.numer().clone(), r.denom().clone())
}

/// Exact quantiles of Binomial(n, p) for every ε in `eps`, with p and each ε
/// taken as the exact rationals their f64 values represent. Works in
/// integers: with p = a/d, CDF(k)·dⁿ = Σ_{j≤k} C(n,j)·aʲ·(d−a)ⁿ⁻ʲ.
pub fn exact_binomial_quantiles(n: u64, p: f64, eps: &[f64]) -> Vec<u64> {
    let (a, d) = exact_fraction(p);
    let b = &d - &a;
    let n_us = n as usize;
    let mut a_pow = vec![BigInt::one(); n_us + 1];
    let mut b_pow = vec![BigInt::one(); n_us + 1];
    for j in 1..=n_us {
        a_pow[j] = &a_pow[j - 1] * &a;
        b_pow[j] = &b_pow[j - 1] * &b;
    }
    let total = &a_pow[0] * num_traits::pow(d.clone(), n_us);
    let mut binom = BigInt::one();
    let mut cdf = Vec::with_capacity(n_us + 1);
    let mut acc = BigInt::zero();
    for j in 0..=n_us {
        acc += &binom * &a_pow[j] * &b_pow[n_us - j];
        cdf.push(acc.clone());
        binom = binom * BigInt::from(n_us - j) / BigInt::from(j + 1);
    }
    eps.iter()
        .map(|&e| {
            let (en, ed) = exact_fraction(e);
            let target = &en * &total;
            cdf.iter()
                .position(|c| c * &ed >= target)
                .expect("CDF reaches 1") as u64
        })
        .collect()
}

/// Second, separately written evaluation of γᵁ(n, k, λ, ε):
/// G = ((n+k)/(nk))·ln((n+k)/(2π·nk·λ(1−λ)·ε²)), A = max(n, k),
/// γ = [(1−2λ)AG/(n+k) + √(A²G²/(n+k)² + 4λ(1−λ)G)] / (2 + 2A²G/(n+k)²).
pub fn gamma_upper_reference(n: f64, k: f64, lam: f64, eps: f64) -> Option<f64> {
    let s = n + k;
    let v = lam * (1.0 - lam);
    let log_arg =
        s.ln() - (2.0 * std::f64::consts::PI).ln() - n.ln() - k.ln() - v.ln() - 2.0 * eps.ln();
    if log_arg <= 0.0 {
        return None;
    }
    let g = (1.0 / n + 1.0 / k) * log_arg;
    let r = n.max(k) / s;
    let first = (1.0 - 2.0 * lam) * r * g;
    let root = (r * r * g * g + 4.0 * v * g).sqrt();
    Some((first + root) / (2.0 * (1.0 + r * r * g)))
}

/// n and k grids (10 points, 10¹…10¹⁰), λ (5) and ε (3) used for the γᵁ
/// cross-check.
pub fn gamma_grid() -> (Vec<f64>, Vec<f64>, [f64; 5], [f64; 3]) {
    let nk: Vec<f64> = (1..=10).map(|e| 10f64.powi(e)).collect();
    (
        nk.clone(),
        nk,
        [0.01, 0.05, 0.1, 0.2, 0.4],
        [1e-15, 1e-10, 1e-6],
    )
}

pub fn check_gamma_grid() -> Result<usize, String> {
    let (ns, ks, lams, epss) = gamma_grid();
    let mut checked = 0;
    for &n in &ns {
        for &k in &ks {
            for &lam in &lams {
                for &eps in &epss {
                    let want = gamma_upper_reference(n, k, lam, eps)
                        .ok_or(format!("reference undefined at {n},{k},{lam},{eps}"))?;
                    let got =
                        qkdlab::mathkit::gamma_upper(n, k, lam, eps).map_err(|e| e.to_string())?;
                    let rel = (got - want).abs() / want.abs();
                    if !(rel <= 1e-12) {
                        return Err(format!(
                            "gamma({n},{k},{lam},{eps}) = {got} vs {want} (rel {rel:.2e})"
                        ));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(checked)
}

pub fn check_quantiles_exhaustive(max_n: u64) -> Result<usize, String> {
    let mut checked = 0;
    for p in quantile_p_grid() {
        for n in 0..=max_n {
            let want = exact_binomial_quantiles(n, p, &QUANTILE_EPS);
            for (&eps, &w) in QUANTILE_EPS.iter().zip(&want) {
                let got = qkdlab::mathkit::inv_binomial_cdf(eps, n, p);
                if got != w {
                    return Err(format!(
                        "inv_binomial_cdf({eps}, {n}, {p}) = {got}, exact {w}"
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// Symmetry h(q) = h(1−q), midpoint concavity and the maximum at ½, all at
/// 1e-12, on a 1001-point grid.
pub fn check_entropy_suite() -> Result<(), String> {
    let h = |q: f64| qkdlab::mathkit::binary_entropy(q).map_err(|e| e.to_string());
    if h(0.5)? != 1.0 || h(0.0)? != 0.0 || h(1.0)? != 0.0 {
        return Err("endpoint or peak value wrong".into());
    }
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    for &q in &grid {
        let d = (h(q)? - h(1.0 - q)?).abs();
        if d > 1e-12 {
            return Err(format!("asymmetric at {q}: {d:.2e}"));
        }
        if h(q)? > 1.0 + 1e-12 {
            return Err(format!("h({q}) above 1"));
        }
    }
    for (i, &a) in grid.iter().enumerate() {
        for &b in grid[i..].iter().step_by(37) {
            let mid = h((a + b) / 2.0)?;
            let chord = (h(a)? + h(b)?) / 2.0;
            if mid < chord - 1e-12 {
                return Err(format!("concavity fails on [{a}, {b}]: {mid} < {chord}"));
            }
        }
    }
    Ok(())
}

/// Brute-force sift: for each trigger, the clicks in [t_k + t₀, t_k + t₀ + Δt)
/// that precede the next trigger. Returns (received, errors, double, empty).
pub fn naive_sift(stream: &TagStream, window: FilterWindow) -> (u64, u64, u64, u64) {
    let period = stream.trigger_period_ps;
    let (lo, hi) = window.bounds_ps();
    let n = stream.trigger_count();
    let (mut rec, mut err, mut dbl) = (0, 0, 0);
    let mut idx = 0;
    for k in 0..n {
        let t = stream.triggers.time(k, period);
        let next = if k + 1 < n {
            stream.triggers.time(k + 1, period)
        } else {
            u64::MAX
        };
        while idx < stream.clicks.len() && stream.clicks[idx].timestamp_ps < t {
            idx += 1;
        }
        let mut seen = [false; 2];
        let mut j = idx;
        while j < stream.clicks.len() && stream.clicks[j].timestamp_ps < next {
            let c = stream.clicks[j];
            let off = c.timestamp_ps - t;
            if off >= lo && off < hi {
                seen[c.channel as usize] = true;
            }
            j += 1;
        }
        match seen {
            [true, true] => dbl += 1,
            [false, false] => {}
            _ => {
                rec += 1;
                let ch = if seen[0] { 0 } else { 1 };
                if ch != channel_for_bit(stream.alice.bit(k)) {
                    err += 1;
                }
            }
        }
    }
    (rec, err, dbl, n - rec - dbl)
}
