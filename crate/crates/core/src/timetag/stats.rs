//! Source characterization from tag streams: photon-correlation g²(0) and
//! the emitter lifetime.

use serde::{Deserialize, Serialize};

use super::stream::{TagStream, CH_APD1, CH_APD2};
use crate::error::{Error, Result};

const MIN_COINCIDENCES: u64 = 100;
const MIN_LIFETIME_EVENTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    pub bin_ps: u64,
    /// Left edge of each bin, ps (delay = t₁ − t₀).
    pub delays_ps: Vec<i64>,
    pub counts: Vec<u64>,
    pub zero_peak: u64,
    /// Areas of the peaks at ±1, ±2, … periods, in increasing delay order.
    pub side_peaks: Vec<u64>,
    pub g2_zero: f64,
}

/// Cross-correlation between channels 0 and 1 over ±`span_ns`, with every
/// channel-1 click inside the span counted for each channel-0 click.
/// g²(0) is the zero-delay peak area over the mean area of the complete side
/// peaks, each peak integrated over one trigger period.
pub fn g2_histogram(stream: &TagStream, bin_ps: u64, span_ns: f64) -> Result<G2Histogram> {
    if bin_ps == 0 {
        return Err(Error::Estimate("histogram bin must be > 0".into()));
    }
    let period = stream.trigger_period_ps as i64;
    let span = (span_ns * 1e3).round() as i64;
    if span < period + period / 2 {
        return Err(Error::Estimate(format!(
            "span {span_ns} ns does not cover a side peak (period {} ns)",
            period as f64 * 1e-3
        )));
    }
    let starts: Vec<i64> = stream
        .clicks
        .iter()
        .filter(|r| r.channel == CH_APD1)
        .map(|r| r.timestamp_ps as i64)
        .collect();
    let stops: Vec<i64> = stream
        .clicks
        .iter()
        .filter(|r| r.channel == CH_APD2)
        .map(|r| r.timestamp_ps as i64)
        .collect();
    if starts.is_empty() || stops.is_empty() {
        return Err(Error::Estimate(
            "g2 needs clicks on both detector channels".into(),
        ));
    }

    let n_bins = (2 * span) as u64 / bin_ps + 1;
    let mut counts = vec![0u64; n_bins as usize];
    // Peaks indexed by round(delay / period), from −K to K.
    let k_max = ((span - period / 2) / period) as usize;
    let mut peaks = vec![0u64; 2 * k_max + 1];
    let mut lo = 0usize;
    for &t0 in &starts {
        while lo < stops.len() && stops[lo] < t0 - span {
            lo += 1;
        }
        for &t1 in stops[lo..].iter().take_while(|&&t| t <= t0 + span) {
            let d = t1 - t0;
            counts[((d + span) as u64 / bin_ps) as usize] += 1;
            let k = (d as f64 / period as f64).round() as i64;
            if k.unsigned_abs() as usize <= k_max {
                peaks[(k + k_max as i64) as usize] += 1;
            }
        }
    }
    let total: u64 = peaks.iter().sum();
    if total < MIN_COINCIDENCES {
        return Err(Error::Estimate(format!(
            "only {total} coincidences (need {MIN_COINCIDENCES})"
        )));
    }
    let zero_peak = peaks[k_max];
    let side_peaks: Vec<u64> = peaks
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k_max)
        .map(|(_, &c)| c)
        .collect();
    let side_mean = side_peaks.iter().sum::<u64>() as f64 / side_peaks.len() as f64;
    if side_mean <= 0.0 {
        return Err(Error::Estimate(
            "no side-peak coincidences to normalize against".into(),
        ));
    }
    Ok(G2Histogram {
        bin_ps,
        delays_ps: (0..n_bins)
            .map(|i| i as i64 * bin_ps as i64 - span)
            .collect(),
        counts,
        zero_peak,
        side_peaks,
        g2_zero: zero_peak as f64 / side_mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFitOptions {
    pub bin_ps: u64,
    /// Gap between the histogram peak and the first fitted bin; skips the
    /// region where timing jitter distorts the exponential.
    pub start_after_peak_ns: f64,
    /// Fit stops at the first bin below max(floor, fraction·peak).
    pub floor_counts: u64,
    pub floor_fraction: f64,
}

impl Default for LifetimeFitOptions {
    fn default() -> Self {
        Self {
            bin_ps: 100,
            start_after_peak_ns: 0.5,
            floor_counts: 20,
            floor_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub tau_ns: f64,
    /// Weighted RMS of the log-count residuals.
    pub residual: f64,
    pub events: usize,
    pub fit_start_ns: f64,
    pub fit_end_ns: f64,
}

pub fn fit_lifetime(stream: &TagStream) -> Result<LifetimeFit> {
    fit_lifetime_with(stream, &LifetimeFitOptions::default())
}

/// Single-exponential fit of the trigger-referenced arrival histogram:
/// weighted least squares of ln(counts) against bin centre, weights = counts.
pub fn fit_lifetime_with(stream: &TagStream, opts: &LifetimeFitOptions) -> Result<LifetimeFit> {
    if stream.triggers.is_empty() {
        return Err(Error::Stream("stream has no trigger records".into()));
    }
    let period = stream.trigger_period_ps;
    let n_bins = period.div_ceil(opts.bin_ps) as usize;
    let mut hist = vec![0u64; n_bins];
    let mut events = 0usize;
    for r in &stream.clicks {
        if let Some(k) = stream.triggers.pulse_of(r.timestamp_ps, period) {
            let off = r.timestamp_ps - stream.triggers.time(k, period);
            if off < period {
                hist[(off / opts.bin_ps) as usize] += 1;
                events += 1;
            }
        }
    }
    if events < MIN_LIFETIME_EVENTS {
        return Err(Error::Estimate(format!(
            "{events} events, need {MIN_LIFETIME_EVENTS}"
        )));
    }

    let (peak, &peak_count) = hist
        .iter()
        .enumerate()
        .max_by_key(|&(i, c)| (*c, std::cmp::Reverse(i)))
        .expect("non-empty");
    let floor = (opts.floor_counts as f64).max(opts.floor_fraction * peak_count as f64);
    let start = peak + (opts.start_after_peak_ns * 1e3 / opts.bin_ps as f64).round() as usize;
    let mut end = start;
    while end < n_bins && hist[end] as f64 >= floor {
        end += 1;
    }
    if end < start + 3 {
        return Err(Error::Estimate("no decaying region to fit".into()));
    }

    let bin_ns = opts.bin_ps as f64 * 1e-3;
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &c) in hist.iter().enumerate().take(end).skip(start) {
        let w = c as f64;
        let x = (i as f64 + 0.5) * bin_ns;
        let y = w.ln();
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let denom = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / sw;
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(Error::Estimate(format!("fit slope {slope} shows no decay")));
    }
    let sse: f64 = hist[start..end]
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let x = ((start + j) as f64 + 0.5) * bin_ns;
            c as f64 * ((c as f64).ln() - intercept - slope * x).powi(2)
        })
        .sum();
    Ok(LifetimeFit {
        tau_ns: -1.0 / slope,
        residual: (sse / sw).sqrt(),
        events,
        fit_start_ns: start as f64 * bin_ns,
        fit_end_ns: end as f64 * bin_ns,
    })
}

#[cfg(test)]
mod tests {
    use super::super::generate::{
        generate_stream_with, DetectionMode, GeneratorConfig, PhotonStatistics,
    };
    use super::*;
    use crate::model::{preset, ProtocolInstance};

    fn hbt_source(mu: f64, tau_ns: f64) -> ProtocolInstance {
        let mut inst = preset("baseline").unwrap();
        inst.source.mu_tran = mu;
        inst.source.eta_tran = 1.0;
        inst.source.lifetime_ns = tau_ns;
        inst.receiver.eta_rec = 1.0;
        inst.receiver.p_dc = 0.0;
        inst
    }

    fn hbt(photons: PhotonStatistics) -> GeneratorConfig {
        GeneratorConfig {
            photons,
            mode: DetectionMode::Hbt,
            ..Default::default()
        }
    }

    #[test]
    fn fits_short_lifetime() {
        let s = generate_stream_with(
            &hbt_source(0.5, 1.0),
            0.05,
            11,
            &hbt(PhotonStatistics::Single),
        )
        .unwrap();
        let fit = fit_lifetime(&s).unwrap();
        assert!((fit.tau_ns - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn pure_dark_stream_fails() {
        let mut inst = hbt_source(0.0, 1.0);
        inst.receiver.p_dc = 0.01;
        let s = generate_stream_with(&inst, 0.01, 2, &hbt(PhotonStatistics::Single)).unwrap();
        assert!(fit_lifetime(&s).is_err());
    }

    #[test]
    fn single_photons_never_coincide() {
        let s = generate_stream_with(
            &hbt_source(0.5, 0.5),
            0.01,
            4,
            &hbt(PhotonStatistics::Single),
        )
        .unwrap();
        let g = g2_histogram(&s, 100, 100.0).unwrap();
        assert_eq!(g.zero_peak, 0);
        assert_eq!(g.g2_zero, 0.0);
    }

    #[test]
    fn pair_emission_sets_g2() {
        let cfg = hbt(PhotonStatistics::Pairs { g2: 0.24 });
        let s = generate_stream_with(&hbt_source(0.5, 1.0), 0.05, 4, &cfg).unwrap();
        let g = g2_histogram(&s, 100, 100.0).unwrap();
        assert!((g.g2_zero - 0.24).abs() < 0.05, "{}", g.g2_zero);
    }

    #[test]
    fn too_few_coincidences() {
        let s = generate_stream_with(
            &hbt_source(0.001, 1.0),
            1e-4,
            4,
            &hbt(PhotonStatistics::Single),
        )
        .unwrap();
        assert!(g2_histogram(&s, 100, 100.0).is_err());
    }
}
