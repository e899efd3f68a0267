//! Seeded synthetic tag streams standing in for the lab apparatus.
//!
//! Pulses that emit at least one photon are found by geometric skipping,
//! so the cost scales with the number of events rather than the number of
//! triggers. Dark counts are independent geometric processes per detector,
//! uniform within the period.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::stream::{channel_for_bit, AlicePattern, Record, TagStream, Triggers, CH_APD1, CH_APD2};
use crate::error::{invalid, Error, Result};
use crate::model::ProtocolInstance;

/// Photon-number statistics of one excitation pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhotonStatistics {
    /// At most one photon, with probability μ.
    Single,
    /// One or two photons, with P(2) = g2·μ²/2 and mean μ.
    Pairs {
        g2: f64,
    },
    Poisson,
}

/// How photons are turned into detector clicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// Conclusive B92 clicks with probability η_rec/4 per photon; the
    /// correct detector fires with 1 − p_mis, the other with p_mis.
    B92,
    /// Hanbury-Brown–Twiss: each detected photon takes channel 0 or 1 at random.
    Hbt,
}

/// Time-dependent imperfections of the real transmitter: the modulator
/// holds its state only inside a flat region after the trigger edge, and
/// the optics pass only part of the light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApparatusProfile {
    /// Extra loss factor on every photon.
    pub throughput: f64,
    /// Polarization error added inside the flat region, combined with p_mis.
    pub extra_error: f64,
    pub flat_start_ns: f64,
    pub flat_end_ns: f64,
    /// Error probability for photons emitted outside the flat region.
    pub edge_error: f64,
}

impl ApparatusProfile {
    /// Profile matching the free-space B92 link's reported operating point.
    pub fn free_space_link() -> Self {
        Self {
            throughput: 0.42,
            extra_error: 0.045,
            flat_start_ns: 0.3,
            flat_end_ns: 10.5,
            edge_error: 0.5,
        }
    }

    fn error_at(&self, p_mis: f64, t_emit_ns: f64) -> f64 {
        if t_emit_ns >= self.flat_start_ns && t_emit_ns < self.flat_end_ns {
            p_mis + self.extra_error - 2.0 * p_mis * self.extra_error
        } else {
            self.edge_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub photons: PhotonStatistics,
    pub mode: DetectionMode,
    pub alice: AlicePattern,
    /// Gaussian timing jitter σ, ps.
    pub jitter_ps: f64,
    /// Fixed delay between trigger edge and emission, ps.
    pub delay_ps: f64,
    pub apparatus: Option<ApparatusProfile>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            photons: PhotonStatistics::Single,
            mode: DetectionMode::B92,
            alice: AlicePattern::Alternating,
            jitter_ps: 350.0,
            delay_ps: 0.0,
            apparatus: None,
        }
    }
}

impl GeneratorConfig {
    pub fn free_space_link() -> Self {
        Self {
            apparatus: Some(ApparatusProfile::free_space_link()),
            ..Self::default()
        }
    }
}

pub fn trigger_period_ps(clock_rate_hz: f64) -> u64 {
    (1e12 / clock_rate_hz).round().max(1.0) as u64
}

// Independent RNG streams per process keep the output stable if one
// process changes how many draws it makes.
const STREAM_EMISSION: u64 = 1;
const STREAM_DARK: [u64; 2] = [2, 3];

pub fn generate_stream(inst: &ProtocolInstance, duration_s: f64, seed: u64) -> Result<TagStream> {
    generate_stream_with(inst, duration_s, seed, &GeneratorConfig::default())
}

pub fn generate_stream_with(
    inst: &ProtocolInstance,
    duration_s: f64,
    seed: u64,
    cfg: &GeneratorConfig,
) -> Result<TagStream> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(invalid(
            "duration_s",
            format!("must be > 0, got {duration_s}"),
        ));
    }
    inst.source.validate()?;
    inst.receiver.validate()?;
    inst.channel.validate()?;
    let period = trigger_period_ps(inst.source.clock_rate_hz);
    let n_pulses = (duration_s * 1e12 / period as f64).round() as u64;
    if n_pulses == 0 {
        return Err(invalid("duration_s", "shorter than one trigger period"));
    }

    let mu = inst.mu_sent();
    let mut clicks = Vec::new();
    emit_photons(inst, cfg, mu, n_pulses, period, seed, &mut clicks)?;
    let p_dc = inst.receiver.p_dc;
    for (i, &ch) in [CH_APD1, CH_APD2].iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_DARK[i]);
        for_each_hit(&mut rng, p_dc, n_pulses, |rng, k| {
            let offset = rng.random_range(0..period);
            clicks.push(Record {
                timestamp_ps: k * period + offset,
                channel: ch,
            });
        })?;
    }
    clicks.sort_unstable();

    let mut metadata = BTreeMap::new();
    metadata.insert("generator.seed".into(), seed.to_string());
    metadata.insert("generator.duration_s".into(), duration_s.to_string());
    metadata.insert("generator.config".into(), serde_json::to_string(cfg)?);
    Ok(TagStream {
        triggers: Triggers::Regular {
            first_ps: 0,
            count: n_pulses,
        },
        clicks,
        trigger_period_ps: period,
        duration_s: n_pulses as f64 * period as f64 * 1e-12,
        alice: cfg.alice,
        metadata,
    })
}

/// Calls `f` for every pulse index in `0..n` that independently succeeds
/// with probability `p`, skipping geometrically between successes.
fn for_each_hit<F>(rng: &mut ChaCha20Rng, p: f64, n: u64, mut f: F) -> Result<()>
where
    F: FnMut(&mut ChaCha20Rng, u64),
{
    if p <= 0.0 {
        return Ok(());
    }
    if p >= 1.0 {
        (0..n).for_each(|k| f(rng, k));
        return Ok(());
    }
    let skip = Geometric::new(p).map_err(|e| Error::Domain(format!("geometric({p}): {e}")))?;
    let mut k = skip.sample(rng);
    while k < n {
        f(rng, k);
        k = match k.checked_add(1 + skip.sample(rng)) {
            Some(next) => next,
            None => break,
        };
    }
    Ok(())
}

fn emit_photons(
    inst: &ProtocolInstance,
    cfg: &GeneratorConfig,
    mu: f64,
    n_pulses: u64,
    period: u64,
    seed: u64,
    clicks: &mut Vec<Record>,
) -> Result<()> {
    let (p_emit, p_two) = match cfg.photons {
        PhotonStatistics::Single => {
            if mu > 1.0 {
                return Err(invalid("mu_tran", "single-photon statistics need mu <= 1"));
            }
            (mu, 0.0)
        }
        PhotonStatistics::Pairs { g2 } => {
            let p2 = g2 * mu * mu / 2.0;
            let p1 = mu - 2.0 * p2;
            if !(p1 >= 0.0 && p1 + p2 <= 1.0) {
                return Err(invalid(
                    "g2_zero",
                    format!("no pair distribution with mean {mu} and g2 {g2}"),
                ));
            }
            (p1 + p2, if p1 + p2 > 0.0 { p2 / (p1 + p2) } else { 0.0 })
        }
        PhotonStatistics::Poisson => (-(-mu).exp_m1(), 0.0),
    };
    let poisson = match cfg.photons {
        PhotonStatistics::Poisson if mu > 0.0 => {
            Some(Poisson::new(mu).map_err(|e| Error::Domain(format!("poisson({mu}): {e}")))?)
        }
        _ => None,
    };

    let tau_ps = inst.source.lifetime_ns * 1e3;
    let decay = Exp::new(1.0 / tau_ps).map_err(|e| Error::Domain(format!("lifetime: {e}")))?;
    let jitter =
        Normal::new(0.0, cfg.jitter_ps).map_err(|e| Error::Domain(format!("jitter: {e}")))?;
    let thr = cfg.apparatus.map_or(1.0, |a| a.throughput);
    let eta_ch = inst.channel.eta_ch();
    let eta_rec = inst.receiver.eta_rec;
    let p_detect = match cfg.mode {
        DetectionMode::B92 => eta_ch * eta_rec * thr / 4.0,
        DetectionMode::Hbt => eta_ch * eta_rec * thr,
    };
    let p_mis = inst.receiver.p_mis;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_EMISSION);
    for_each_hit(&mut rng, p_emit, n_pulses, |rng, k| {
        let n_photons = match (&poisson, cfg.photons) {
            (Some(pois), _) => loop {
                // Conditioned on at least one photon.
                let n = pois.sample(rng) as u64;
                if n > 0 {
                    break n;
                }
            },
            (None, PhotonStatistics::Pairs { .. }) => 1 + rng.random_bool(p_two) as u64,
            _ => 1,
        };
        let trigger = k * period;
        for _ in 0..n_photons {
            if !rng.random_bool(p_detect) {
                continue;
            }
            let t_emit = cfg.delay_ps + decay.sample(rng);
            let channel = match cfg.mode {
                DetectionMode::B92 => {
                    let err = match cfg.apparatus {
                        Some(a) => a.error_at(p_mis, t_emit * 1e-3),
                        None => p_mis,
                    };
                    let right = channel_for_bit(cfg.alice.bit(k));
                    if rng.random_bool(err) {
                        right ^ 1
                    } else {
                        right
                    }
                }
                DetectionMode::Hbt => rng.random_range(0..2u8),
            };
            let arrival = trigger as f64 + t_emit + jitter.sample(rng);
            if arrival >= 0.0 {
                clicks.push(Record {
                    timestamp_ps: arrival.round() as u64,
                    channel,
                });
            }
        }
    })
}
