//! Physical and security parameters of a single-photon QKD link, and the
//! per-pulse detection and error probabilities every calculator shares.
//!
//! All probabilities are per trigger pulse. The mean photon number that
//! reaches Bob's detectors is `mu_tran * eta_pre * eta_ch * eta_rec`; the
//! transmitter efficiency is already folded into `mu_tran`, so it is not
//! applied a second time.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Error, Result};

const DARK_COUNT_WARN: f64 = 1e-3;
const CONSISTENCY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Excitation rate R in pulses per second.
    pub clock_rate_hz: f64,
    /// Mean photon number leaving Alice, before the channel.
    pub mu_tran: f64,
    pub eta_tran: f64,
    pub g2_zero: f64,
    pub lifetime_ns: f64,
}

impl SourceParams {
    /// Mean photon number at the collection optics (`mu_tran / eta_tran`).
    pub fn mu_sps(&self) -> f64 {
        self.mu_tran / self.eta_tran
    }

    pub fn validate(&self) -> Result<()> {
        positive("clock_rate_hz", self.clock_rate_hz)?;
        positive("lifetime_ns", self.lifetime_ns)?;
        unit_interval("eta_tran", self.eta_tran)?;
        unit_interval("g2_zero", self.g2_zero)?;
        if !(self.mu_tran >= 0.0 && self.mu_tran.is_finite()) {
            return Err(invalid(
                "mu_tran",
                format!("must be >= 0, got {}", self.mu_tran),
            ));
        }
        if self.eta_tran == 0.0 && self.mu_tran > 0.0 {
            return Err(invalid(
                "eta_tran",
                "zero transmitter efficiency with non-zero mu_tran",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub loss_db: f64,
    #[serde(default = "default_att_length")]
    pub att_length_km: f64,
    #[serde(default = "default_db_per_km")]
    pub db_per_km: f64,
}

fn default_att_length() -> f64 {
    22.0
}

fn default_db_per_km() -> f64 {
    0.2
}

impl ChannelParams {
    pub fn with_loss(loss_db: f64) -> Self {
        Self {
            loss_db,
            att_length_km: default_att_length(),
            db_per_km: default_db_per_km(),
        }
    }

    pub fn eta_ch(&self) -> f64 {
        db_to_transmittance(self.loss_db)
    }

    pub fn distance_km(&self) -> f64 {
        self.loss_db / self.db_per_km
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db >= 0.0 && self.loss_db.is_finite()) {
            return Err(invalid(
                "loss_db",
                format!("must be >= 0, got {}", self.loss_db),
            ));
        }
        positive("att_length_km", self.att_length_km)?;
        positive("db_per_km", self.db_per_km)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverParams {
    pub eta_rec: f64,
    /// Dark-count probability per pulse per detector.
    pub p_dc: f64,
    pub p_mis: f64,
}

impl ReceiverParams {
    pub fn validate(&self) -> Result<()> {
        unit_interval("eta_rec", self.eta_rec)?;
        unit_interval("p_dc", self.p_dc)?;
        unit_interval("p_mis", self.p_mis)
    }

    /// True when the dark-count probability is large enough that the
    /// small-p approximations in the rate formulas become questionable.
    pub fn dark_counts_suspicious(&self) -> bool {
        self.p_dc > DARK_COUNT_WARN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    pub eps: f64,
    pub eps_pa: f64,
    pub eps_bar: f64,
    pub eps_cor: f64,
    pub eps_ec: f64,
    pub eps_pe: f64,
    pub f_ec: f64,
}

impl SecurityParams {
    /// Derives the full set from a base failure probability using the
    /// standard relations: ε_PA = ε_EC = ε, ε̄ = (ε/8)², ε_PE = 4ε.
    pub fn from_base(eps: f64, eps_cor: f64, f_ec: f64) -> Self {
        Self {
            eps,
            eps_pa: eps,
            eps_bar: (eps / 8.0).powi(2),
            eps_cor,
            eps_ec: eps,
            eps_pe: 4.0 * eps,
            f_ec,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps", self.eps),
            ("eps_pa", self.eps_pa),
            ("eps_bar", self.eps_bar),
            ("eps_cor", self.eps_cor),
            ("eps_ec", self.eps_ec),
            ("eps_pe", self.eps_pe),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(name, format!("must lie in (0,1), got {v}")));
            }
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(invalid("f_ec", format!("must be >= 1, got {}", self.f_ec)));
        }
        Ok(())
    }
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self::from_base(1e-10, 1e-15, 1.16)
    }
}

/// A fully specified link: hardware, channel, security targets and the
/// protocol knobs the optimizer tunes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolInstance {
    pub source: SourceParams,
    pub channel: ChannelParams,
    pub receiver: ReceiverParams,
    pub security: SecurityParams,
    /// Key-basis probability (BB84 only).
    pub p_x: f64,
    /// Alice's pre-attenuation transmissivity.
    pub eta_pre: f64,
    /// Acquisition time in seconds.
    pub t_s: f64,
}

impl ProtocolInstance {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.channel.validate()?;
        self.receiver.validate()?;
        self.security.validate()?;
        if !(self.p_x > 0.0 && self.p_x < 1.0) {
            return Err(invalid(
                "p_x",
                format!("must lie in (0,1), got {}", self.p_x),
            ));
        }
        if !(self.eta_pre > 0.0 && self.eta_pre <= 1.0) {
            return Err(invalid(
                "eta_pre",
                format!("must lie in (0,1], got {}", self.eta_pre),
            ));
        }
        positive("t_s", self.t_s)?;
        if self.n_sent() < 1.0 {
            return Err(invalid("t_s", "fewer than one pulse sent"));
        }
        Ok(())
    }

    pub fn p_z(&self) -> f64 {
        1.0 - self.p_x
    }

    /// Block size N_S = R·t_s.
    pub fn n_sent(&self) -> f64 {
        self.source.clock_rate_hz * self.t_s
    }

    pub fn with_loss(mut self, loss_db: f64) -> Self {
        self.channel.loss_db = loss_db;
        self
    }

    pub fn with_choice(mut self, p_x: f64, eta_pre: f64) -> Self {
        self.p_x = p_x;
        self.eta_pre = eta_pre;
        self
    }

    pub fn with_block_time(mut self, t_s: f64) -> Self {
        self.t_s = t_s;
        self
    }

    /// Attenuated mean photon number leaving Alice (`mu_tran * eta_pre`).
    pub fn mu_sent(&self) -> f64 {
        self.source.mu_tran * self.eta_pre
    }
}

pub fn db_to_transmittance(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub fn transmittance_to_db(eta: f64) -> f64 {
    -10.0 * eta.log10()
}

/// T = η_tran·η_Ch·η_rec, transmittance from the collection optics to a click.
pub fn total_transmittance(inst: &ProtocolInstance) -> f64 {
    inst.source.eta_tran * inst.channel.eta_ch() * inst.receiver.eta_rec
}

/// Mean number of signal photons detected per pulse: μ_SPS·η_pre·T.
pub fn mean_detected_photons(inst: &ProtocolInstance) -> f64 {
    inst.source.mu_sps() * inst.eta_pre * total_transmittance(inst)
}

/// P_clk ≈ P_dc + (1 − P_dc)·(detected signal).
pub fn p_click(inst: &ProtocolInstance) -> Result<f64> {
    let signal = mean_detected_photons(inst);
    if signal > 1.0 {
        return Err(Error::Domain(format!(
            "detected mean photon number {signal} exceeds 1; per-pulse probability undefined"
        )));
    }
    let p_dc = inst.receiver.p_dc;
    Ok(p_dc + (1.0 - p_dc) * signal)
}

/// Upper bound on the multi-photon emission probability, g²(0)·(μ·η_pre)²/2.
pub fn p_multiphoton(inst: &ProtocolInstance) -> f64 {
    inst.source.g2_zero * inst.mu_sent().powi(2) / 2.0
}

/// Expected QBER, (P_mis·signal + P_dc/2)/P_clk.
pub fn expected_qber(inst: &ProtocolInstance) -> Result<f64> {
    let p_clk = p_click(inst)?;
    if p_clk <= 0.0 {
        return Err(Error::ZeroClickProbability);
    }
    let signal = mean_detected_photons(inst);
    Ok((inst.receiver.p_mis * signal + inst.receiver.p_dc / 2.0) / p_clk)
}

/// Probability that the source emits nothing in a pulse (Poissonian vacuum
/// convention), used by the BB84 dark-count error term.
pub fn p_vacuum(inst: &ProtocolInstance) -> f64 {
    (-inst.mu_sent()).exp()
}

/// How dark counts enter the BB84 per-pulse error probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkErrorTerm {
    /// P₀·P_dc/2: a dark count in an otherwise empty pulse is wrong half the time.
    #[default]
    VacuumHalf,
    /// P₀·P_dc/2 + P_dc, the expression as typeset in the source analysis.
    AsPrinted,
}

/// Per-pulse BB84 error probability.
pub fn p_error_bb84(inst: &ProtocolInstance, dark: DarkErrorTerm) -> f64 {
    let p_dc = inst.receiver.p_dc;
    let p0 = p_vacuum(inst);
    let dark_term = match dark {
        DarkErrorTerm::VacuumHalf => p0 * p_dc / 2.0,
        DarkErrorTerm::AsPrinted => p0 * p_dc / 2.0 + p_dc,
    };
    dark_term + (1.0 - p_dc) * mean_detected_photons(inst) * inst.receiver.p_mis
}

/// Named parameter sets shipped with the crate.
pub const PRESET_IDS: [&str; 3] = ["baseline", "improved", "qd"];

const BASELINE_JSON: &str = include_str!("../presets/baseline.json");
const IMPROVED_JSON: &str = include_str!("../presets/improved.json");
const QD_JSON: &str = include_str!("../presets/qd.json");

/// Raw JSON document for a shipped preset.
pub fn preset_document(id: &str) -> Result<Value> {
    let text = match id {
        "baseline" => BASELINE_JSON,
        "improved" => IMPROVED_JSON,
        "qd" => QD_JSON,
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(serde_json::from_str(text)?)
}

pub fn preset(id: &str) -> Result<ProtocolInstance> {
    instance_from_value(&preset_document(id)?)
}

pub fn instance_from_json(text: &str) -> Result<ProtocolInstance> {
    instance_from_value(&serde_json::from_str(text)?)
}

#[derive(Deserialize)]
struct SourceDoc {
    clock_rate_hz: f64,
    mu_sps: Option<f64>,
    mu_tran: Option<f64>,
    eta_tran: f64,
    g2_zero: f64,
    #[serde(default = "default_lifetime")]
    lifetime_ns: f64,
}

fn default_lifetime() -> f64 {
    4.58
}

#[derive(Deserialize)]
struct InstanceDoc {
    source: SourceDoc,
    channel: ChannelParams,
    receiver: ReceiverParams,
    #[serde(default)]
    security: SecurityParams,
    #[serde(default = "half")]
    p_x: f64,
    #[serde(default = "one")]
    eta_pre: f64,
    #[serde(default = "one")]
    t_s: f64,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

/// Builds an instance from a JSON document. The source may give `mu_tran`,
/// `mu_sps`, or both; both must agree with `eta_tran` to 1e-9 relative.
pub fn instance_from_value(doc: &Value) -> Result<ProtocolInstance> {
    let doc: InstanceDoc = serde_json::from_value(doc.clone())?;
    let s = doc.source;
    let mu_tran = match (s.mu_sps, s.mu_tran) {
        (None, None) => return Err(invalid("mu_tran", "either mu_tran or mu_sps is required")),
        (None, Some(mt)) => mt,
        (Some(ms), None) => ms * s.eta_tran,
        (Some(ms), Some(mt)) => {
            let implied = ms * s.eta_tran;
            let scale = mt.abs().max(implied.abs()).max(f64::MIN_POSITIVE);
            if (implied - mt).abs() / scale > CONSISTENCY_RTOL {
                return Err(invalid(
                    "mu_sps",
                    format!("mu_sps*eta_tran = {implied} disagrees with mu_tran = {mt}"),
                ));
            }
            mt
        }
    };
    let inst = ProtocolInstance {
        source: SourceParams {
            clock_rate_hz: s.clock_rate_hz,
            mu_tran,
            eta_tran: s.eta_tran,
            g2_zero: s.g2_zero,
            lifetime_ns: s.lifetime_ns,
        },
        channel: doc.channel,
        receiver: doc.receiver,
        security: doc.security,
        p_x: doc.p_x,
        eta_pre: doc.eta_pre,
        t_s: doc.t_s,
    };
    inst.validate()?;
    Ok(inst)
}

/// Applies a `key=value` override to a parameter document. Keys may be
/// dotted (`receiver.p_dc`) or bare (`p_dc`), in which case the first
/// section holding that key is used. Setting `mu_sps` drops `mu_tran` and
/// vice versa so the two never conflict.
pub fn apply_override(doc: &mut Value, key: &str, value: f64) -> Result<()> {
    let number = serde_json::Number::from_f64(value)
        .ok_or_else(|| invalid("param", format!("non-finite value for {key}")))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| invalid("param", "parameter document is not an object"))?;

    let (section, field) = match key.split_once('.') {
        Some((sec, f)) => (Some(sec.to_string()), f.to_string()),
        None => (None, key.to_string()),
    };
    let section = match section {
        Some(sec) => Some(sec),
        None if obj.contains_key(&field) => None,
        None => ["source", "channel", "receiver", "security"]
            .into_iter()
            .find(|sec| {
                let known = obj
                    .get(*sec)
                    .and_then(Value::as_object)
                    .is_some_and(|m| m.contains_key(&field));
                known || (*sec == "source" && (field == "mu_sps" || field == "mu_tran"))
            })
            .map(str::to_string),
    };

    let target = match &section {
        Some(sec) => obj
            .get_mut(sec)
            .and_then(Value::as_object_mut)
            .ok_or_else(|| invalid("param", format!("no section `{sec}`")))?,
        None => obj,
    };
    if section.is_none() && !target.contains_key(&field) {
        return Err(invalid("param", format!("unknown parameter `{key}`")));
    }
    match field.as_str() {
        "mu_sps" => {
            target.remove("mu_tran");
        }
        "mu_tran" => {
            target.remove("mu_sps");
        }
        _ => {}
    }
    target.insert(field, Value::Number(number));
    Ok(())
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be > 0, got {v}")))
    }
}

fn unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in [0,1], got {v}")))
    }
}
