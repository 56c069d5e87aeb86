//! Plasticity core: desired conductance changes and their mapping to target
//! resistances.

use serde::{Deserialize, Serialize};

use crate::device::{operating_range, DeviceParams};
use crate::programmer::PulseOptionSet;
use crate::{Error, Result};

/// One desired conductance change on synapse `(pre, post)`, in siemens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEntry {
    pub pre: usize,
    pub post: usize,
    pub dg: f64,
}

/// Sparse weight update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightDelta {
    pub entries: Vec<DeltaEntry>,
}

impl WeightDelta {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// A supervised rule mapping one presentation to a weight update. Further
/// rules (multi-layer back-propagation, tempotron, random target
/// projection) plug in through this trait.
pub trait LearningRule {
    fn weight_delta(&self, spikes: &[u8], fired: &[u8], target: &[u8]) -> Result<WeightDelta>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaRuleConfig {
    /// Siemens per unit error.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
}

fn default_learning_rate() -> f64 {
    3.5e-6
}

impl Default for DeltaRuleConfig {
    fn default() -> Self {
        Self { learning_rate: default_learning_rate() }
    }
}

impl DeltaRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParams(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// `dG_ij = η (target_j − fired_j) spikes_i`, zero entries omitted.
pub fn delta_rule(spikes: &[u8], fired: &[u8], target: &[u8], cfg: &DeltaRuleConfig) -> Result<WeightDelta> {
    if fired.len() != target.len() {
        return Err(Error::Dimension(format!("fired has {} outputs, target has {}", fired.len(), target.len())));
    }
    let errors: Vec<(usize, f64)> = fired
        .iter()
        .zip(target)
        .enumerate()
        .filter(|(_, (f, t))| f != t)
        .map(|(j, (&f, &t))| (j, t as f64 - f as f64))
        .collect();
    let mut entries = vec![];
    for (i, _) in spikes.iter().enumerate().filter(|(_, &s)| s != 0) {
        for &(j, e) in &errors {
            entries.push(DeltaEntry { pre: i, post: j, dg: cfg.learning_rate * e * spikes[i] as f64 });
        }
    }
    Ok(WeightDelta { entries })
}

impl LearningRule for DeltaRuleConfig {
    fn weight_delta(&self, spikes: &[u8], fired: &[u8], target: &[u8]) -> Result<WeightDelta> {
        delta_rule(spikes, fired, target, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StdpConfig {
    pub a_plus: f64,
    pub a_minus: f64,
    /// Steps.
    pub tau_plus: f64,
    /// Steps.
    pub tau_minus: f64,
}

impl Default for StdpConfig {
    fn default() -> Self {
        Self { a_plus: 3.5e-6, a_minus: 3.5e-6, tau_plus: 2.0, tau_minus: 2.0 }
    }
}

impl StdpConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a_plus, self.a_minus, self.tau_plus, self.tau_minus];
        if all.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParams("STDP amplitudes and time constants must be positive".into()));
        }
        Ok(())
    }

    /// Pair window for `Δt = t_post − t_pre`.
    pub fn window(&self, dt: f64) -> f64 {
        if dt >= 0.0 {
            self.a_plus * (-dt / self.tau_plus).exp()
        } else {
            -self.a_minus * (dt / self.tau_minus).exp()
        }
    }
}

/// Pair-based STDP over last-spike step indices. Every (pre, post) pair
/// where both neurons have spiked contributes one entry.
pub fn stdp_update(pre_times: &[Option<u64>], post_times: &[Option<u64>], cfg: &StdpConfig) -> WeightDelta {
    let mut entries = vec![];
    for (i, tp) in pre_times.iter().enumerate() {
        let Some(t_pre) = *tp else { continue };
        for (j, tq) in post_times.iter().enumerate() {
            let Some(t_post) = *tq else { continue };
            let dt = t_post as f64 - t_pre as f64;
            entries.push(DeltaEntry { pre: i, post: j, dg: cfg.window(dt) });
        }
    }
    WeightDelta { entries }
}

/// Resistances reachable with a pulse option set: from `r_n` at the most
/// negative amplitude up to `r_p` at the most positive one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistanceWindow {
    pub low: f64,
    pub high: f64,
}

impl ResistanceWindow {
    pub fn from_options(params: &DeviceParams, options: &PulseOptionSet) -> Self {
        let amps = options.pulses().iter().map(|p| p.amplitude);
        let most_negative = amps.clone().filter(|&a| a <= 0.0).fold(f64::INFINITY, f64::min);
        let most_positive = amps.filter(|&a| a > 0.0).fold(f64::NEG_INFINITY, f64::max);
        let low = if most_negative.is_finite() { operating_range(params, most_negative) } else { params.r_floor };
        let high = if most_positive.is_finite() { operating_range(params, most_positive) } else { f64::INFINITY };
        Self { low: low.max(params.r_floor), high }
    }

    /// Extremes of the operating ranges over every option. Wider than
    /// [`Self::from_options`] on the high side when `a1_p < 0`, since the
    /// weakest positive pulse then has the highest `r_p`.
    pub fn reachable(params: &DeviceParams, options: &PulseOptionSet) -> Self {
        let ranges = options.pulses().iter().map(|p| (p.amplitude, operating_range(params, p.amplitude)));
        let low = ranges.clone().filter(|&(a, _)| a <= 0.0).map(|(_, r)| r).fold(f64::INFINITY, f64::min);
        let high = ranges.filter(|&(a, _)| a > 0.0).map(|(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
        Self {
            low: if low.is_finite() { low.max(params.r_floor) } else { params.r_floor },
            high: if high.is_finite() { high } else { f64::INFINITY },
        }
    }

    pub fn unbounded(params: &DeviceParams) -> Self {
        Self { low: params.r_floor, high: f64::INFINITY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetResistance {
    pub ohms: f64,
    /// The raw target fell outside the window and was clamped.
    pub clamped: bool,
    /// The requested conductance was not positive.
    pub saturated: bool,
}

/// Resistance that realises conductance `1/R + dG`, clamped into `window`.
pub fn target_resistance(r_current: f64, dg: f64, window: ResistanceWindow) -> TargetResistance {
    let g = 1.0 / r_current + dg;
    if g <= 0.0 {
        return TargetResistance { ohms: window.high, clamped: true, saturated: true };
    }
    let raw = 1.0 / g;
    let ohms = raw.clamp(window.low, window.high);
    TargetResistance { ohms, clamped: ohms != raw, saturated: false }
}
