//! Neuron core: membrane updates, winner-take-all arbitration, fire history.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifConfig {
    /// Firing threshold. Membranes are `Σ spike·G` with unit input, so this
    /// is numerically compared against summed siemens.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Per-step membrane retention in `[0, 1]`.
    #[serde(default = "default_leak")]
    pub leak_factor: f64,
}

fn default_threshold() -> f64 {
    0.01
}

fn default_leak() -> f64 {
    1.0
}

impl Default for LifConfig {
    fn default() -> Self {
        Self { threshold: default_threshold(), leak_factor: default_leak() }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidParams(format!("threshold {} must be positive", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.leak_factor) {
            return Err(Error::InvalidParams(format!("leak_factor {} must lie in [0, 1]", self.leak_factor)));
        }
        Ok(())
    }
}

/// Two-variable Izhikevich model, in mV and ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IzhikevichConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Step in ms.
    pub dt: f64,
    /// Scales summed synaptic current into model input units.
    pub input_gain: f64,
    /// Steps each stimulus is held for when used inside the engine.
    pub presentation_steps: usize,
}

impl Default for IzhikevichConfig {
    fn default() -> Self {
        Self { a: 0.02, b: 0.2, c: -65.0, d: 8.0, dt: 1.0, input_gain: 1000.0, presentation_steps: 20 }
    }
}

impl IzhikevichConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt {} must be positive", self.dt)));
        }
        if self.presentation_steps == 0 {
            return Err(Error::InvalidParams("presentation_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Spike cutoff of the Izhikevich model, mV.
pub const IZHIKEVICH_PEAK: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub membranes: Vec<f64>,
    /// Izhikevich recovery variable; unused by LIF.
    pub recovery: Vec<f64>,
    pub fired: Vec<u8>,
    /// Winner of each arbitration, in call order.
    pub fire_history: Vec<Option<usize>>,
}

impl LayerState {
    pub fn new(size: usize) -> Self {
        Self { membranes: vec![0.0; size], recovery: vec![0.0; size], fired: vec![0; size], fire_history: vec![] }
    }

    /// Izhikevich neurons at membrane potential `v`, with `u = b·v`.
    pub fn izhikevich_at(size: usize, v: f64, cfg: &IzhikevichConfig) -> Self {
        Self { membranes: vec![v; size], recovery: vec![cfg.b * v; size], fired: vec![0; size], fire_history: vec![] }
    }

    pub fn len(&self) -> usize {
        self.membranes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membranes.is_empty()
    }
}

/// Integrates one step of synaptic drive: `m_j ← leak·m_j + Σ_i s_i G_ij`.
pub fn lif_step(state: &mut LayerState, conductances: &Matrix, spikes: &[u8], cfg: &LifConfig) -> Result<()> {
    if conductances.rows() != spikes.len() || conductances.cols() != state.len() {
        return Err(Error::Dimension(format!(
            "{}x{} conductances for {} inputs and {} neurons",
            conductances.rows(),
            conductances.cols(),
            spikes.len(),
            state.len()
        )));
    }
    for m in state.membranes.iter_mut() {
        *m *= cfg.leak_factor;
    }
    for (i, _) in spikes.iter().enumerate().filter(|(_, &s)| s != 0) {
        for (m, g) in state.membranes.iter_mut().zip(conductances.row(i)) {
            *m += g;
        }
    }
    Ok(())
}

/// The highest supra-threshold membrane fires (lowest index on ties), all
/// others are inhibited, and every membrane is reset to zero.
pub fn wta_arbitrate(state: &mut LayerState, threshold: f64) -> Option<usize> {
    let mut winner: Option<usize> = None;
    for (j, &m) in state.membranes.iter().enumerate() {
        if m > threshold && winner.is_none_or(|w| m > state.membranes[w]) {
            winner = Some(j);
        }
    }
    state.fired.iter_mut().for_each(|f| *f = 0);
    if let Some(w) = winner {
        state.fired[w] = 1;
    }
    state.membranes.iter_mut().for_each(|m| *m = 0.0);
    state.fire_history.push(winner);
    winner
}

/// One forward-Euler step of `v' = 0.04v² + 5v + 140 − u + I`,
/// `u' = a(bv − u)`; neurons reaching the peak are reset to `v = c`,
/// `u += d`. Returns the indices that spiked.
pub fn izhikevich_step(state: &mut LayerState, input_currents: &[f64], cfg: &IzhikevichConfig) -> Result<Vec<usize>> {
    if input_currents.len() != state.len() {
        return Err(Error::Dimension(format!("{} input currents for {} neurons", input_currents.len(), state.len())));
    }
    let mut spiked = vec![];
    for (j, &input) in input_currents.iter().enumerate() {
        let v = state.membranes[j];
        let u = state.recovery[j];
        let dv = 0.04 * v * v + 5.0 * v + 140.0 - u + input;
        let du = cfg.a * (cfg.b * v - u);
        let mut v_next = v + cfg.dt * dv;
        let mut u_next = u + cfg.dt * du;
        if v_next >= IZHIKEVICH_PEAK {
            v_next = cfg.c;
            u_next += cfg.d;
            state.fired[j] = 1;
            spiked.push(j);
        } else {
            state.fired[j] = 0;
        }
        state.membranes[j] = v_next;
        state.recovery[j] = u_next;
    }
    Ok(spiked)
}
