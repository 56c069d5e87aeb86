//! Predict-write-verify programming of single devices.

use serde::{Deserialize, Serialize};

use crate::bridge::{DeviceArrayPort, PortError};
use crate::device::{DeviceParams, MemristorState, Pulse, Trajectory};
use crate::{Error, Result};

/// The pulses the programmer may choose from, in user order.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseOptionSet {
    pulses: Vec<Pulse>,
    /// Option indices grouped by bit-identical amplitude, each group sorted
    /// by width (then list index).
    groups: Vec<Vec<usize>>,
}

impl PulseOptionSet {
    pub fn new(pulses: Vec<Pulse>) -> Result<Self> {
        if pulses.is_empty() {
            return Err(Error::InvalidParams("pulse option set is empty".into()));
        }
        for p in &pulses {
            p.validate()?;
        }
        let mut groups: Vec<Vec<usize>> = vec![];
        for (idx, p) in pulses.iter().enumerate() {
            match groups.iter_mut().find(|g| pulses[g[0]].amplitude.to_bits() == p.amplitude.to_bits()) {
                Some(g) => g.push(idx),
                None => groups.push(vec![idx]),
            }
        }
        for g in &mut groups {
            g.sort_by(|&a, &b| pulses[a].width.total_cmp(&pulses[b].width).then(a.cmp(&b)));
        }
        Ok(Self { pulses, groups })
    }

    /// Every amplitude paired with every width, amplitude-major.
    pub fn grid(amplitudes: &[f64], widths: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().flat_map(|&a| widths.iter().map(move |&w| Pulse::new(a, w))).collect())
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn has_both_polarities(&self) -> bool {
        self.pulses.iter().any(|p| p.amplitude > 0.0) && self.pulses.iter().any(|p| p.amplitude < 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProgramPolicy {
    /// Accepted `|(R_expected − R_real) / R_expected|`.
    pub r_tolerance: f64,
    pub max_steps: usize,
}

impl Default for ProgramPolicy {
    fn default() -> Self {
        Self { r_tolerance: 1e-3, max_steps: 5 }
    }
}

impl ProgramPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_tolerance > 0.0 && self.r_tolerance.is_finite()) {
            return Err(Error::InvalidParams(format!("r_tolerance {} must be positive", self.r_tolerance)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParams("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn relative_error(r_expected: f64, r_real: f64) -> f64 {
        ((r_expected - r_real) / r_expected).abs()
    }

    pub fn accepts(&self, r_expected: f64, r_real: f64) -> bool {
        Self::relative_error(r_expected, r_real) <= self.r_tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramResult {
    pub final_r: f64,
    pub steps_used: usize,
    pub converged: bool,
    pub pulses_applied: Vec<Pulse>,
}

/// Index of the option whose predicted outcome lands closest to
/// `r_expected`; ties go to the earliest option.
///
/// Equivalent to predicting every option independently. Options sharing an
/// amplitude reuse one trajectory, and a group stops integrating once its
/// outcomes can only move further from the target than the best found.
pub fn select_pulse_index(
    state: MemristorState,
    params: &DeviceParams,
    options: &PulseOptionSet,
    r_expected: f64,
) -> usize {
    let r0 = state.resistance();
    let mut plans: Vec<(f64, usize)> = options
        .groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let traj = Trajectory::new(state, params, options.pulses[members[0]].amplitude);
            // Outcomes of a group sweep monotonically from r0 toward its bound.
            let (lo, hi) = if !traj.is_active() {
                (r0, r0)
            } else if traj.rises() {
                (r0, traj.bound())
            } else {
                (traj.bound(), r0)
            };
            let floor = if r_expected < lo {
                lo - r_expected
            } else if r_expected > hi {
                r_expected - hi
            } else {
                0.0
            };
            (floor, g)
        })
        .collect();
    plans.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut best_err = f64::INFINITY;
    let mut best_idx = usize::MAX;
    for (floor, g) in plans {
        if floor > best_err {
            break;
        }
        let members = &options.groups[g];
        let mut traj = Trajectory::new(state, params, options.pulses[members[0]].amplitude);
        let rises = traj.rises();
        for &idx in members {
            let outcome = traj.outcome(options.pulses[idx].width);
            let err = (outcome - r_expected).abs();
            if err < best_err || (err == best_err && idx < best_idx) {
                best_err = err;
                best_idx = idx;
            }
            // Past the target, wider pulses only move further away.
            let reached = if rises { outcome >= r_expected } else { outcome <= r_expected };
            if reached && err > best_err {
                break;
            }
        }
    }
    best_idx
}

pub fn select_pulse(state: MemristorState, params: &DeviceParams, options: &PulseOptionSet, r_expected: f64) -> Pulse {
    options.pulses[select_pulse_index(state, params, options, r_expected)]
}

/// Reads, and while outside tolerance, predicts the best pulse from the
/// last read, applies it and reads again, for at most `max_steps` pulses.
pub fn program(
    port: &mut dyn DeviceArrayPort,
    row: usize,
    col: usize,
    r_expected: f64,
    options: &PulseOptionSet,
    policy: &ProgramPolicy,
    params: &DeviceParams,
) -> std::result::Result<ProgramResult, PortError> {
    let mut pulses_applied = Vec::new();
    loop {
        let r_real = port.read_resistance(row, col)?;
        let converged = policy.accepts(r_expected, r_real);
        if converged || pulses_applied.len() == policy.max_steps {
            return Ok(ProgramResult { final_r: r_real, steps_used: pulses_applied.len(), converged, pulses_applied });
        }
        let pulse = select_pulse(MemristorState::new(r_real), params, options, r_expected);
        port.apply_pulse(row, col, pulse.amplitude, pulse.width)?;
        pulses_applied.push(pulse);
    }
}
