//! Empirical memristor switching model.
//!
//! The resistance `R` of a device moves under a bias `v` at the rate
//!
//! ```text
//! dR/dt = A_p (e^{|v|/t_p} - 1) (r_p(v) - R)^2   if v > 0 and R < r_p(v)
//!       = A_n (e^{|v|/t_n} - 1) (R - r_n(v))^2   if v <= 0 and R >= r_n(v)
//!       = 0                                      otherwise
//! ```
//!
//! where `r_p(v) = a0_p + a1_p v` and `r_n(v) = a0_n + a1_n v` bound the
//! resistance reachable under that bias. Pulses are integrated with a
//! fixed-step explicit Euler scheme that never crosses the active bound.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::Error;

/// Fitting constants of the switching model plus integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    /// Positive-branch scaling factor, 1/(Ω·s).
    pub a_p: f64,
    /// Negative-branch scaling factor, 1/(Ω·s). Must be negative.
    pub a_n: f64,
    /// Positive-branch voltage fitting constant (V).
    pub t_p: f64,
    /// Negative-branch voltage fitting constant (V).
    pub t_n: f64,
    pub a0_p: f64,
    pub a1_p: f64,
    pub a0_n: f64,
    pub a1_n: f64,
    /// Euler step in seconds.
    #[serde(default = "default_integration_step")]
    pub integration_step: f64,
    /// Lower clamp on any resistance, ohms.
    #[serde(default = "default_r_floor")]
    pub r_floor: f64,
}

fn default_integration_step() -> f64 {
    1e-7
}

fn default_r_floor() -> f64 {
    1.0
}

impl DeviceParams {
    /// TiOx device fit used for the MNIST selector/selectorless study.
    pub fn tiox() -> Self {
        Self {
            a_p: 0.21389,
            a_n: -0.81302,
            t_p: 1.6591,
            t_n: 1.5148,
            a0_p: 37087.0,
            a1_p: -20193.0,
            a0_n: 43430.0,
            a1_n: 34333.0,
            integration_step: default_integration_step(),
            r_floor: default_r_floor(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let all = [
            self.a_p,
            self.a_n,
            self.t_p,
            self.t_n,
            self.a0_p,
            self.a1_p,
            self.a0_n,
            self.a1_n,
            self.integration_step,
            self.r_floor,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("device parameters must be finite".into()));
        }
        if self.a_p <= 0.0 {
            return Err(Error::InvalidParams("a_p must be positive".into()));
        }
        if self.a_n >= 0.0 {
            return Err(Error::InvalidParams("a_n must be negative".into()));
        }
        if self.t_p <= 0.0 || self.t_n <= 0.0 {
            return Err(Error::InvalidParams("t_p and t_n must be positive".into()));
        }
        if self.integration_step <= 0.0 {
            return Err(Error::InvalidParams("integration_step must be positive".into()));
        }
        if self.r_floor <= 0.0 {
            return Err(Error::InvalidParams("r_floor must be positive".into()));
        }
        Ok(())
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::tiox()
    }
}

/// Resistance of a single device.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MemristorState {
    resistance: f64,
}

impl MemristorState {
    pub fn new(resistance: f64) -> Self {
        Self { resistance }
    }

    pub fn resistance(&self) -> f64 {
        self.resistance
    }

    pub fn conductance(&self) -> f64 {
        1.0 / self.resistance
    }
}

/// A rectangular voltage pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    /// Volts; the sign selects the switching branch.
    pub amplitude: f64,
    /// Seconds.
    pub width: f64,
}

impl Pulse {
    pub fn new(amplitude: f64, width: f64) -> Self {
        Self { amplitude, width }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidPulse(format!("amplitude {} is not finite", self.amplitude)));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidPulse(format!("width {} must be positive", self.width)));
        }
        Ok(())
    }
}

/// Read-out noise model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReadNoise {
    #[default]
    None,
    /// Multiplicative Gaussian noise with standard deviation `sigma_rel`.
    GaussianRelative { sigma_rel: f64 },
}

impl ReadNoise {
    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            ReadNoise::None => Ok(()),
            ReadNoise::GaussianRelative { sigma_rel } if sigma_rel >= 0.0 && sigma_rel.is_finite() => Ok(()),
            ReadNoise::GaussianRelative { sigma_rel } => {
                Err(Error::InvalidParams(format!("sigma_rel {sigma_rel} must be non-negative")))
            }
        }
    }
}

/// Resistance bound of the branch selected by `v`.
pub fn operating_range(params: &DeviceParams, v: f64) -> f64 {
    if v > 0.0 {
        params.a0_p + params.a1_p * v
    } else {
        params.a0_n + params.a1_n * v
    }
}

/// `dR/dt` in ohms per second.
pub fn switching_rate(params: &DeviceParams, r: f64, v: f64) -> f64 {
    Branch::new(params, v).rate(r)
}

/// The active half of the rate equation for a fixed bias.
#[derive(Debug, Clone, Copy)]
struct Branch {
    coef: f64,
    bound: f64,
    positive: bool,
    floor: f64,
}

impl Branch {
    fn new(params: &DeviceParams, v: f64) -> Self {
        let positive = v > 0.0;
        let coef = if positive {
            params.a_p * (v.abs() / params.t_p).exp_m1()
        } else {
            params.a_n * (v.abs() / params.t_n).exp_m1()
        };
        Self { coef, bound: operating_range(params, v), positive, floor: params.r_floor }
    }

    #[inline]
    fn rate(&self, r: f64) -> f64 {
        if self.positive {
            if r < self.bound {
                let gap = self.bound - r;
                self.coef * gap * gap
            } else {
                0.0
            }
        } else if r >= self.bound {
            let gap = r - self.bound;
            self.coef * gap * gap
        } else {
            0.0
        }
    }

    /// One Euler step of length `dt`, clamped at the bound and the floor.
    #[inline]
    fn step(&self, r: f64, dt: f64) -> f64 {
        let gap = if self.positive { self.bound - r } else { r - self.bound };
        if gap <= 0.0 || gap.is_nan() {
            return r;
        }
        let next = r + dt * self.coef * gap * gap;
        let next = if self.positive {
            if next > self.bound {
                self.bound
            } else {
                next
            }
        } else if next < self.bound {
            self.bound
        } else {
            next
        };
        if next < self.floor {
            self.floor
        } else {
            next
        }
    }
}

/// Number of full Euler steps in `width` and the length of the trailing
/// partial step (zero when `width` is a whole number of steps).
fn step_plan(width: f64, h: f64) -> (u64, f64) {
    let ratio = width / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        return (nearest as u64, 0.0);
    }
    let full = ratio.floor();
    let rem = width - full * h;
    (full as u64, if rem > 0.0 { rem } else { 0.0 })
}

/// Euler trajectory of one device under a constant bias.
///
/// Outcomes for several pulse widths of the same amplitude share the common
/// prefix of full steps, so querying widths in ascending order costs one
/// integration up to the widest pulse. Each outcome is bit-identical to
/// [`apply_pulse`] with that width.
#[derive(Debug, Clone)]
pub struct Trajectory {
    branch: Branch,
    h: f64,
    r: f64,
    steps: u64,
    frozen: bool,
}

impl Trajectory {
    pub fn new(start: MemristorState, params: &DeviceParams, amplitude: f64) -> Self {
        Self {
            branch: Branch::new(params, amplitude),
            h: params.integration_step,
            r: start.resistance,
            steps: 0,
            frozen: false,
        }
    }

    /// The bound this trajectory moves toward.
    pub fn bound(&self) -> f64 {
        self.branch.bound
    }

    /// Whether the start state lies on the active side of the bound.
    pub fn is_active(&self) -> bool {
        self.branch.rate(self.r) != 0.0
    }

    /// Moves upward in resistance when active.
    pub fn rises(&self) -> bool {
        self.branch.positive
    }

    fn advance(&mut self, steps: u64) {
        if self.frozen {
            self.steps = self.steps.max(steps);
            return;
        }
        let (branch, h) = (self.branch, self.h);
        let mut r = self.r;
        let mut k = self.steps;
        while k < steps {
            let next = branch.step(r, h);
            if next == r {
                // Further steps repeat the same arithmetic on the same value.
                self.frozen = true;
                k = steps;
                break;
            }
            r = next;
            k += 1;
        }
        self.r = r;
        self.steps = k;
    }

    /// Resistance at the end of a pulse of `width` seconds. Widths must be
    /// queried in non-decreasing order.
    pub fn outcome(&mut self, width: f64) -> f64 {
        let (full, rem) = step_plan(width, self.h);
        debug_assert!(full >= self.steps, "widths must be queried in ascending order");
        self.advance(full);
        if rem > 0.0 && !self.frozen {
            self.branch.step(self.r, rem)
        } else {
            self.r
        }
    }
}

/// Integrates one pulse and returns the new device state.
pub fn apply_pulse(state: MemristorState, params: &DeviceParams, pulse: Pulse) -> MemristorState {
    MemristorState::new(predict_pulse_outcome(state, params, pulse))
}

/// Applies the same pulse to every resistance in `rs`. Each result is
/// bit-identical to [`apply_pulse`] on that device alone.
pub fn apply_pulse_many(rs: &mut [f64], params: &DeviceParams, pulse: Pulse) {
    let branch = Branch::new(params, pulse.amplitude);
    let (full, rem) = step_plan(pulse.width, params.integration_step);
    let h = params.integration_step;
    // Devices on the inactive side never move.
    let active: Vec<usize> = (0..rs.len()).filter(|&k| branch.rate(rs[k]) != 0.0).collect();
    let mut buf: Vec<f64> = active.iter().map(|&k| rs[k]).collect();
    let mut done = 0;
    while done < full {
        let chunk = (full - done).min(16);
        let before = buf.clone();
        for _ in 0..chunk {
            for r in buf.iter_mut() {
                *r = branch.step(*r, h);
            }
        }
        done += chunk;
        if before == buf {
            // A fixed point of one step is a fixed point of all later ones.
            break;
        }
    }
    if rem > 0.0 {
        for r in buf.iter_mut() {
            *r = branch.step(*r, rem);
        }
    }
    for (&k, &r) in active.iter().zip(&buf) {
        rs[k] = r;
    }
}

/// Resistance that [`apply_pulse`] would produce, without touching any state.
pub fn predict_pulse_outcome(state: MemristorState, params: &DeviceParams, pulse: Pulse) -> f64 {
    Trajectory::new(state, params, pulse.amplitude).outcome(pulse.width)
}

/// Resistance after each of `count` identical pulses, one column per
/// amplitude. Entry 0 of every column is `r_start`.
pub fn switching_curves(
    params: &DeviceParams,
    amplitudes: &[f64],
    width: f64,
    count: usize,
    r_start: f64,
) -> Vec<Vec<f64>> {
    amplitudes
        .iter()
        .map(|&amplitude| {
            let pulse = Pulse::new(amplitude, width);
            let mut state = MemristorState::new(r_start);
            let mut column = Vec::with_capacity(count + 1);
            column.push(r_start);
            for _ in 0..count {
                state = apply_pulse(state, params, pulse);
                column.push(state.resistance);
            }
            column
        })
        .collect()
}

/// Reads a device. Always consumes exactly one standard-normal draw.
pub fn read<R: Rng + ?Sized>(state: MemristorState, params: &DeviceParams, noise: ReadNoise, rng: &mut R) -> f64 {
    let eps: f64 = rng.sample(StandardNormal);
    match noise {
        ReadNoise::None => state.resistance,
        ReadNoise::GaussianRelative { sigma_rel } => (state.resistance * (1.0 + sigma_rel * eps)).max(params.r_floor),
    }
}
