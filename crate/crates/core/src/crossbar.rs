//! The virtual memristor array.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceParams, MemristorState, Pulse, ReadNoise};
use crate::{Error, Matrix, Result};

/// How unselected devices are biased during a write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BiasScheme {
    /// Every device is gated; a write touches only the addressed device.
    #[serde(rename = "selector")]
    SelectorBased,
    /// No gating; devices sharing the written row or column see half the
    /// write amplitude for the same duration.
    #[serde(rename = "selectorless")]
    SelectorlessHalfVoltage,
}

impl BiasScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            BiasScheme::SelectorBased => "selector",
            BiasScheme::SelectorlessHalfVoltage => "selectorless",
        }
    }
}

impl std::str::FromStr for BiasScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "selector" => Ok(BiasScheme::SelectorBased),
            "selectorless" => Ok(BiasScheme::SelectorlessHalfVoltage),
            other => Err(format!("unknown bias scheme '{other}' (expected selector or selectorless)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    devices: Vec<MemristorState>,
    params: DeviceParams,
    scheme: BiasScheme,
}

impl Crossbar {
    /// Draws every device uniformly from `r_init_mean * (1 ± jitter)` in
    /// row-major order, one draw per device.
    pub fn initialize<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        params: DeviceParams,
        scheme: BiasScheme,
        r_init_mean: f64,
        r_init_jitter_rel: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParams(format!("array dimensions must be positive, got {rows}x{cols}")));
        }
        params.validate()?;
        if !(r_init_mean >= params.r_floor && r_init_mean.is_finite()) {
            return Err(Error::InvalidParams(format!("initial resistance {r_init_mean} is below r_floor")));
        }
        if !(r_init_jitter_rel >= 0.0 && r_init_jitter_rel.is_finite()) {
            return Err(Error::InvalidParams(format!("jitter {r_init_jitter_rel} must be non-negative")));
        }
        let devices = (0..rows * cols)
            .map(|_| {
                let u: f64 = rng.random();
                let r = r_init_mean * (1.0 + r_init_jitter_rel * (2.0 * u - 1.0));
                MemristorState::new(r.max(params.r_floor))
            })
            .collect();
        Ok(Self { rows, cols, devices, params, scheme })
    }

    /// Builds an array from explicit resistances (row-major).
    pub fn from_resistances(
        rows: usize,
        cols: usize,
        resistances: &[f64],
        params: DeviceParams,
        scheme: BiasScheme,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParams(format!("array dimensions must be positive, got {rows}x{cols}")));
        }
        if resistances.len() != rows * cols {
            return Err(Error::Dimension(format!("{} resistances for a {rows}x{cols} array", resistances.len())));
        }
        params.validate()?;
        if let Some(bad) = resistances.iter().find(|r| !(r.is_finite() && **r >= params.r_floor)) {
            return Err(Error::InvalidParams(format!("resistance {bad} is not a valid device state")));
        }
        let devices = resistances.iter().map(|&r| MemristorState::new(r)).collect();
        Ok(Self { rows, cols, devices, params, scheme })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn scheme(&self) -> BiasScheme {
        self.scheme
    }

    fn check(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::OutOfBounds { row, col, rows: self.rows, cols: self.cols });
        }
        Ok(row * self.cols + col)
    }

    pub fn device(&self, row: usize, col: usize) -> Result<MemristorState> {
        Ok(self.devices[self.check(row, col)?])
    }

    pub fn set_device(&mut self, row: usize, col: usize, state: MemristorState) -> Result<()> {
        let idx = self.check(row, col)?;
        self.devices[idx] = state;
        Ok(())
    }

    /// Row-major resistances.
    pub fn resistances(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.devices.iter().map(|d| d.resistance()).collect())
    }

    /// Writes one device. Under the selectorless scheme every other device
    /// on the same row or column receives the half-amplitude pulse.
    pub fn write_selected(&mut self, row: usize, col: usize, pulse: Pulse) -> Result<()> {
        let target = self.check(row, col)?;
        pulse.validate()?;
        self.devices[target] = device::apply_pulse(self.devices[target], &self.params, pulse);
        if self.scheme == BiasScheme::SelectorBased {
            return Ok(());
        }
        let mut lines: Vec<usize> = (0..self.cols).filter(|&c| c != col).map(|c| row * self.cols + c).collect();
        lines.extend((0..self.rows).filter(|&r| r != row).map(|r| r * self.cols + col));
        let mut rs: Vec<f64> = lines.iter().map(|&k| self.devices[k].resistance()).collect();
        device::apply_pulse_many(&mut rs, &self.params, Pulse::new(pulse.amplitude / 2.0, pulse.width));
        for (&k, r) in lines.iter().zip(rs) {
            self.devices[k] = MemristorState::new(r);
        }
        Ok(())
    }

    /// Conductance matrix as seen through (possibly noisy) reads.
    pub fn read_conductances<R: Rng + ?Sized>(&self, noise: ReadNoise, rng: &mut R) -> Matrix {
        let data = self.devices.iter().map(|&d| 1.0 / device::read(d, &self.params, noise, rng)).collect();
        Matrix::from_vec(self.rows, self.cols, data)
    }

    /// Column currents for row voltages: `I_j = Σ_i V_i G_ij`.
    pub fn dot_product(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.rows {
            return Err(Error::Dimension(format!(
                "input vector has {} entries, array has {} rows",
                input.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &v) in input.iter().enumerate() {
            let row = &self.devices[i * self.cols..(i + 1) * self.cols];
            for (acc, d) in out.iter_mut().zip(row) {
                *acc += v * d.conductance();
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::operating_range;
    use crate::rng::SimRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn uniform(rows: usize, cols: usize, scheme: BiasScheme) -> Crossbar {
        let mut rng = SimRng::seed_from_u64(0);
        Crossbar::initialize(rows, cols, DeviceParams::tiox(), scheme, 11000.0, 0.0, &mut rng).unwrap()
    }

    fn changed(before: &Crossbar, after: &Crossbar) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for r in 0..before.rows() {
            for c in 0..before.cols() {
                if before.device(r, c).unwrap() != after.device(r, c).unwrap() {
                    out.push((r, c));
                }
            }
        }
        out
    }

    #[test]
    fn initialize_zero_jitter_is_exact() {
        let cb = uniform(2, 2, BiasScheme::SelectorBased);
        assert!(cb.resistances().as_slice().iter().all(|&r| r == 11000.0));
        let one = uniform(1, 1, BiasScheme::SelectorBased);
        assert_eq!(one.device(0, 0).unwrap().resistance(), 11000.0);
    }

    #[test]
    fn initialize_jitter_bounds_and_reproducibility() {
        let make = || {
            let mut rng = SimRng::seed_from_u64(42);
            Crossbar::initialize(100, 100, DeviceParams::tiox(), BiasScheme::SelectorBased, 11000.0, 0.02, &mut rng)
                .unwrap()
        };
        let a = make();
        assert!(a.resistances().as_slice().iter().all(|&r| (10780.0..=11220.0).contains(&r)));
        assert_eq!(a, make());
    }

    #[test]
    fn initialize_rejects_empty() {
        let mut rng = SimRng::seed_from_u64(0);
        let err = Crossbar::initialize(0, 3, DeviceParams::tiox(), BiasScheme::SelectorBased, 11000.0, 0.0, &mut rng);
        assert!(err.is_err());
    }

    #[test]
    fn selector_write_touches_only_target() {
        let before = uniform(3, 3, BiasScheme::SelectorBased);
        let mut after = before.clone();
        after.write_selected(0, 0, Pulse::new(-1.2, 1e-5)).unwrap();
        assert_eq!(changed(&before, &after), vec![(0, 0)]);
    }

    #[test]
    fn selectorless_negative_write_leaves_half_selected_alone() {
        // r_n(-0.6) = 22830.2 lies above 11000, so -0.6 V cannot move them.
        let p = DeviceParams::tiox();
        assert!((operating_range(&p, -0.6) - 22830.2).abs() < 1e-9);
        let before = uniform(3, 3, BiasScheme::SelectorlessHalfVoltage);
        let mut after = before.clone();
        after.write_selected(0, 0, Pulse::new(-1.2, 1e-5)).unwrap();
        assert_eq!(changed(&before, &after), vec![(0, 0)]);
        assert!(after.device(0, 0).unwrap().resistance() < 11000.0);
    }

    #[test]
    fn selectorless_positive_write_disturbs_row_and_column() {
        let before = uniform(3, 3, BiasScheme::SelectorlessHalfVoltage);
        let mut after = before.clone();
        after.write_selected(0, 0, Pulse::new(1.2, 1e-5)).unwrap();
        let moved = changed(&before, &after);
        assert_eq!(moved, vec![(0, 0), (0, 1), (0, 2), (1, 0), (2, 0)]);
        for (r, c) in [(0, 1), (0, 2), (1, 0), (2, 0)] {
            let v = after.device(r, c).unwrap().resistance();
            assert!(v > 11000.0 && v < 24971.2);
        }
    }

    #[test]
    fn positive_half_select_can_outrun_the_target() {
        // a1_p < 0: r_p(0.6) = 24971.2 is far above r_p(1.2) = 12855.4, so a
        // half-selected device at 11 kΩ moves more than the written one.
        let before = uniform(2, 2, BiasScheme::SelectorlessHalfVoltage);
        let mut after = before.clone();
        after.write_selected(0, 0, Pulse::new(1.2, 1e-5)).unwrap();
        let target = after.device(0, 0).unwrap().resistance() - 11000.0;
        let half = after.device(0, 1).unwrap().resistance() - 11000.0;
        assert!(target > 0.0 && half > 10.0 * target);
    }

    #[test]
    fn out_of_bounds_write() {
        let mut cb = uniform(3, 3, BiasScheme::SelectorBased);
        assert!(matches!(cb.write_selected(3, 0, Pulse::new(1.0, 1e-5)), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn conductance_reads() {
        let cb = uniform(4, 4, BiasScheme::SelectorBased);
        let mut rng = SimRng::seed_from_u64(0);
        let g = cb.read_conductances(ReadNoise::None, &mut rng);
        assert!(g.as_slice().iter().all(|&x| x == 1.0 / 11000.0));
        assert_eq!(g, cb.read_conductances(ReadNoise::None, &mut rng));

        let floor =
            Crossbar::from_resistances(1, 2, &[1.0, 5000.0], DeviceParams::tiox(), BiasScheme::SelectorBased).unwrap();
        let g = floor.read_conductances(ReadNoise::None, &mut rng);
        assert!(g.get(0, 0).is_finite() && g.get(0, 0) <= 1.0);
        assert_eq!(g.get(0, 1), 1.0 / 5000.0);
    }

    #[test]
    fn dot_product_basics() {
        let r = [1000.0, 2000.0, 4000.0, 5000.0, 8000.0, 10000.0];
        let cb = Crossbar::from_resistances(2, 3, &r, DeviceParams::tiox(), BiasScheme::SelectorBased).unwrap();
        assert_eq!(cb.dot_product(&[0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(cb.dot_product(&[0.0, 1.0]).unwrap(), vec![1.0 / 5000.0, 1.0 / 8000.0, 1.0 / 10000.0]);
        assert!(cb.dot_product(&[1.0]).is_err());
    }

    fn arb_crossbar(scheme: BiasScheme) -> impl Strategy<Value = (Crossbar, usize, usize)> {
        (1usize..5, 1usize..5).prop_flat_map(move |(rows, cols)| {
            (proptest::collection::vec(2300.0f64..26000.0, rows * cols), 0..rows, 0..cols).prop_map(move |(r, i, j)| {
                (Crossbar::from_resistances(rows, cols, &r, DeviceParams::tiox(), scheme).unwrap(), i, j)
            })
        })
    }

    proptest! {
        #[test]
        fn selector_write_locality((cb, i, j) in arb_crossbar(BiasScheme::SelectorBased), v in -1.3f64..1.3) {
            let mut after = cb.clone();
            after.write_selected(i, j, Pulse::new(v, 1e-5)).unwrap();
            for (r, c) in changed(&cb, &after) {
                prop_assert_eq!((r, c), (i, j));
            }
        }

        #[test]
        fn selectorless_write_locality((cb, i, j) in arb_crossbar(BiasScheme::SelectorlessHalfVoltage), v in -1.3f64..1.3) {
            let mut after = cb.clone();
            after.write_selected(i, j, Pulse::new(v, 1e-5)).unwrap();
            for (r, c) in changed(&cb, &after) {
                prop_assert!(r == i || c == j);
            }
        }

        #[test]
        fn negative_half_select_is_attenuated(r0 in 2300.0f64..26000.0, mag in 0.9f64..1.2) {
            // r_n(v) rises with v, so halving a negative amplitude shrinks both
            // the exponential factor and the window. The positive branch has
            // the opposite window slope and is covered separately below.
            let cb = Crossbar::from_resistances(2, 2, &[r0; 4], DeviceParams::tiox(), BiasScheme::SelectorlessHalfVoltage).unwrap();
            let mut after = cb.clone();
            after.write_selected(0, 0, Pulse::new(-mag, 1e-5)).unwrap();
            let target = (after.device(0, 0).unwrap().resistance() - r0).abs();
            let half = (after.device(0, 1).unwrap().resistance() - r0).abs();
            prop_assert!(half <= target, "half {} target {}", half, target);
        }

        #[test]
        fn dot_product_is_linear(
            r in proptest::collection::vec(1000.0f64..20000.0, 12),
            x in proptest::collection::vec(-1.0f64..1.0, 4),
            y in proptest::collection::vec(-1.0f64..1.0, 4),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let cb = Crossbar::from_resistances(4, 3, &r, DeviceParams::tiox(), BiasScheme::SelectorBased).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = cb.dot_product(&mix).unwrap();
            let fx = cb.dot_product(&x).unwrap();
            let fy = cb.dot_product(&y).unwrap();
            let scale: f64 = r.iter().map(|v| 1.0 / v).sum::<f64>() * 4.0;
            for j in 0..3 {
                let rhs = a * fx[j] + b * fy[j];
                prop_assert!((lhs[j] - rhs).abs() <= 1e-12 * scale);
            }
        }
    }
}
