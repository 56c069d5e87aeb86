//! The JSON run configuration.
//!
//! Every section and every key inside a section may be omitted and then takes
//! the default shown by [`RunConfig::default`]. Unknown keys are rejected.
//!
//! ```json
//! {
//!   "network": { "layers": [484, 10] },
//!   "neuron": { "model": "lif", "threshold": 0.01, "leak_factor": 1.0 },
//!   "rule": { "kind": "delta", "learning_rate": 3.5e-6 },
//!   "device": { "a_p": 0.21389, "a_n": -0.81302, "t_p": 1.6591, "t_n": 1.5148,
//!               "a0_p": 37087, "a1_p": -20193, "a0_n": 43430, "a1_n": 34333 },
//!   "array": { "rows": 100, "cols": 100, "scheme": "selector",
//!              "r_init_mean": 11000, "r_init_jitter_rel": 0.0 },
//!   "pulses": { "amplitudes": [-1.2, -1.1, -1.0, -0.9, 0.9, 1.0, 1.1, 1.2],
//!               "widths": [1e-7, 1e-6, 1e-5] },
//!   "policy": { "r_tolerance": 0.001, "max_steps": 5 },
//!   "read_noise": { "kind": "none" },
//!   "run": { "epochs": 20, "minibatch": 100, "seed": 0, "mode": "memristor",
//!            "test_samples": 500, "shuffle": true, "watch": [[384, 6], [10, 6]] }
//! }
//! ```
//!
//! `pulses` may instead list explicit options:
//! `{ "options": [{ "amplitude": -1.2, "width": 1e-5 }, ...] }`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;
use crate::crossbar::BiasScheme;
use crate::device::{DeviceParams, Pulse, ReadNoise};
use crate::engine::RunMode;
use crate::neuron::{IzhikevichConfig, LifConfig};
use crate::plasticity::{DeltaRuleConfig, StdpConfig};
use crate::programmer::{ProgramPolicy, PulseOptionSet};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub neuron: NeuronConfig,
    #[serde(default)]
    pub rule: RuleConfig,
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub pulses: PulsesConfig,
    #[serde(default)]
    pub policy: ProgramPolicy,
    #[serde(default)]
    pub read_noise: ReadNoise,
    #[serde(default)]
    pub run: RunSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// `[inputs, outputs]`.
    pub layers: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { layers: vec![484, 10] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NeuronConfig {
    Lif(LifConfig),
    Izhikevich(IzhikevichConfig),
}

impl Default for NeuronConfig {
    fn default() -> Self {
        NeuronConfig::Lif(LifConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleConfig {
    Delta(DeltaRuleConfig),
    Stdp(StdpConfig),
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig::Delta(DeltaRuleConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub scheme: BiasScheme,
    pub r_init_mean: f64,
    /// Devices start uniformly in `r_init_mean · (1 ± r_init_jitter_rel)`.
    pub r_init_jitter_rel: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { rows: 100, cols: 100, scheme: BiasScheme::SelectorBased, r_init_mean: 11000.0, r_init_jitter_rel: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<Pulse>>,
}

pub const DEFAULT_AMPLITUDES: [f64; 8] = [-1.2, -1.1, -1.0, -0.9, 0.9, 1.0, 1.1, 1.2];
pub const DEFAULT_WIDTHS: [f64; 3] = [1e-7, 1e-6, 1e-5];

impl Default for PulsesConfig {
    fn default() -> Self {
        Self { amplitudes: Some(DEFAULT_AMPLITUDES.to_vec()), widths: Some(DEFAULT_WIDTHS.to_vec()), options: None }
    }
}

impl PulsesConfig {
    pub fn option_set(&self) -> Result<PulseOptionSet, DataError> {
        let schema = |reason: String| DataError::Schema { path: "pulses".into(), reason };
        let pulses = match (&self.amplitudes, &self.widths, &self.options) {
            (None, None, Some(opts)) => opts.clone(),
            (Some(a), Some(w), None) => a.iter().flat_map(|&a| w.iter().map(move |&w| Pulse::new(a, w))).collect(),
            _ => return Err(schema("give either 'options' or both 'amplitudes' and 'widths'".into())),
        };
        PulseOptionSet::new(pulses).map_err(|e| schema(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub epochs: usize,
    /// Presentations per epoch.
    pub minibatch: usize,
    pub seed: u64,
    pub mode: RunMode,
    /// Size of the held-out slice evaluated after training.
    pub test_samples: usize,
    /// Shuffle the training pool with the run seed before slicing.
    pub shuffle: bool,
    /// Synapses `(pre, post)` whose conductance is traced every epoch.
    pub watch: Vec<(usize, usize)>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            epochs: 20,
            minibatch: 100,
            seed: 0,
            mode: RunMode::Memristor,
            test_samples: 500,
            shuffle: true,
            watch: vec![(384, 6), (10, 6)],
        }
    }
}

impl RunConfig {
    pub fn inputs(&self) -> usize {
        self.network.layers[0]
    }

    pub fn outputs(&self) -> usize {
        self.network.layers[self.network.layers.len() - 1]
    }

    pub fn option_set(&self) -> Result<PulseOptionSet, DataError> {
        self.pulses.option_set()
    }

    /// Checks every invariant, reporting the first violation with its path.
    pub fn validate(&self) -> Result<(), DataError> {
        let at = |path: &str, r: crate::Result<()>| {
            r.map_err(|e| DataError::Schema { path: path.to_string(), reason: strip_prefix(e.to_string()) })
        };
        let fail = |path: &str, reason: String| Err(DataError::Schema { path: path.to_string(), reason });

        let layers = &self.network.layers;
        if layers.len() != 2 {
            return fail("network.layers", format!("expected [inputs, outputs], got {} sizes", layers.len()));
        }
        if let Some(k) = layers.iter().position(|&n| n == 0) {
            return fail(&format!("network.layers[{k}]"), "layer size must be positive".into());
        }
        match &self.neuron {
            NeuronConfig::Lif(c) => {
                if !(c.threshold > 0.0 && c.threshold.is_finite()) {
                    return fail("neuron.threshold", format!("{} must be positive", c.threshold));
                }
                at("neuron.leak_factor", c.validate())?;
            }
            NeuronConfig::Izhikevich(c) => at("neuron", c.validate())?,
        }
        match &self.rule {
            RuleConfig::Delta(c) => at("rule.learning_rate", c.validate())?,
            RuleConfig::Stdp(c) => at("rule", c.validate())?,
        }
        at("device", self.device.validate())?;

        let a = &self.array;
        if a.rows == 0 || a.cols == 0 {
            return fail("array", format!("{}x{} array must be non-empty", a.rows, a.cols));
        }
        if !(a.r_init_mean > 0.0 && a.r_init_mean.is_finite()) {
            return fail("array.r_init_mean", format!("{} must be positive", a.r_init_mean));
        }
        if !(0.0..1.0).contains(&a.r_init_jitter_rel) {
            return fail("array.r_init_jitter_rel", format!("{} must lie in [0, 1)", a.r_init_jitter_rel));
        }
        let synapses = layers[0] * layers[1];
        if synapses > a.rows * a.cols {
            return fail("array", format!("{synapses} synapses do not fit on {} devices", a.rows * a.cols));
        }
        self.option_set()?;
        if self.policy.r_tolerance <= 0.0 || !self.policy.r_tolerance.is_finite() {
            return fail("policy.r_tolerance", format!("{} must be positive", self.policy.r_tolerance));
        }
        at("policy.max_steps", self.policy.validate())?;
        at("read_noise", self.read_noise.validate())?;

        let r = &self.run;
        if r.minibatch == 0 {
            return fail("run.minibatch", "must be at least 1".into());
        }
        for (k, &(pre, post)) in r.watch.iter().enumerate() {
            if pre >= layers[0] || post >= layers[1] {
                return fail(&format!("run.watch[{k}]"), format!("synapse {pre}-{post} is outside the network"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn strip_prefix(msg: String) -> String {
    msg.strip_prefix("invalid parameters: ").map(str::to_string).unwrap_or(msg)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = match serde_path_to_error::deserialize(de) {
        Ok(cfg) => cfg,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Data => DataError::Schema { path, reason: data_reason(&inner) },
                _ => DataError::Syntax { line: inner.line(), column: inner.column(), message: data_reason(&inner) },
            });
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn data_reason(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(pos) => msg[..pos].to_string(),
        None => msg,
    }
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, DataError> {
    parse_config(&super::read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_I: &str = r#"{
        "device": { "a_p": 0.21389, "a_n": -0.81302, "t_p": 1.6591, "t_n": 1.5148,
                    "a0_p": 37087, "a1_p": -20193, "a0_n": 43430, "a1_n": 34333 },
        "array": { "rows": 100, "cols": 100 },
        "neuron": { "model": "lif", "threshold": 0.01 },
        "rule": { "kind": "delta", "learning_rate": 3.5e-6 },
        "policy": { "r_tolerance": 0.001, "max_steps": 5 }
    }"#;

    #[test]
    fn table_i_config_echoes_values() {
        let cfg = parse_config(TABLE_I).unwrap();
        assert_eq!(cfg.device, DeviceParams::tiox());
        assert_eq!(cfg.device.a_p, 0.21389);
        assert_eq!(cfg.policy.max_steps, 5);
        assert_eq!(cfg.policy.r_tolerance, 1e-3);
        assert_eq!(cfg.neuron, NeuronConfig::Lif(LifConfig { threshold: 0.01, leak_factor: 1.0 }));
        assert_eq!(cfg.rule, RuleConfig::Delta(DeltaRuleConfig { learning_rate: 3.5e-6 }));
        assert_eq!((cfg.array.rows, cfg.array.cols), (100, 100));
    }

    #[test]
    fn empty_document_is_a_syntax_error() {
        assert!(matches!(parse_config(""), Err(DataError::Syntax { line: 1, .. })));
        assert!(matches!(parse_config("{\n  \"run\": {\n"), Err(DataError::Syntax { line: 3, .. })));
    }

    #[test]
    fn empty_object_takes_defaults() {
        assert_eq!(parse_config("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn negative_threshold_is_a_schema_violation() {
        let err = parse_config(r#"{ "neuron": { "model": "lif", "threshold": -1 } }"#).unwrap_err();
        match err {
            DataError::Schema { path, .. } => assert_eq!(path, "neuron.threshold"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_paths() {
        let path_of = |text: &str| match parse_config(text).unwrap_err() {
            DataError::Schema { path, .. } => path,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(path_of(r#"{ "run": { "epochz": 3 } }"#), "run.epochz");
        assert_eq!(path_of(r#"{ "run": { "epochs": "x" } }"#), "run.epochs");
        assert_eq!(path_of(r#"{ "array": { "scheme": "diagonal" } }"#), "array.scheme");
        assert_eq!(path_of(r#"{ "network": { "layers": [484, 10] }, "array": { "rows": 10 } }"#), "array");
        assert_eq!(path_of(r#"{ "run": { "watch": [[500, 1]] } }"#), "run.watch[0]");
        assert_eq!(path_of(r#"{ "pulses": { "amplitudes": [1.0] } }"#), "pulses");
        assert_eq!(path_of(r#"{ "policy": { "max_steps": 0 } }"#), "policy.max_steps");
        assert_eq!(path_of(r#"{ "surprise": 1 }"#), "surprise");
    }

    #[test]
    fn explicit_pulse_options_and_izhikevich() {
        let cfg = parse_config(
            r#"{ "pulses": { "options": [{ "amplitude": -1.2, "width": 1e-5 }, { "amplitude": 1.2, "width": 1e-5 }] },
                 "neuron": { "model": "izhikevich", "presentation_steps": 10 },
                 "rule": { "kind": "stdp", "tau_plus": 4 } }"#,
        )
        .unwrap();
        assert_eq!(cfg.option_set().unwrap().pulses().len(), 2);
        assert!(matches!(cfg.neuron, NeuronConfig::Izhikevich(c) if c.presentation_steps == 10));
        assert!(matches!(cfg.rule, RuleConfig::Stdp(c) if c.tau_plus == 4.0 && c.a_plus == 3.5e-6));
    }

    #[test]
    fn serialization_round_trips_and_digest_is_stable() {
        let cfg = parse_config(TABLE_I).unwrap();
        let again = parse_config(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.digest(), again.digest());
        let mut other = cfg.clone();
        other.run.seed = 9;
        assert_ne!(cfg.digest(), other.digest());
    }
}
