//! Training and evaluation of a single-layer winner-take-all network whose
//! weights live either on a device array (through a port) or in memory.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bridge::{DeviceArrayPort, VirtualPort};
use crate::crossbar::{BiasScheme, Crossbar};
use crate::data_io::config::{NeuronConfig, RuleConfig};
use crate::data_io::connectivity::Dims;
use crate::data_io::mnist::MnistDir;
use crate::data_io::{preprocess, ConnectivityMatrix, RunConfig, StimuliSet};
use crate::neuron::{izhikevich_step, lif_step, wta_arbitrate, LayerState};
use crate::plasticity::{stdp_update, target_resistance, LearningRule, ResistanceWindow, WeightDelta};
use crate::programmer::{program, ProgramPolicy, PulseOptionSet};
use crate::rng::{self, Stream};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RunMode {
    /// Weights are device conductances written by the programmer.
    #[default]
    #[serde(rename = "memristor")]
    Memristor,
    /// Weights are plain numbers updated exactly.
    #[serde(rename = "baseline", alias = "baseline-float")]
    Baseline,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Memristor => "memristor",
            RunMode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "memristor" => Ok(RunMode::Memristor),
            "baseline" | "baseline-float" => Ok(RunMode::Baseline),
            other => Err(format!("unknown mode '{other}' (expected memristor or baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub spikes: Vec<u8>,
    pub label: Option<usize>,
    /// Position in the source set.
    pub id: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn from_mnist(dir: &MnistDir) -> Result<Self> {
        let convert = |set: &[crate::data_io::LabeledImage]| -> Result<Vec<Sample>> {
            set.iter()
                .enumerate()
                .map(|(id, im)| Ok(Sample { spikes: preprocess(&im.pixels)?, label: Some(im.label as usize), id }))
                .collect()
        };
        Ok(Self { train: convert(&dir.train)?, test: convert(&dir.test)? })
    }

    /// Every stimulus step becomes one sample; the test split is optional.
    pub fn from_stimuli(train: &StimuliSet, test: Option<&StimuliSet>) -> Self {
        let convert = |set: &StimuliSet| {
            set.steps
                .iter()
                .enumerate()
                .map(|(id, s)| Sample { spikes: s.spikes.clone(), label: s.label, id })
                .collect()
        };
        Self { train: convert(train), test: test.map(convert).unwrap_or_default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based; 0 marks the record of an untrained network.
    pub epoch: usize,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub epoch: usize,
    pub pre: usize,
    pub post: usize,
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireRecord {
    pub epoch: usize,
    /// Global presentation counter.
    pub presentation: usize,
    pub sample: usize,
    pub label: String,
    pub winner: Option<usize>,
}

/// One device programming request issued during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramEvent {
    pub presentation: usize,
    pub row: usize,
    pub col: usize,
    pub r_before: f64,
    pub target: f64,
    pub final_r: f64,
    pub steps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProgrammingStats {
    pub programs: u64,
    pub converged: u64,
    pub not_converged: u64,
    pub pulses: u64,
    pub verify_reads: u64,
    pub refresh_reads: u64,
    pub clamped_targets: u64,
    pub saturated_targets: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub config_digest: String,
    pub mode: RunMode,
    pub scheme: BiasScheme,
    pub epochs: Vec<EpochRecord>,
    pub traces: Vec<TracePoint>,
    pub fires: Vec<FireRecord>,
    pub snapshot_pre: Matrix,
    pub snapshot_post: Matrix,
    pub stats: ProgrammingStats,
    /// Programming requests that ended outside tolerance.
    pub not_converged: Vec<ProgramEvent>,
}

impl RunLog {
    pub fn final_train_acc(&self) -> Option<f64> {
        self.epochs.iter().rev().find_map(|e| e.train_acc)
    }

    pub fn final_test_acc(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_acc)
    }
}

/// The array a configuration describes, drawn from the run seed.
pub fn initial_crossbar(cfg: &RunConfig) -> Result<Crossbar> {
    let a = &cfg.array;
    let mut rng = rng::stream(cfg.run.seed, Stream::ArrayInit);
    Crossbar::initialize(a.rows, a.cols, cfg.device, a.scheme, a.r_init_mean, a.r_init_jitter_rel, &mut rng)
}

/// The in-process port a configuration describes.
pub fn virtual_port(cfg: &RunConfig) -> Result<VirtualPort> {
    Ok(VirtualPort::new(initial_crossbar(cfg)?, cfg.read_noise, cfg.run.seed))
}

pub fn dims(cfg: &RunConfig) -> Dims {
    Dims { pre: cfg.inputs(), post: cfg.outputs(), rows: cfg.array.rows, cols: cfg.array.cols }
}

enum PortHandle<'p> {
    Owned(Box<VirtualPort>),
    Borrowed(&'p mut dyn DeviceArrayPort),
}

impl PortHandle<'_> {
    fn get(&mut self) -> &mut dyn DeviceArrayPort {
        match self {
            PortHandle::Owned(p) => p.as_mut(),
            PortHandle::Borrowed(p) => *p,
        }
    }
}

/// Device-backed weights with a cache of the last observed resistances.
struct DeviceWeights<'p> {
    port: PortHandle<'p>,
    rows: usize,
    cols: usize,
    scheme: BiasScheme,
    resistance: Vec<f64>,
    stale: Vec<bool>,
    options: PulseOptionSet,
    window: ResistanceWindow,
    policy: ProgramPolicy,
}

enum Weights<'p> {
    Float,
    Devices(Box<DeviceWeights<'p>>),
}

/// What one training presentation did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub winner: Option<usize>,
    pub programmed: Vec<ProgramEvent>,
}

pub struct Network<'p> {
    cfg: RunConfig,
    dims: Dims,
    /// Device of each synapse, indexed `pre·post_count + post`.
    map: Vec<Option<(usize, usize)>>,
    /// Conductance seen by the neurons, `pre × post`.
    g: Matrix,
    weights: Weights<'p>,
    layer: LayerState,
    rule: Box<dyn LearningRule>,
    last_pre: Vec<Option<u64>>,
    last_post: Vec<Option<u64>>,
    presentations: usize,
    stats: ProgrammingStats,
    initial: Matrix,
}

struct NoRule;

impl LearningRule for NoRule {
    fn weight_delta(&self, _: &[u8], _: &[u8], _: &[u8]) -> Result<WeightDelta> {
        Ok(WeightDelta::default())
    }
}

impl<'p> Network<'p> {
    /// Builds the network. In memristor mode `port` is used when given;
    /// otherwise the configuration's virtual array is created. Baseline mode
    /// ignores `port`.
    pub fn new(
        cfg: &RunConfig,
        connectivity: Option<&ConnectivityMatrix>,
        port: Option<&'p mut dyn DeviceArrayPort>,
    ) -> Result<Self> {
        cfg.validate()?;
        let dims = dims(cfg);
        let conn = match connectivity {
            Some(c) => {
                c.validate(dims)?;
                c.clone()
            }
            None => ConnectivityMatrix::dense(dims),
        };
        let map = conn.lookup(dims);
        let rule: Box<dyn LearningRule> = match cfg.rule {
            RuleConfig::Delta(c) => Box::new(c),
            RuleConfig::Stdp(_) => Box::new(NoRule),
        };
        let layer = match cfg.neuron {
            NeuronConfig::Lif(_) => LayerState::new(dims.post),
            NeuronConfig::Izhikevich(c) => LayerState::izhikevich_at(dims.post, c.c, &c),
        };
        let mut net = Self {
            cfg: cfg.clone(),
            dims,
            map,
            g: Matrix::zeros(dims.pre, dims.post),
            weights: Weights::Float,
            layer,
            rule,
            last_pre: vec![None; dims.pre],
            last_post: vec![None; dims.post],
            presentations: 0,
            stats: ProgrammingStats::default(),
            initial: Matrix::zeros(cfg.array.rows, cfg.array.cols),
        };
        match cfg.run.mode {
            RunMode::Baseline => {
                net.initial = initial_crossbar(cfg)?.resistances();
                net.conductances_from_initial();
            }
            RunMode::Memristor => {
                let options = cfg.option_set()?;
                let mut handle = match port {
                    Some(p) => PortHandle::Borrowed(p),
                    None => PortHandle::Owned(Box::new(virtual_port(cfg)?)),
                };
                let desc = handle.get().descriptor();
                if desc.rows != cfg.array.rows || desc.cols != cfg.array.cols {
                    return Err(Error::Dimension(format!(
                        "port exposes {}x{} devices, configuration expects {}x{}",
                        desc.rows, desc.cols, cfg.array.rows, cfg.array.cols
                    )));
                }
                let mut dw = DeviceWeights {
                    port: handle,
                    rows: desc.rows,
                    cols: desc.cols,
                    scheme: cfg.array.scheme,
                    resistance: vec![0.0; desc.rows * desc.cols],
                    stale: vec![false; desc.rows * desc.cols],
                    window: ResistanceWindow::from_options(&cfg.device, &options),
                    options,
                    policy: cfg.policy,
                };
                for r in 0..dw.rows {
                    for c in 0..dw.cols {
                        dw.resistance[r * dw.cols + c] = dw.port.get().read_resistance(r, c)?;
                    }
                }
                net.initial = Matrix::from_vec(dw.rows, dw.cols, dw.resistance.clone());
                net.weights = Weights::Devices(Box::new(dw));
                net.conductances_from_initial();
            }
        }
        Ok(net)
    }

    fn conductances_from_initial(&mut self) {
        for i in 0..self.dims.pre {
            for j in 0..self.dims.post {
                if let Some((r, c)) = self.map[i * self.dims.post + j] {
                    self.g.set(i, j, 1.0 / self.initial.get(r, c));
                }
            }
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &ProgrammingStats {
        &self.stats
    }

    /// Array resistances before any training.
    pub fn initial_snapshot(&self) -> &Matrix {
        &self.initial
    }

    pub fn device_of(&self, pre: usize, post: usize) -> Option<(usize, usize)> {
        self.map.get(pre * self.dims.post + post).copied().flatten()
    }

    /// Re-reads stale devices backing the synapses of `pres`.
    fn refresh_rows(&mut self, pres: impl Iterator<Item = usize>) -> Result<()> {
        let Weights::Devices(dw) = &mut self.weights else { return Ok(()) };
        for i in pres {
            for j in 0..self.dims.post {
                if let Some((r, c)) = self.map[i * self.dims.post + j] {
                    let k = r * dw.cols + c;
                    if dw.stale[k] {
                        let ohms = dw.port.get().read_resistance(r, c)?;
                        self.stats.refresh_reads += 1;
                        dw.resistance[k] = ohms;
                        dw.stale[k] = false;
                        self.g.set(i, j, 1.0 / ohms);
                    }
                }
            }
        }
        Ok(())
    }

    /// Current conductance of a synapse (0 when unmapped).
    pub fn conductance(&mut self, pre: usize, post: usize) -> Result<f64> {
        self.refresh_rows(std::iter::once(pre))?;
        Ok(self.g.get(pre, post))
    }

    /// The full `pre × post` conductance matrix.
    pub fn conductances(&mut self) -> Result<Matrix> {
        self.refresh_rows(0..self.dims.pre)?;
        Ok(self.g.clone())
    }

    /// Resistance of every array device; baseline mode reports `1/G` on
    /// mapped devices and the initial draw elsewhere.
    pub fn snapshot(&mut self) -> Result<Matrix> {
        match &mut self.weights {
            Weights::Float => {
                let mut m = self.initial.clone();
                for i in 0..self.dims.pre {
                    for j in 0..self.dims.post {
                        if let Some((r, c)) = self.map[i * self.dims.post + j] {
                            let g = self.g.get(i, j);
                            m.set(r, c, if g > 0.0 { 1.0 / g } else { f64::INFINITY });
                        }
                    }
                }
                Ok(m)
            }
            Weights::Devices(dw) => {
                let mut data = Vec::with_capacity(dw.rows * dw.cols);
                for r in 0..dw.rows {
                    for c in 0..dw.cols {
                        data.push(dw.port.get().read_resistance(r, c)?);
                    }
                }
                Ok(Matrix::from_vec(dw.rows, dw.cols, data))
            }
        }
    }

    /// Winner for one input vector; never changes weights.
    pub fn infer(&mut self, spikes: &[u8]) -> Result<Option<usize>> {
        if spikes.len() != self.dims.pre {
            return Err(Error::Dimension(format!("{} spikes for {} inputs", spikes.len(), self.dims.pre)));
        }
        let active: Vec<usize> = (0..spikes.len()).filter(|&i| spikes[i] != 0).collect();
        self.refresh_rows(active.into_iter())?;
        match self.cfg.neuron {
            NeuronConfig::Lif(c) => {
                lif_step(&mut self.layer, &self.g, spikes, &c)?;
                Ok(wta_arbitrate(&mut self.layer, c.threshold))
            }
            NeuronConfig::Izhikevich(c) => {
                let mut drive = vec![0.0; self.dims.post];
                for (i, _) in spikes.iter().enumerate().filter(|(_, &s)| s != 0) {
                    for (d, g) in drive.iter_mut().zip(self.g.row(i)) {
                        *d += g;
                    }
                }
                drive.iter_mut().for_each(|d| *d *= c.input_gain);
                let fresh = LayerState::izhikevich_at(self.dims.post, c.c, &c);
                self.layer.membranes = fresh.membranes;
                self.layer.recovery = fresh.recovery;
                let mut counts = vec![0usize; self.dims.post];
                for _ in 0..c.presentation_steps {
                    for j in izhikevich_step(&mut self.layer, &drive, &c)? {
                        counts[j] += 1;
                    }
                }
                let mut winner: Option<usize> = None;
                for (j, &n) in counts.iter().enumerate() {
                    if n > 0 && winner.is_none_or(|w| n > counts[w]) {
                        winner = Some(j);
                    }
                }
                self.layer.fired.iter_mut().enumerate().for_each(|(j, f)| *f = u8::from(Some(j) == winner));
                self.layer.fire_history.push(winner);
                Ok(winner)
            }
        }
    }

    /// Fraction of samples whose winner equals the label.
    pub fn evaluate(&mut self, samples: &[Sample]) -> Result<f64> {
        let labeled: Vec<&Sample> = samples.iter().filter(|s| s.label.is_some()).collect();
        if labeled.is_empty() {
            return Err(Error::InvalidParams("evaluation set has no labeled samples".into()));
        }
        let mut correct = 0usize;
        for s in &labeled {
            if self.infer(&s.spikes)? == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / labeled.len() as f64)
    }

    /// Inference followed by a weight update.
    pub fn train_sample(&mut self, sample: &Sample) -> Result<StepReport> {
        let winner = self.infer(&sample.spikes)?;
        let t = self.presentations as u64;
        self.presentations += 1;
        let delta = match self.cfg.rule {
            RuleConfig::Delta(_) => match sample.label {
                Some(label) => {
                    let fired = self.layer.fired.clone();
                    let target: Vec<u8> = (0..self.dims.post).map(|j| u8::from(j == label)).collect();
                    self.rule.weight_delta(&sample.spikes, &fired, &target)?
                }
                None => WeightDelta::default(),
            },
            RuleConfig::Stdp(c) => {
                for (i, &s) in sample.spikes.iter().enumerate() {
                    if s != 0 {
                        self.last_pre[i] = Some(t);
                    }
                }
                if let Some(w) = winner {
                    self.last_post[w] = Some(t);
                }
                let mut d = stdp_update(&self.last_pre, &self.last_post, &c);
                d.entries.retain(|e| self.last_pre[e.pre] == Some(t) || self.last_post[e.post] == Some(t));
                d
            }
        };
        let programmed = self.apply(delta, t as usize)?;
        Ok(StepReport { winner, programmed })
    }

    fn apply(&mut self, delta: WeightDelta, presentation: usize) -> Result<Vec<ProgramEvent>> {
        let post = self.dims.post;
        let Weights::Devices(dw) = &mut self.weights else {
            for e in delta.entries {
                if self.map[e.pre * post + e.post].is_some() {
                    let g = self.g.get(e.pre, e.post);
                    self.g.set(e.pre, e.post, g + e.dg);
                }
            }
            return Ok(vec![]);
        };
        let mut writes: Vec<(usize, usize, f64)> =
            delta.entries.iter().filter_map(|e| self.map[e.pre * post + e.post].map(|(r, c)| (r, c, e.dg))).collect();
        writes.sort_by_key(|w| (w.0, w.1));

        let mut events = Vec::with_capacity(writes.len());
        for (r, c, dg) in writes {
            let k = r * dw.cols + c;
            if dw.stale[k] {
                dw.resistance[k] = dw.port.get().read_resistance(r, c)?;
                dw.stale[k] = false;
                self.stats.refresh_reads += 1;
            }
            let r_before = dw.resistance[k];
            let target = target_resistance(r_before, dg, dw.window);
            self.stats.clamped_targets += u64::from(target.clamped);
            self.stats.saturated_targets += u64::from(target.saturated);
            let result = program(dw.port.get(), r, c, target.ohms, &dw.options, &dw.policy, &self.cfg.device)
                .map_err(Error::Port)?;
            self.stats.programs += 1;
            self.stats.pulses += result.steps_used as u64;
            self.stats.verify_reads += result.steps_used as u64 + 1;
            if result.converged {
                self.stats.converged += 1;
            } else {
                self.stats.not_converged += 1;
            }
            if dw.scheme == BiasScheme::SelectorlessHalfVoltage && result.steps_used > 0 {
                for cc in 0..dw.cols {
                    dw.stale[r * dw.cols + cc] = true;
                }
                for rr in 0..dw.rows {
                    dw.stale[rr * dw.cols + c] = true;
                }
            }
            dw.resistance[k] = result.final_r;
            dw.stale[k] = false;
            events.push(ProgramEvent {
                presentation,
                row: r,
                col: c,
                r_before,
                target: target.ohms,
                final_r: result.final_r,
                steps: result.steps_used,
                converged: result.converged,
            });
        }
        // Keep the neuron-facing matrix in step with the cache.
        let cols = dw.cols;
        for i in 0..self.dims.pre {
            for j in 0..post {
                if let Some((r, c)) = self.map[i * post + j] {
                    let k = r * cols + c;
                    if !dw.stale[k] {
                        self.g.set(i, j, 1.0 / dw.resistance[k]);
                    }
                }
            }
        }
        Ok(events)
    }
}

/// Runs the configured epochs on `data` and evaluates on the test slice.
pub fn run_training(
    cfg: &RunConfig,
    data: &Dataset,
    connectivity: Option<&ConnectivityMatrix>,
    port: Option<&mut dyn DeviceArrayPort>,
) -> Result<RunLog> {
    let mut net = Network::new(cfg, connectivity, port)?;
    let run = &cfg.run;
    if run.epochs > 0 && data.train.is_empty() {
        return Err(Error::InvalidParams("training set is empty".into()));
    }
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    if run.shuffle {
        order.shuffle(&mut rng::stream(run.seed, Stream::Shuffle));
    }

    let mut log = RunLog {
        seed: run.seed,
        config_digest: cfg.digest(),
        mode: run.mode,
        scheme: cfg.array.scheme,
        epochs: vec![],
        traces: vec![],
        fires: vec![],
        snapshot_pre: net.initial_snapshot().clone(),
        snapshot_post: Matrix::zeros(0, 0),
        stats: ProgrammingStats::default(),
        not_converged: vec![],
    };

    let mut cursor = 0usize;
    for epoch in 1..=run.epochs {
        let (mut correct, mut labeled) = (0usize, 0usize);
        for _ in 0..run.minibatch {
            let sample = &data.train[order[cursor % order.len()]];
            cursor += 1;
            let presentation = log.fires.len();
            let report = net.train_sample(sample)?;
            if let Some(label) = sample.label {
                labeled += 1;
                correct += usize::from(report.winner == Some(label));
            }
            log.not_converged.extend(report.programmed.into_iter().filter(|e| !e.converged));
            log.fires.push(FireRecord {
                epoch,
                presentation,
                sample: sample.id,
                label: sample.label.map(|l| l.to_string()).unwrap_or_default(),
                winner: report.winner,
            });
        }
        for &(pre, post) in &run.watch {
            let conductance = net.conductance(pre, post)?;
            log.traces.push(TracePoint { epoch, pre, post, conductance });
        }
        let train_acc = (labeled > 0).then(|| correct as f64 / labeled as f64);
        log.epochs.push(EpochRecord { epoch, train_acc, test_acc: None });
    }

    let test = &data.test[..run.test_samples.min(data.test.len())];
    let test_acc = if test.iter().any(|s| s.label.is_some()) { Some(net.evaluate(test)?) } else { None };
    match log.epochs.last_mut() {
        Some(last) => last.test_acc = test_acc,
        None => log.epochs.push(EpochRecord { epoch: 0, train_acc: None, test_acc }),
    }
    log.snapshot_post = if run.epochs == 0 { log.snapshot_pre.clone() } else { net.snapshot()? };
    log.stats = net.stats().clone();
    Ok(log)
}
