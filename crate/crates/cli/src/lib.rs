//! Command-line front end. Every subcommand is a thin wrapper over library
//! calls in `memsim`; [`run`] is what the binary executes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use memsim::bridge::{MockServer, PortSpec, RemotePort, VirtualPort};
use memsim::data_io::artifacts::{characterize_csv, render_analysis, write_artifacts, SNAPSHOT_POST};
use memsim::data_io::config::load_config;
use memsim::data_io::{
    load_mnist_dir, parse_connectivity, parse_snapshot, parse_stimuli, write_snapshot, ConnectivityMatrix, RunConfig,
    StimuliSet,
};
use memsim::engine::{dims, run_training, virtual_port, Dataset, RunMode};
use memsim::programmer::program;
use memsim::{BiasScheme, Crossbar, DataError, DeviceArrayPort, Error};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "memsim", version, about = "Memristive crossbar and spiking network emulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write run artifacts.
    Train(TrainArgs),
    /// Evaluate an untrained or snapshot-initialized network.
    Test(TestArgs),
    /// Program one device to a target resistance with predict-write-verify.
    Program(ProgramArgs),
    /// Emit switching curves (resistance after each pulse) as CSV.
    Characterize(CharacterizeArgs),
    /// Render SVG plots from the CSV artifacts of a run.
    Analyze(AnalyzeArgs),
    /// Serve a virtual array over the instrument text protocol.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Stimuli CSV (t,label,s0..).
    #[arg(long, value_name = "PATH")]
    pub stimuli: Option<PathBuf>,
    /// Directory holding the four MNIST IDX files.
    #[arg(long, value_name = "DIR")]
    pub mnist: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Connectivity CSV (pre,post,row,col); dense mapping if absent.
    #[arg(long, value_name = "PATH")]
    pub connectivity: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<RunMode>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<BiasScheme>,
    /// `virtual` or `remote:HOST:PORT`.
    #[arg(long, default_value = "virtual", value_parser = parse_port)]
    pub port: PortSpec,
    /// Synapses to trace, as "pre-post,pre-post,...".
    #[arg(long, value_parser = parse_watch)]
    pub watch: Option<WatchList>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[command(flatten)]
    pub source: Source,
    /// Held-out stimuli evaluated after training (with --stimuli).
    #[arg(long, value_name = "PATH", requires = "stimuli")]
    pub test_stimuli: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Evaluation set: the stimuli file, or the MNIST test split.
    #[command(flatten)]
    pub source: Source,
    /// Resistance snapshot loaded into the virtual array before evaluation.
    #[arg(long, value_name = "PATH")]
    pub snapshot: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ProgramArgs {
    /// Device, pulse and policy settings; defaults when absent.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub row: usize,
    #[arg(long)]
    pub col: usize,
    /// Target resistance in ohms.
    #[arg(long)]
    pub target: f64,
    /// Resistance snapshot loaded into the virtual array first.
    #[arg(long, value_name = "PATH")]
    pub snapshot: Option<PathBuf>,
    /// Directory receiving the post-programming snapshot (virtual port only).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "virtual", value_parser = parse_port)]
    pub port: PortSpec,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    /// Device parameters are taken from the config; TiOx defaults when absent.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1.2,1.2")]
    pub amplitudes: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub pulses: usize,
    #[arg(long, default_value_t = 11000.0)]
    pub r_start: f64,
    /// Pulse width in seconds.
    #[arg(long, default_value_t = 1e-5)]
    pub width: f64,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Run directory written by `train`.
    #[arg(long, value_name = "DIR")]
    pub run: PathBuf,
    /// Output directory; the run directory when absent.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub bind: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    s.parse()
}

fn parse_scheme(s: &str) -> Result<BiasScheme, String> {
    s.parse()
}

fn parse_port(s: &str) -> Result<PortSpec, String> {
    s.parse()
}

/// Synapses `(pre, post)` given as "pre-post,pre-post,...".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatchList(pub Vec<(usize, usize)>);

pub fn parse_watch(s: &str) -> Result<WatchList, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair.trim().split_once('-').ok_or_else(|| format!("'{pair}' is not of the form pre-post"))?;
            let num = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("'{pair}' is not of the form pre-post"));
            Ok((num(a)?, num(b)?))
        })
        .collect::<Result<_, _>>()
        .map(WatchList)
}

/// A failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_DATA, message: e.to_string() }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_RUNTIME, message: e.to_string() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Port(_) | Error::Io { .. } => CliError::runtime(e),
            _ => CliError::data(e),
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// exit code; diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Test(a) => cmd_test(&a, out),
        Command::Program(a) => cmd_program(&a, out),
        Command::Characterize(a) => cmd_characterize(&a, out),
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Serve(a) => cmd_serve(&a, out),
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::data(format!("missing file {}", path.display())),
        _ => CliError::data(format!("{}: {e}", path.display())),
    })
}

fn config_from(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => load_config(p).map_err(|e| CliError::data(format!("{}: {e}", p.display()))),
        None => Ok(RunConfig::default()),
    }
}

fn configure(path: &Path, o: &Overrides) -> Result<(RunConfig, Option<ConnectivityMatrix>), CliError> {
    let mut cfg = config_from(Some(path))?;
    if let Some(seed) = o.seed {
        cfg.run.seed = seed;
    }
    if let Some(mode) = o.mode {
        cfg.run.mode = mode;
    }
    if let Some(scheme) = o.scheme {
        cfg.array.scheme = scheme;
    }
    if let Some(watch) = &o.watch {
        cfg.run.watch = watch.0.clone();
    }
    cfg.validate().map_err(CliError::data)?;
    let conn = match &o.connectivity {
        Some(p) => Some(
            parse_connectivity(&read_input(p)?, dims(&cfg))
                .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    Ok((cfg, conn))
}

fn load_stimuli(path: &Path, cfg: &RunConfig) -> Result<StimuliSet, CliError> {
    parse_stimuli(&read_input(path)?, cfg.inputs(), cfg.outputs())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_mnist(dir: &Path) -> Result<Dataset, CliError> {
    let mnist = load_mnist_dir(dir).map_err(CliError::data)?;
    Ok(Dataset::from_mnist(&mnist)?)
}

fn open_port(spec: &PortSpec, cfg: &RunConfig, snapshot: Option<&Path>) -> Result<Box<dyn DeviceArrayPort>, CliError> {
    match spec {
        PortSpec::Virtual => match snapshot {
            Some(p) => {
                let m = parse_snapshot(&read_input(p)?).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
                let cb = Crossbar::from_resistances(m.rows(), m.cols(), m.as_slice(), cfg.device, cfg.array.scheme)
                    .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
                Ok(Box::new(VirtualPort::new(cb, cfg.read_noise, cfg.run.seed)))
            }
            None => Ok(Box::new(virtual_port(cfg)?)),
        },
        PortSpec::Remote(endpoint) => {
            if snapshot.is_some() {
                return Err(CliError::usage("--snapshot only applies to the virtual port"));
            }
            Ok(Box::new(RemotePort::connect(endpoint).map_err(CliError::runtime)?))
        }
    }
}

fn fmt_acc(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (cfg, conn) = configure(&a.config, &a.overrides)?;
    let data = match (&a.source.stimuli, &a.source.mnist) {
        (Some(p), _) => {
            let train = load_stimuli(p, &cfg)?;
            let test = a.test_stimuli.as_deref().map(|t| load_stimuli(t, &cfg)).transpose()?;
            Dataset::from_stimuli(&train, test.as_ref())
        }
        (None, Some(dir)) => load_mnist(dir)?,
        (None, None) => unreachable!("clap enforces a source"),
    };
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::runtime(format!("{}: {e}", a.out.display())))?;

    let mut port = match cfg.run.mode {
        RunMode::Memristor => Some(open_port(&a.overrides.port, &cfg, None)?),
        RunMode::Baseline => None,
    };
    let log = run_training(&cfg, &data, conn.as_ref(), port.as_deref_mut().map(|p| p as &mut dyn DeviceArrayPort))?;
    write_artifacts(&log, &a.out).map_err(CliError::runtime)?;
    writeln!(out, "train={} test={}", fmt_acc(log.final_train_acc()), fmt_acc(log.final_test_acc()))
        .map_err(CliError::runtime)
}

pub fn cmd_test(a: &TestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (mut cfg, conn) = configure(&a.config, &a.overrides)?;
    cfg.run.epochs = 0;
    let data = match (&a.source.stimuli, &a.source.mnist) {
        (Some(p), _) => {
            let set = load_stimuli(p, &cfg)?;
            Dataset::from_stimuli(&StimuliSet { width: set.width, steps: vec![] }, Some(&set))
        }
        (None, Some(dir)) => load_mnist(dir)?,
        (None, None) => unreachable!("clap enforces a source"),
    };
    let mut port = match cfg.run.mode {
        RunMode::Memristor => Some(open_port(&a.overrides.port, &cfg, a.snapshot.as_deref())?),
        RunMode::Baseline if a.snapshot.is_some() => {
            return Err(CliError::usage("--snapshot requires --mode memristor"));
        }
        RunMode::Baseline => None,
    };
    let log = run_training(&cfg, &data, conn.as_ref(), port.as_deref_mut().map(|p| p as &mut dyn DeviceArrayPort))?;
    writeln!(out, "test={}", fmt_acc(log.final_test_acc())).map_err(CliError::runtime)
}

pub fn cmd_program(a: &ProgramArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = config_from(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.run.seed = seed;
    }
    if !(a.target.is_finite() && a.target > 0.0) {
        return Err(CliError::data(format!("target {} must be a positive resistance", a.target)));
    }
    if a.out.is_some() && a.port != PortSpec::Virtual {
        return Err(CliError::usage("--out only applies to the virtual port"));
    }
    let options = cfg.option_set().map_err(CliError::data)?;
    let mut port = open_port(&a.port, &cfg, a.snapshot.as_deref())?;
    let res =
        program(port.as_mut(), a.row, a.col, a.target, &options, &cfg.policy, &cfg.device).map_err(|e| match e {
            memsim::PortError::OutOfBounds { .. } => CliError::data(e),
            _ => CliError::runtime(e),
        })?;
    let w = |e: std::io::Error| CliError::runtime(e);
    writeln!(out, "step,amplitude,width").map_err(w)?;
    for (k, p) in res.pulses_applied.iter().enumerate() {
        writeln!(out, "{},{},{:e}", k + 1, p.amplitude, p.width).map_err(w)?;
    }
    writeln!(out, "converged={} steps={} final_r={}", res.converged, res.steps_used, res.final_r).map_err(w)?;
    if let Some(dir) = &a.out {
        let d = port.descriptor();
        let mut m = memsim::Matrix::zeros(d.rows, d.cols);
        for r in 0..d.rows {
            for c in 0..d.cols {
                m.set(r, c, port.read_resistance(r, c).map_err(CliError::runtime)?);
            }
        }
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join(SNAPSHOT_POST);
        std::fs::write(&path, write_snapshot(&m)).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn cmd_characterize(a: &CharacterizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = config_from(a.config.as_deref())?;
    for &amp in &a.amplitudes {
        memsim::Pulse::new(amp, a.width).validate().map_err(CliError::data)?;
    }
    if !(a.r_start.is_finite() && a.r_start >= cfg.device.r_floor) {
        return Err(CliError::data(format!("start resistance {} is not a valid device state", a.r_start)));
    }
    let curves = memsim::device::switching_curves(&cfg.device, &a.amplitudes, a.width, a.pulses, a.r_start);
    let csv = characterize_csv(&a.amplitudes, &curves);
    match &a.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| CliError::runtime(format!("{}: {e}", path.display()))),
        None => out.write_all(csv.as_bytes()).map_err(CliError::runtime),
    }
}

pub fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dest = a.out.as_deref().unwrap_or(&a.run);
    let written = render_analysis(&a.run, dest).map_err(|e| match e {
        DataError::Io { .. } => CliError::runtime(e),
        _ => CliError::data(e),
    })?;
    for p in written {
        writeln!(out, "{}", p.display()).map_err(CliError::runtime)?;
    }
    Ok(())
}

pub fn cmd_serve(a: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = config_from(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.run.seed = seed;
    }
    let server = MockServer::spawn(virtual_port(&cfg)?, &a.bind)
        .map_err(|e| CliError::runtime(format!("cannot bind {}: {e}", a.bind)))?;
    writeln!(out, "listening on {}", server.endpoint()).map_err(CliError::runtime)?;
    out.flush().map_err(CliError::runtime)?;
    server.join();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn watch_list_parses() {
        assert_eq!(parse_watch("384-6, 10-6").unwrap().0, vec![(384, 6), (10, 6)]);
        assert!(parse_watch("384:6").is_err());
        assert!(parse_watch("a-6").is_err());
    }

    #[test]
    fn missing_config_flag_is_usage_error() {
        let (mut out, mut err) = (vec![], vec![]);
        let code = run(["memsim", "train", "--mnist", "x", "--out", "y"], &mut out, &mut err);
        assert_eq!(code, EXIT_USAGE);
        assert!(String::from_utf8_lossy(&err).contains("--config"));
    }

    #[test]
    fn help_is_not_an_error() {
        let (mut out, mut err) = (vec![], vec![]);
        assert_eq!(run(["memsim", "--help"], &mut out, &mut err), EXIT_OK);
        assert!(String::from_utf8_lossy(&out).contains("characterize"));
    }
}
