//! Device-array ports: the seam between the engine and whatever holds the
//! devices.
//!
//! The wire protocol used by [`RemotePort`] and [`MockServer`] is one UTF-8
//! command per line, answered by exactly one reply line:
//!
//! ```text
//! INFO                    -> OK <rows> <cols> <min_width_s> <max_width_s>
//! READ <r> <c>            -> OK <ohms>
//! PULSE <r> <c> <V> <s>   -> OK
//! GND                     -> OK
//! anything else           -> ERR <code> <text>
//! ```
//!
//! Numbers are decimal; resistances are printed in shortest round-trip form
//! so a remote read is bit-identical to a local one.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::crossbar::Crossbar;
use crate::device::{self, Pulse, ReadNoise};
use crate::rng::{self, SimRng, Stream};
use crate::Error;

pub const ERR_MALFORMED: u32 = 1;
pub const ERR_BOUNDS: u32 = 2;
pub const ERR_BUSY: u32 = 3;
pub const ERR_WIDTH: u32 = 4;
pub const ERR_UNKNOWN: u32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum PortError {
    #[error("could not connect to {endpoint}: {source}")]
    Connect { endpoint: String, source: io::Error },
    #[error("port timed out")]
    Timeout,
    #[error("port I/O failed: {0}")]
    Io(#[source] io::Error),
    #[error("instrument error {code}: {text}")]
    Remote { code: u32, text: String },
    #[error("malformed reply '{0}'")]
    MalformedReply(String),
    #[error("device ({row}, {col}) is outside the {rows}x{cols} array")]
    OutOfBounds { row: usize, col: usize, rows: usize, cols: usize },
    #[error("pulse width {width} s is outside the supported range [{min}, {max}]")]
    UnsupportedWidth { width: f64, min: f64, max: f64 },
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
}

impl From<io::Error> for PortError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => PortError::Timeout,
            _ => PortError::Io(e),
        }
    }
}

/// What a port can address.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortDescriptor {
    pub rows: usize,
    pub cols: usize,
    pub min_width: f64,
    pub max_width: f64,
}

impl PortDescriptor {
    pub fn check(&self, row: usize, col: usize) -> Result<(), PortError> {
        if row >= self.rows || col >= self.cols {
            return Err(PortError::OutOfBounds { row, col, rows: self.rows, cols: self.cols });
        }
        Ok(())
    }

    pub fn check_width(&self, width: f64) -> Result<(), PortError> {
        if !(width >= self.min_width && width <= self.max_width) {
            return Err(PortError::UnsupportedWidth { width, min: self.min_width, max: self.max_width });
        }
        Ok(())
    }
}

pub trait DeviceArrayPort {
    fn descriptor(&self) -> PortDescriptor;
    fn read_resistance(&mut self, row: usize, col: usize) -> Result<f64, PortError>;
    fn apply_pulse(&mut self, row: usize, col: usize, amplitude: f64, width: f64) -> Result<(), PortError>;
    fn ground_all(&mut self) -> Result<(), PortError>;
}

impl<P: DeviceArrayPort + ?Sized> DeviceArrayPort for Box<P> {
    fn descriptor(&self) -> PortDescriptor {
        (**self).descriptor()
    }
    fn read_resistance(&mut self, row: usize, col: usize) -> Result<f64, PortError> {
        (**self).read_resistance(row, col)
    }
    fn apply_pulse(&mut self, row: usize, col: usize, amplitude: f64, width: f64) -> Result<(), PortError> {
        (**self).apply_pulse(row, col, amplitude, width)
    }
    fn ground_all(&mut self) -> Result<(), PortError> {
        (**self).ground_all()
    }
}

/// Pulse widths the virtual array accepts.
pub const VIRTUAL_MIN_WIDTH: f64 = 1e-9;
pub const VIRTUAL_MAX_WIDTH: f64 = 1.0;

/// The in-process virtual array.
#[derive(Debug, Clone)]
pub struct VirtualPort {
    crossbar: Crossbar,
    noise: ReadNoise,
    rng: SimRng,
}

impl VirtualPort {
    /// Read noise draws from the run seed's read-noise stream.
    pub fn new(crossbar: Crossbar, noise: ReadNoise, seed: u64) -> Self {
        Self { crossbar, noise, rng: rng::stream(seed, Stream::ReadNoise) }
    }

    pub fn crossbar(&self) -> &Crossbar {
        &self.crossbar
    }

    pub fn into_crossbar(self) -> Crossbar {
        self.crossbar
    }
}

impl DeviceArrayPort for VirtualPort {
    fn descriptor(&self) -> PortDescriptor {
        PortDescriptor {
            rows: self.crossbar.rows(),
            cols: self.crossbar.cols(),
            min_width: VIRTUAL_MIN_WIDTH,
            max_width: VIRTUAL_MAX_WIDTH,
        }
    }

    fn read_resistance(&mut self, row: usize, col: usize) -> Result<f64, PortError> {
        self.descriptor().check(row, col)?;
        let state = self.crossbar.device(row, col).expect("bounds checked");
        Ok(device::read(state, self.crossbar.params(), self.noise, &mut self.rng))
    }

    fn apply_pulse(&mut self, row: usize, col: usize, amplitude: f64, width: f64) -> Result<(), PortError> {
        let desc = self.descriptor();
        desc.check(row, col)?;
        desc.check_width(width)?;
        self.crossbar.write_selected(row, col, Pulse::new(amplitude, width)).map_err(|e| match e {
            Error::InvalidPulse(msg) => PortError::InvalidPulse(msg),
            other => PortError::InvalidPulse(other.to_string()),
        })
    }

    fn ground_all(&mut self) -> Result<(), PortError> {
        Ok(())
    }
}

/// Client side of the line protocol.
#[derive(Debug)]
pub struct RemotePort {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    descriptor: PortDescriptor,
    line: String,
}

impl RemotePort {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    pub fn connect(endpoint: &str) -> Result<Self, PortError> {
        Self::connect_with_timeout(endpoint, Self::DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(endpoint: &str, timeout: Duration) -> Result<Self, PortError> {
        let connect_err = |source| PortError::Connect { endpoint: endpoint.to_string(), source };
        let addr = endpoint
            .to_socket_addrs()
            .map_err(connect_err)?
            .next()
            .ok_or_else(|| connect_err(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(connect_err)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        let writer = stream.try_clone()?;
        let mut port = Self {
            reader: BufReader::new(stream),
            writer,
            descriptor: PortDescriptor { rows: 0, cols: 0, min_width: 0.0, max_width: 0.0 },
            line: String::new(),
        };
        let info = port.request("INFO")?;
        port.descriptor = parse_info(&info)?;
        Ok(port)
    }

    /// Sends one command and returns the payload after `OK`.
    fn request(&mut self, command: &str) -> Result<String, PortError> {
        self.writer.write_all(command.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.line.clear();
        let n = self.reader.read_line(&mut self.line)?;
        if n == 0 {
            return Err(PortError::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "instrument closed the connection",
            )));
        }
        let reply = self.line.trim_end_matches(['\n', '\r']);
        if reply == "OK" {
            return Ok(String::new());
        }
        if let Some(rest) = reply.strip_prefix("OK ") {
            return Ok(rest.to_string());
        }
        if let Some(rest) = reply.strip_prefix("ERR ") {
            let (code, text) = rest.split_once(' ').unwrap_or((rest, ""));
            let code = code.parse().map_err(|_| PortError::MalformedReply(reply.to_string()))?;
            return Err(PortError::Remote { code, text: text.to_string() });
        }
        Err(PortError::MalformedReply(reply.to_string()))
    }
}

fn parse_info(payload: &str) -> Result<PortDescriptor, PortError> {
    let bad = || PortError::MalformedReply(format!("OK {payload}"));
    let fields: Vec<&str> = payload.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(bad());
    }
    Ok(PortDescriptor {
        rows: fields[0].parse().map_err(|_| bad())?,
        cols: fields[1].parse().map_err(|_| bad())?,
        min_width: fields[2].parse().map_err(|_| bad())?,
        max_width: fields[3].parse().map_err(|_| bad())?,
    })
}

impl DeviceArrayPort for RemotePort {
    fn descriptor(&self) -> PortDescriptor {
        self.descriptor
    }

    fn read_resistance(&mut self, row: usize, col: usize) -> Result<f64, PortError> {
        self.descriptor.check(row, col)?;
        let payload = self.request(&format!("READ {row} {col}"))?;
        payload.trim().parse().map_err(|_| PortError::MalformedReply(format!("OK {payload}")))
    }

    fn apply_pulse(&mut self, row: usize, col: usize, amplitude: f64, width: f64) -> Result<(), PortError> {
        self.descriptor.check(row, col)?;
        self.descriptor.check_width(width)?;
        self.request(&format!("PULSE {row} {col} {amplitude:?} {width:e}"))?;
        Ok(())
    }

    fn ground_all(&mut self) -> Result<(), PortError> {
        self.request("GND").map(|_| ())
    }
}

/// Executes one protocol line against a port and returns the reply line
/// (without the newline). Never panics on malformed input.
pub fn handle_command(port: &mut dyn DeviceArrayPort, line: &str) -> String {
    let mut words = line.split_whitespace();
    let Some(verb) = words.next() else {
        return format!("ERR {ERR_MALFORMED} malformed");
    };
    let args: Vec<&str> = words.collect();
    let reply = match (verb, args.as_slice()) {
        ("INFO", []) => {
            let d = port.descriptor();
            Ok(format!("OK {} {} {:e} {:e}", d.rows, d.cols, d.min_width, d.max_width))
        }
        ("GND", []) => port.ground_all().map(|_| "OK".to_string()),
        ("READ", [r, c]) => match (r.parse::<usize>(), c.parse::<usize>()) {
            (Ok(r), Ok(c)) => port.read_resistance(r, c).map(|v| format!("OK {v:?}")),
            _ => return format!("ERR {ERR_MALFORMED} malformed"),
        },
        ("PULSE", [r, c, a, w]) => match (r.parse::<usize>(), c.parse::<usize>(), a.parse::<f64>(), w.parse::<f64>()) {
            (Ok(r), Ok(c), Ok(a), Ok(w)) if a.is_finite() && w.is_finite() => {
                port.apply_pulse(r, c, a, w).map(|_| "OK".to_string())
            }
            _ => return format!("ERR {ERR_MALFORMED} malformed"),
        },
        ("INFO" | "GND" | "READ" | "PULSE", _) => return format!("ERR {ERR_MALFORMED} malformed"),
        _ => return format!("ERR {ERR_UNKNOWN} unknown command"),
    };
    match reply {
        Ok(line) => line,
        Err(PortError::OutOfBounds { .. }) => format!("ERR {ERR_BOUNDS} out of range"),
        Err(PortError::UnsupportedWidth { .. }) => format!("ERR {ERR_WIDTH} unsupported width"),
        Err(PortError::Remote { code, text }) => format!("ERR {code} {text}"),
        Err(PortError::Timeout) => format!("ERR {ERR_BUSY} busy"),
        Err(e) => format!("ERR {ERR_MALFORMED} {e}"),
    }
}

/// A line-protocol server backed by a [`VirtualPort`]. Serves one client at
/// a time; requests are handled strictly in order.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    port: Arc<Mutex<VirtualPort>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `bind` (use `127.0.0.1:0` for an ephemeral port) and starts
    /// serving in a background thread.
    pub fn spawn(port: VirtualPort, bind: &str) -> io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let port = Arc::new(Mutex::new(port));
        let handle = {
            let stop = Arc::clone(&stop);
            let port = Arc::clone(&port);
            std::thread::spawn(move || serve(listener, &stop, &port))
        };
        Ok(Self { addr, stop, port, handle: Some(handle) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    /// Snapshot of the backing array.
    pub fn crossbar(&self) -> Crossbar {
        self.port.lock().expect("mock server poisoned").crossbar().clone()
    }

    /// Blocks until the server thread exits (it only does so after
    /// [`MockServer::shutdown`]).
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) -> Crossbar {
        self.stop_thread();
        self.crossbar()
    }

    fn stop_thread(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if self.handle.is_some() {
            self.stop_thread();
        }
    }
}

fn serve(listener: TcpListener, stop: &AtomicBool, port: &Mutex<VirtualPort>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        let Ok(stream) = conn else { continue };
        let _ = stream.set_nodelay(true);
        let _ = serve_client(stream, stop, port);
    }
}

fn serve_client(stream: TcpStream, stop: &AtomicBool, port: &Mutex<VirtualPort>) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 || stop.load(Ordering::SeqCst) {
            let _ = writer.shutdown(Shutdown::Both);
            return Ok(());
        }
        let reply = match std::str::from_utf8(&buf) {
            Ok(line) => {
                let mut guard = port.lock().expect("mock server poisoned");
                handle_command(&mut *guard, line.trim_end_matches(['\n', '\r']))
            }
            Err(_) => format!("ERR {ERR_MALFORMED} malformed"),
        };
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
    }
}

/// Port chosen on the command line: `virtual` or `remote:HOST:PORT`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortSpec {
    Virtual,
    Remote(String),
}

impl std::str::FromStr for PortSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "virtual" {
            return Ok(PortSpec::Virtual);
        }
        match s.strip_prefix("remote:") {
            Some(endpoint) if !endpoint.is_empty() => Ok(PortSpec::Remote(endpoint.to_string())),
            _ => Err(format!("invalid port '{s}' (expected virtual or remote:HOST:PORT)")),
        }
    }
}
