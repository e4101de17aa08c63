//! The charging-station daemon.
//!
//! A station listens on a fixed address and port and serves exactly one
//! vehicle at a time. Each session runs the server state machine to a close,
//! records the paid transaction, and leaves a transcript behind; the station
//! then goes back to waiting on the same port.

mod archive;
mod transcript;

use std::fs;
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use chrono::Utc;
use serde::Deserialize;
use serde_json::value::RawValue;
use thiserror::Error;
use tracing::{debug, info, warn};

pub use crate::billing::{make_bill, BillingError};
pub use archive::{archive_request, sanitize_file_name};
pub use transcript::{decode_frame, transcript_path, Transcript, TranscriptEntry, TRANSCRIPTS_DIR};

use crate::decimal::Money;
use crate::ids::IdGenerator;
use crate::protocol::{
    close_reason, decode_message, server_step, ProtocolMessage, ServerSessionState, SessionContext,
    SessionOutcome,
};
use crate::registry::{RegistryError, SharedRegistry, TransactionRecord};
use crate::transport::{FrameTransport, LineTransport, TransportError};
use transcript::{frame_value, TranscriptWriter};

pub const DEFAULT_PORT: u16 = 7431;
pub const DEFAULT_SESSION_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct StationConfig {
    pub station_id: String,
    pub bind_address: IpAddr,
    /// 0 asks the OS for an ephemeral port.
    pub port: u16,
    pub tariff: Money,
    pub data_dir: PathBuf,
    pub archive_dir: PathBuf,
    pub session_timeout: Duration,
    /// Seeds bill and transaction ids; `None` draws from OS entropy.
    pub id_seed: Option<u64>,
}

impl StationConfig {
    pub fn new(station_id: impl Into<String>, tariff: Money, data_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        Self {
            station_id: station_id.into(),
            bind_address: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            tariff,
            archive_dir: data_dir.join("archive"),
            data_dir,
            session_timeout: DEFAULT_SESSION_TIMEOUT,
            id_seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), StationError> {
        if self.station_id.trim().is_empty() {
            return Err(StationError::InvalidConfig("station id is empty".into()));
        }
        if self.tariff.is_zero() {
            return Err(StationError::InvalidConfig("tariff must be > 0".into()));
        }
        if self.session_timeout.is_zero() {
            return Err(StationError::InvalidConfig(
                "session timeout must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StationError {
    #[error("cannot bind {addr}: {source}")]
    BindError { addr: SocketAddr, source: io::Error },
    #[error("station {0:?} is not in the registry")]
    UnknownStation(String),
    #[error("invalid station configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What one session left behind.
#[derive(Debug, Clone)]
pub struct SessionSummary {
    pub session_id: String,
    pub outcome: SessionOutcome,
    pub transcript: Option<PathBuf>,
    pub transaction: Option<TransactionRecord>,
}

#[derive(Deserialize)]
struct FileContentPayload<'a> {
    #[serde(borrow)]
    request: &'a RawValue,
}

pub struct Station {
    config: StationConfig,
    registry: SharedRegistry,
    ids: IdGenerator,
    next_session: u64,
}

impl Station {
    /// Checks the configuration and that the station exists in the registry.
    pub fn new(config: StationConfig, registry: SharedRegistry) -> Result<Self, StationError> {
        config.validate()?;
        if registry.read().station(&config.station_id).is_none() {
            return Err(StationError::UnknownStation(config.station_id.clone()));
        }
        let ids = match config.id_seed {
            Some(seed) => IdGenerator::seeded(seed),
            None => IdGenerator::from_entropy(),
        };
        let next_session = first_free_session_number(&config.data_dir, &config.station_id)?;
        Ok(Self {
            config,
            registry,
            ids,
            next_session,
        })
    }

    pub fn config(&self) -> &StationConfig {
        &self.config
    }

    pub fn bind(&self) -> Result<TcpListener, StationError> {
        let addr = SocketAddr::new(self.config.bind_address, self.config.port);
        TcpListener::bind(addr).map_err(|source| StationError::BindError { addr, source })
    }

    fn next_context(&mut self) -> (String, SessionContext) {
        let session_id = format!("{}-{:06}", self.config.station_id, self.next_session);
        self.next_session += 1;
        let ctx = SessionContext {
            station_id: self.config.station_id.clone(),
            tariff: self.config.tariff,
            bill_id: self.ids.next_id(),
            transaction_id: self.ids.next_id(),
        };
        (session_id, ctx)
    }

    /// Accepts connections one at a time until `stop` is set. The session in
    /// progress when the flag flips still runs to its end.
    pub fn serve(&mut self, listener: &TcpListener, stop: &AtomicBool) {
        info!(
            station = %self.config.station_id,
            addr = ?listener.local_addr().ok(),
            "waiting for vehicles"
        );
        for stream in listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let peer = stream.peer_addr().ok();
            if let Err(e) = self.serve_stream(stream, peer) {
                warn!(?peer, "session setup failed: {e}");
            }
        }
        info!(station = %self.config.station_id, "stopped");
    }

    fn serve_stream(&mut self, stream: TcpStream, peer: Option<SocketAddr>) -> io::Result<()> {
        stream.set_read_timeout(Some(self.config.session_timeout))?;
        stream.set_nodelay(true)?;
        let mut transport = LineTransport::tcp(stream.try_clone()?)?;
        let summary = self.run_session(&mut transport, peer);
        debug!(session = %summary.session_id, outcome = ?summary.outcome, "session closed");
        let _ = stream.shutdown(std::net::Shutdown::Both);
        Ok(())
    }

    /// Drives one session over `transport` until the server machine closes.
    pub fn run_session<T: FrameTransport>(
        &mut self,
        transport: &mut T,
        peer: Option<SocketAddr>,
    ) -> SessionSummary {
        let (session_id, ctx) = self.next_context();
        let authorizer = self.registry.authorizer(ctx.station_id.clone());
        let mut log = SessionLog::open(&self.config.data_dir, &session_id);
        log.write(TranscriptEntry::Meta {
            timestamp: Utc::now(),
            session_id: session_id.clone(),
            context: ctx.clone(),
            peer: peer.map(|p| p.to_string()),
        });

        let mut state = ServerSessionState::AwaitFileName;
        let mut file_name: Option<String> = None;
        let mut transaction = None;

        let outcome = loop {
            if let ServerSessionState::Closed { outcome } = &state {
                break outcome.clone();
            }
            let raw = match transport.recv() {
                Ok(Some(raw)) => raw,
                Ok(None) => break SessionOutcome::protocol_error("vehicle disconnected"),
                Err(TransportError::Timeout) => {
                    self.send(transport, &mut log, close_reason::TIMEOUT);
                    break SessionOutcome::protocol_error("timeout");
                }
                Err(e) => {
                    self.send(transport, &mut log, close_reason::PROTOCOL_ERROR);
                    break SessionOutcome::protocol_error(e.to_string());
                }
            };
            log.write(TranscriptEntry::In {
                timestamp: Utc::now(),
                frame: frame_value(&raw),
            });
            let msg = match decode_message(&raw) {
                Ok(msg) => msg,
                Err(e) => {
                    self.send(transport, &mut log, close_reason::PROTOCOL_ERROR);
                    break SessionOutcome::protocol_error(e.to_string());
                }
            };
            match &msg {
                ProtocolMessage::FileName { name } => file_name = Some(name.clone()),
                ProtocolMessage::FileContent { .. } => {
                    self.archive(&session_id, file_name.as_deref(), &raw);
                }
                _ => {}
            }

            let mut step = server_step(state, msg, &authorizer, &ctx);
            if let Some(draft) = step.draft.take() {
                match self.registry.write().record_transaction(draft) {
                    Ok(record) => transaction = Some(record),
                    Err(e) => {
                        warn!(session = %session_id, "could not record transaction: {e}");
                        step.state = ServerSessionState::Closed {
                            outcome: SessionOutcome::protocol_error(format!(
                                "ledger write failed: {e}"
                            )),
                        };
                        step.outbound = vec![ProtocolMessage::Close {
                            reason: close_reason::PROTOCOL_ERROR.into(),
                        }];
                    }
                }
            }
            state = step.state;
            for out in &step.outbound {
                if let Err(e) = send_logged(transport, &mut log, out) {
                    debug!(session = %session_id, "send failed: {e}");
                    break;
                }
            }
        };

        log.write(TranscriptEntry::Outcome {
            timestamp: Utc::now(),
            outcome: outcome.clone(),
        });
        SessionSummary {
            session_id,
            outcome,
            transcript: log.path(),
            transaction,
        }
    }

    fn send<T: FrameTransport>(&self, transport: &mut T, log: &mut SessionLog, reason: &str) {
        let close = ProtocolMessage::Close {
            reason: reason.to_string(),
        };
        let _ = send_logged(transport, log, &close);
    }

    fn archive(&self, session_id: &str, file_name: Option<&str>, raw: &[u8]) {
        let body = raw.strip_suffix(b"\n").unwrap_or(raw);
        let content = match serde_json::from_slice::<FileContentPayload>(body) {
            Ok(payload) => payload.request.get().as_bytes().to_vec(),
            Err(_) => body.to_vec(),
        };
        let name = file_name.unwrap_or("request.json");
        if let Err(e) = archive_request(&self.config.archive_dir, session_id, name, &content) {
            warn!(session = %session_id, "archiving request failed: {e}");
        }
    }
}

fn send_logged<T: FrameTransport>(
    transport: &mut T,
    log: &mut SessionLog,
    msg: &ProtocolMessage,
) -> Result<(), TransportError> {
    let line = transport.send(msg)?;
    log.write(TranscriptEntry::Out {
        timestamp: Utc::now(),
        frame: frame_value(&line),
    });
    Ok(())
}

/// Best-effort transcript writer: a failing disk never aborts a session.
struct SessionLog {
    writer: Option<TranscriptWriter>,
}

impl SessionLog {
    fn open(data_dir: &Path, session_id: &str) -> Self {
        let path = transcript_path(data_dir, session_id);
        let writer = match TranscriptWriter::create(path) {
            Ok(w) => Some(w),
            Err(e) => {
                warn!(session = %session_id, "cannot write transcript: {e}");
                None
            }
        };
        Self { writer }
    }

    fn write(&mut self, entry: TranscriptEntry) {
        if let Some(w) = self.writer.as_mut() {
            if let Err(e) = w.write(&entry) {
                warn!("transcript write failed: {e}");
                self.writer = None;
            }
        }
    }

    fn path(&self) -> Option<PathBuf> {
        self.writer.as_ref().map(|w| w.path().to_path_buf())
    }
}

/// Continues numbering after the highest session already on disk for this
/// station, so restarts never overwrite old transcripts.
fn first_free_session_number(data_dir: &Path, station_id: &str) -> io::Result<u64> {
    let dir = data_dir.join(TRANSCRIPTS_DIR);
    if !dir.exists() {
        return Ok(1);
    }
    let prefix = format!("{station_id}-");
    let mut highest = 0;
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        let number = name
            .strip_prefix(&prefix)
            .and_then(|rest| rest.strip_suffix(".jsonl"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(n) = number {
            highest = highest.max(n);
        }
    }
    Ok(highest + 1)
}

/// A station serving on a background thread.
pub struct StationHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Station>>,
}

impl StationHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and waits for the current session to end.
    pub fn shutdown(mut self) -> Station {
        self.stop_and_join().expect("station thread joins once")
    }

    fn stop_and_join(&mut self) -> Option<Station> {
        let thread = self.thread.take()?;
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(IpAddr::V4(Ipv4Addr::LOCALHOST));
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_secs(1));
        thread.join().ok()
    }
}

impl Drop for StationHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Binds and serves on a background thread.
pub fn spawn(
    config: StationConfig,
    registry: SharedRegistry,
) -> Result<StationHandle, StationError> {
    let mut station = Station::new(config, registry)?;
    let listener = station.bind()?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let thread_stop = Arc::clone(&stop);
    let thread = thread::Builder::new()
        .name(format!("station-{}", station.config.station_id))
        .spawn(move || {
            station.serve(&listener, &thread_stop);
            station
        })?;
    Ok(StationHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

/// Binds and serves on the calling thread until `stop` is set.
pub fn serve(
    config: StationConfig,
    registry: SharedRegistry,
    stop: &AtomicBool,
) -> Result<(), StationError> {
    let mut station = Station::new(config, registry)?;
    let listener = station.bind()?;
    station.serve(&listener, stop);
    Ok(())
}
