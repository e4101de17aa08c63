//! The vehicle side: connect to a station's fixed address, present the
//! request document, buy the requested energy, and pay the bill.

use std::fs;
use std::io;
use std::net::TcpStream;
use std::path::Path;
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use crate::fields::FieldError;
pub use crate::protocol::ChargeIntent;
use crate::protocol::{
    client_step, decode_message, Bill, ChargeRequest, ClientSessionState, ProtocolMessage, Sender,
    SessionOutcome,
};
use crate::station::DEFAULT_SESSION_TIMEOUT;
use crate::transport::{FrameTransport, LineTransport, TransportError};

pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
/// How long to wait for trailing frames after the session has ended.
const DRAIN_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Error)]
pub enum VehicleError {
    #[error("cannot reach station at {addr}: {source}")]
    ConnectError {
        addr: std::net::SocketAddr,
        source: io::Error,
    },
    #[error("cannot read request document: {0}")]
    Io(#[from] io::Error),
    #[error("request document is not valid JSON: {0}")]
    ParseError(String),
    #[error("request document field {}: {}", .0.field, .0.reason)]
    InvariantViolation(FieldError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionReport {
    pub outcome: SessionOutcome,
    /// The last bill the station presented, if any.
    pub bill: Option<Bill>,
    pub receipt_transaction_id: Option<String>,
    pub transcript: Vec<(Sender, ProtocolMessage)>,
}

impl SessionReport {
    pub fn is_completed(&self) -> bool {
        self.outcome.is_completed()
    }
}

/// Reads and validates a request document such as `test.json`.
pub fn load_charge_request(path: &Path) -> Result<ChargeRequest, VehicleError> {
    let text = fs::read_to_string(path)?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| VehicleError::ParseError(e.to_string()))?;
    if !value.is_object() {
        return Err(VehicleError::ParseError("expected a JSON object".into()));
    }
    ChargeRequest::from_json(&value).map_err(VehicleError::InvariantViolation)
}

/// Runs one charging session against the station in `intent`.
pub fn charge(intent: &ChargeIntent) -> Result<SessionReport, VehicleError> {
    charge_with_timeout(intent, DEFAULT_SESSION_TIMEOUT)
}

pub fn charge_with_timeout(
    intent: &ChargeIntent,
    read_timeout: Duration,
) -> Result<SessionReport, VehicleError> {
    let connect_err = |source| VehicleError::ConnectError {
        addr: intent.station,
        source,
    };
    let stream =
        TcpStream::connect_timeout(&intent.station, CONNECT_TIMEOUT).map_err(connect_err)?;
    stream
        .set_read_timeout(Some(read_timeout))
        .map_err(connect_err)?;
    stream.set_nodelay(true).map_err(connect_err)?;
    let mut transport =
        LineTransport::tcp(stream.try_clone().map_err(connect_err)?).map_err(connect_err)?;
    let report = run_client(&mut transport, intent, |_| {
        let _ = stream.set_read_timeout(Some(DRAIN_TIMEOUT));
    });
    let _ = stream.shutdown(std::net::Shutdown::Both);
    Ok(report)
}

/// Drives the client machine over any transport. `on_done` runs once the
/// machine reaches a terminal state, before trailing frames are drained.
pub fn run_client<T: FrameTransport>(
    transport: &mut T,
    intent: &ChargeIntent,
    on_done: impl FnOnce(&mut T),
) -> SessionReport {
    let mut state = ClientSessionState::SendFileName;
    let mut transcript = Vec::new();
    let mut bill = None;

    while !state.is_done() {
        if state.is_sending() {
            let (next, out) = client_step(state, None, intent);
            state = next;
            for msg in out {
                if let Err(e) = transport.send(&msg) {
                    state = ClientSessionState::Done {
                        outcome: SessionOutcome::protocol_error(format!("send failed: {e}")),
                    };
                    break;
                }
                transcript.push((Sender::Vehicle, msg));
            }
            continue;
        }
        let msg = match receive(transport) {
            Ok(msg) => msg,
            Err(outcome) => {
                state = ClientSessionState::Done { outcome };
                break;
            }
        };
        transcript.push((Sender::Station, msg.clone()));
        if let ProtocolMessage::Bill(b) = &msg {
            bill = Some(b.clone());
        }
        let (next, out) = client_step(state, Some(msg), intent);
        state = next;
        for msg in out {
            if let Err(e) = transport.send(&msg) {
                state = ClientSessionState::Done {
                    outcome: SessionOutcome::protocol_error(format!("send failed: {e}")),
                };
                break;
            }
            transcript.push((Sender::Vehicle, msg));
        }
    }

    on_done(transport);
    // Keep whatever the station still says (normally its Close) on record.
    while let Ok(Some(raw)) = transport.recv() {
        match decode_message(&raw) {
            Ok(msg) => transcript.push((Sender::Station, msg)),
            Err(_) => break,
        }
    }

    let outcome = state
        .outcome()
        .cloned()
        .expect("loop exits only in a terminal state");
    let receipt_transaction_id = match &outcome {
        SessionOutcome::Completed { transaction_id } => Some(transaction_id.clone()),
        _ => None,
    };
    SessionReport {
        outcome,
        bill,
        receipt_transaction_id,
        transcript,
    }
}

fn receive<T: FrameTransport>(transport: &mut T) -> Result<ProtocolMessage, SessionOutcome> {
    match transport.recv() {
        Ok(Some(raw)) => {
            decode_message(&raw).map_err(|e| SessionOutcome::protocol_error(e.to_string()))
        }
        Ok(None) => Err(SessionOutcome::protocol_error("station disconnected")),
        Err(TransportError::Timeout) => Err(SessionOutcome::protocol_error("timeout")),
        Err(e) => Err(SessionOutcome::protocol_error(e.to_string())),
    }
}
