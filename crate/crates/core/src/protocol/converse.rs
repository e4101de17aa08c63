//! Lossless in-memory composition of the two session machines. Every frame
//! still goes through the codec, so this exercises the same bytes a socket
//! would carry.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::codec::{decode_message, encode_message};
use super::fsm::{
    client_step, server_step, Authorizer, ChargeIntent, ClientSessionState, ServerSessionState,
    SessionContext, SessionOutcome, TransactionDraft,
};
use super::message::ProtocolMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sender {
    Vehicle,
    Station,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub server_outcome: SessionOutcome,
    pub client_outcome: SessionOutcome,
    /// Every frame in the order it was put on the channel.
    pub transcript: Vec<(Sender, ProtocolMessage)>,
    pub drafts: Vec<TransactionDraft>,
}

fn through_codec(msg: &ProtocolMessage) -> Result<ProtocolMessage, String> {
    let line = encode_message(msg).map_err(|e| e.to_string())?;
    decode_message(&line).map_err(|e| e.to_string())
}

/// Runs one session to completion on both machines.
pub fn converse(
    intent: &ChargeIntent,
    auth: &dyn Authorizer,
    ctx: &SessionContext,
) -> Conversation {
    let mut client = ClientSessionState::SendFileName;
    let mut server = ServerSessionState::AwaitFileName;
    let mut to_station: VecDeque<ProtocolMessage> = VecDeque::new();
    let mut to_vehicle: VecDeque<ProtocolMessage> = VecDeque::new();
    let mut transcript = Vec::new();
    let mut drafts = Vec::new();

    loop {
        while client.is_sending() {
            let (state, out) = client_step(client, None, intent);
            client = state;
            for msg in out {
                transcript.push((Sender::Vehicle, msg.clone()));
                to_station.push_back(msg);
            }
        }
        if let Some(msg) = to_station.pop_front() {
            if server.is_closed() {
                continue;
            }
            let step = match through_codec(&msg) {
                Ok(decoded) => server_step(server, decoded, auth, ctx),
                Err(detail) => {
                    server = ServerSessionState::Closed {
                        outcome: SessionOutcome::protocol_error(detail),
                    };
                    continue;
                }
            };
            server = step.state;
            drafts.extend(step.draft);
            for msg in step.outbound {
                transcript.push((Sender::Station, msg.clone()));
                to_vehicle.push_back(msg);
            }
            continue;
        }
        if let Some(msg) = to_vehicle.pop_front() {
            if client.is_done() {
                continue;
            }
            let (state, out) = match through_codec(&msg) {
                Ok(decoded) => client_step(client, Some(decoded), intent),
                Err(detail) => (
                    ClientSessionState::Done {
                        outcome: SessionOutcome::protocol_error(detail),
                    },
                    Vec::new(),
                ),
            };
            client = state;
            for msg in out {
                transcript.push((Sender::Vehicle, msg.clone()));
                to_station.push_back(msg);
            }
            continue;
        }
        break;
    }

    // A side left waiting with nothing in flight saw its peer hang up.
    let server_outcome = server
        .outcome()
        .cloned()
        .unwrap_or_else(|| SessionOutcome::protocol_error("vehicle disconnected"));
    let client_outcome = client
        .outcome()
        .cloned()
        .unwrap_or_else(|| SessionOutcome::protocol_error("station disconnected"));
    Conversation {
        server_outcome,
        client_outcome,
        transcript,
        drafts,
    }
}
