//! Wire messages, framing, and the session state machines driven by the
//! station and vehicle.

mod codec;
mod converse;
mod fsm;
mod message;
mod request;

pub use codec::{decode_message, encode_message, DecodeError, EncodeError, MAX_FRAME_LEN};
pub use converse::{converse, Conversation, Sender};
pub use fsm::{
    client_step, server_step, AuthDecision, Authorizer, ChargeIntent, ClientSessionState,
    DenialReason, ServerSessionState, ServerStep, SessionContext, SessionOutcome, TransactionDraft,
};
pub use message::{close_reason, Bill, ProtocolMessage, MESSAGE_TYPES};
pub use request::{check_model_year, parse_date, ChargeRequest, MAX_MODEL_YEAR, MIN_MODEL_YEAR};
