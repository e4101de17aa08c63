//! Pure session state machines for both ends of a charging session.
//!
//! Neither machine performs I/O. Every `(state, message)` pair has a defined
//! result; anything unexpected closes the session with an error outcome.

use std::net::SocketAddr;

use serde::{Deserialize, Serialize};

use super::message::{close_reason, Bill, ProtocolMessage};
use super::request::ChargeRequest;
use crate::billing::make_bill;
use crate::decimal::{Kwh, Money};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionOutcome {
    Completed { transaction_id: String },
    DeniedUnregistered,
    ProtocolError { detail: String },
    PaymentMismatch,
}

impl SessionOutcome {
    pub fn protocol_error(detail: impl Into<String>) -> Self {
        Self::ProtocolError {
            detail: detail.into(),
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, Self::Completed { .. })
    }

    pub fn close_reason(&self) -> &'static str {
        match self {
            Self::Completed { .. } => close_reason::COMPLETED,
            Self::DeniedUnregistered => close_reason::DENIED,
            Self::PaymentMismatch => close_reason::PAYMENT_MISMATCH,
            Self::ProtocolError { .. } => close_reason::PROTOCOL_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenialReason {
    NotRegistered,
    DetailMismatch,
}

impl DenialReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::NotRegistered => "not-registered",
            Self::DetailMismatch => "detail-mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthDecision {
    Granted,
    Denied {
        reason: DenialReason,
        detail: String,
    },
}

impl AuthDecision {
    pub fn is_granted(&self) -> bool {
        matches!(self, Self::Granted)
    }
}

/// Answers whether a charge request may charge at the station running the
/// session.
pub trait Authorizer {
    fn authorize(&self, request: &ChargeRequest) -> AuthDecision;
}

impl<F: Fn(&ChargeRequest) -> AuthDecision> Authorizer for F {
    fn authorize(&self, request: &ChargeRequest) -> AuthDecision {
        self(request)
    }
}

/// Per-session values the station fixes before the first frame arrives.
/// Identifiers are drawn up front so that the transition function stays pure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionContext {
    pub station_id: String,
    pub tariff: Money,
    pub bill_id: String,
    pub transaction_id: String,
}

/// A paid session, ready to be recorded in the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionDraft {
    pub transaction_id: String,
    pub bill_id: String,
    pub station_id: String,
    pub car_id: String,
    pub owner_id: String,
    pub kwh: Kwh,
    pub price_per_kwh: Money,
    pub total: Money,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerSessionState {
    AwaitFileName,
    AwaitFileContent,
    AwaitAmount { request: ChargeRequest },
    AwaitPayment { request: ChargeRequest, bill: Bill },
    Closed { outcome: SessionOutcome },
}

impl ServerSessionState {
    pub fn is_closed(&self) -> bool {
        matches!(self, Self::Closed { .. })
    }

    pub fn outcome(&self) -> Option<&SessionOutcome> {
        match self {
            Self::Closed { outcome } => Some(outcome),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerStep {
    pub state: ServerSessionState,
    pub outbound: Vec<ProtocolMessage>,
    pub draft: Option<TransactionDraft>,
}

fn close_with(outcome: SessionOutcome, mut outbound: Vec<ProtocolMessage>) -> ServerStep {
    outbound.push(ProtocolMessage::Close {
        reason: outcome.close_reason().to_string(),
    });
    ServerStep {
        state: ServerSessionState::Closed { outcome },
        outbound,
        draft: None,
    }
}

fn next(state: ServerSessionState, outbound: Vec<ProtocolMessage>) -> ServerStep {
    ServerStep {
        state,
        outbound,
        draft: None,
    }
}

pub fn server_step(
    state: ServerSessionState,
    msg: ProtocolMessage,
    auth: &dyn Authorizer,
    ctx: &SessionContext,
) -> ServerStep {
    use ProtocolMessage as M;
    use ServerSessionState as S;

    match (state, msg) {
        (S::Closed { outcome }, _) => next(S::Closed { outcome }, Vec::new()),

        (S::AwaitFileName, M::FileName { name }) if !name.trim().is_empty() => {
            next(S::AwaitFileContent, Vec::new())
        }

        (S::AwaitFileContent, M::FileContent { request }) => match auth.authorize(&request) {
            AuthDecision::Granted => next(
                S::AwaitAmount { request },
                vec![
                    M::AuthOk {
                        station_id: ctx.station_id.clone(),
                    },
                    M::AmountRequest,
                ],
            ),
            AuthDecision::Denied { reason, .. } => close_with(
                SessionOutcome::DeniedUnregistered,
                vec![M::AuthDenied {
                    reason: reason.as_str().to_string(),
                }],
            ),
        },

        (S::AwaitAmount { request }, M::Amount { kwh }) => {
            match make_bill(kwh, ctx.tariff, ctx.bill_id.clone()) {
                Ok(bill) => next(
                    S::AwaitPayment {
                        request,
                        bill: bill.clone(),
                    },
                    vec![M::Bill(bill)],
                ),
                Err(e) => close_with(SessionOutcome::protocol_error(e.to_string()), Vec::new()),
            }
        }

        (S::AwaitPayment { request, bill }, M::Payment { bill_id, amount }) => {
            if bill_id != bill.bill_id || amount != bill.total {
                return close_with(SessionOutcome::PaymentMismatch, Vec::new());
            }
            let draft = TransactionDraft {
                transaction_id: ctx.transaction_id.clone(),
                bill_id: bill.bill_id.clone(),
                station_id: ctx.station_id.clone(),
                car_id: request.car_id,
                owner_id: request.owner_id,
                kwh: bill.kwh,
                price_per_kwh: bill.price_per_kwh,
                total: bill.total,
            };
            let mut step = close_with(
                SessionOutcome::Completed {
                    transaction_id: ctx.transaction_id.clone(),
                },
                vec![M::Receipt {
                    transaction_id: ctx.transaction_id.clone(),
                    bill_id: bill.bill_id,
                }],
            );
            step.draft = Some(draft);
            step
        }

        (state, msg) => close_with(
            SessionOutcome::protocol_error(format!(
                "unexpected {} while {}",
                msg.type_name(),
                server_state_name(&state)
            )),
            Vec::new(),
        ),
    }
}

fn server_state_name(state: &ServerSessionState) -> &'static str {
    match state {
        ServerSessionState::AwaitFileName => "awaiting file name",
        ServerSessionState::AwaitFileContent => "awaiting file content",
        ServerSessionState::AwaitAmount { .. } => "awaiting amount",
        ServerSessionState::AwaitPayment { .. } => "awaiting payment",
        ServerSessionState::Closed { .. } => "closed",
    }
}

/// What a vehicle wants from one session and where to get it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargeIntent {
    pub request: ChargeRequest,
    pub file_name: String,
    pub kwh: Kwh,
    pub station: SocketAddr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientSessionState {
    SendFileName,
    SendFileContent,
    AwaitAuth,
    AwaitAmountRequest,
    AwaitBill,
    SendPayment { bill: Bill },
    AwaitReceipt { bill: Bill },
    Done { outcome: SessionOutcome },
}

impl ClientSessionState {
    pub fn is_done(&self) -> bool {
        matches!(self, Self::Done { .. })
    }

    /// States that produce output without waiting for the station.
    pub fn is_sending(&self) -> bool {
        matches!(
            self,
            Self::SendFileName | Self::SendFileContent | Self::SendPayment { .. }
        )
    }

    pub fn outcome(&self) -> Option<&SessionOutcome> {
        match self {
            Self::Done { outcome } => Some(outcome),
            _ => None,
        }
    }
}

fn done(outcome: SessionOutcome) -> (ClientSessionState, Vec<ProtocolMessage>) {
    (ClientSessionState::Done { outcome }, Vec::new())
}

fn outcome_for_close(reason: &str) -> SessionOutcome {
    match reason {
        close_reason::DENIED => SessionOutcome::DeniedUnregistered,
        close_reason::PAYMENT_MISMATCH => SessionOutcome::PaymentMismatch,
        other => SessionOutcome::protocol_error(format!("station closed the session: {other}")),
    }
}

fn payment_for(bill: &Bill) -> ProtocolMessage {
    ProtocolMessage::Payment {
        bill_id: bill.bill_id.clone(),
        amount: bill.total,
    }
}

/// Advances the vehicle side. `msg` is `None` when the vehicle acts on its own
/// (the sending states) and `Some` when a frame arrived from the station.
pub fn client_step(
    state: ClientSessionState,
    msg: Option<ProtocolMessage>,
    intent: &ChargeIntent,
) -> (ClientSessionState, Vec<ProtocolMessage>) {
    use ClientSessionState as C;
    use ProtocolMessage as M;

    match (state, msg) {
        (C::Done { outcome }, _) => (C::Done { outcome }, Vec::new()),

        (C::SendFileName, None) => (
            C::SendFileContent,
            vec![M::FileName {
                name: intent.file_name.clone(),
            }],
        ),
        (C::SendFileContent, None) => (
            C::AwaitAuth,
            vec![M::FileContent {
                request: intent.request.clone(),
            }],
        ),
        (C::SendPayment { bill }, None) => {
            let payment = payment_for(&bill);
            (C::AwaitReceipt { bill }, vec![payment])
        }
        (_, None) => done(SessionOutcome::protocol_error("no frame from station")),

        (C::AwaitAuth, Some(M::AuthOk { .. })) => (C::AwaitAmountRequest, Vec::new()),
        (C::AwaitAuth, Some(M::AuthDenied { .. })) => done(SessionOutcome::DeniedUnregistered),
        (C::AwaitAmountRequest, Some(M::AmountRequest)) => {
            (C::AwaitBill, vec![M::Amount { kwh: intent.kwh }])
        }
        (C::AwaitBill, Some(M::Bill(bill))) => {
            // Only pay for what was asked for.
            if bill.kwh != intent.kwh || !bill.is_consistent() {
                return done(SessionOutcome::protocol_error(
                    "bill does not match the requested energy",
                ));
            }
            let payment = payment_for(&bill);
            (C::AwaitReceipt { bill }, vec![payment])
        }
        (
            C::AwaitReceipt { bill },
            Some(M::Receipt {
                transaction_id,
                bill_id,
            }),
        ) => {
            if bill_id != bill.bill_id || transaction_id.trim().is_empty() {
                done(SessionOutcome::protocol_error(
                    "receipt does not match the bill",
                ))
            } else {
                done(SessionOutcome::Completed { transaction_id })
            }
        }
        (state, Some(M::Close { reason })) if !state.is_sending() => {
            done(outcome_for_close(&reason))
        }
        (_, Some(msg)) => done(SessionOutcome::protocol_error(format!(
            "unexpected {} from station",
            msg.type_name()
        ))),
    }
}
