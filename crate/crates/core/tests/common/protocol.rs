use proptest::prelude::*;

use super::{kwh, money, request};
use eav_core::protocol::{
    client_step, converse, encode_message, server_step, AuthDecision, Bill, ChargeIntent,
    ChargeRequest, ClientSessionState, DenialReason, ProtocolMessage, Sender, ServerSessionState,
    SessionContext, SessionOutcome, MESSAGE_TYPES,
};
use eav_core::{Kwh, Money};

/// Half-up rounding of kwh × price to cents, done with a quotient and a
/// remainder rather than the library's biased addition.
pub fn oracle_total(milli: u64, cents: u64) -> u64 {
    let product = milli as u128 * cents as u128;
    let (q, r) = (product / 1000, product % 1000);
    (if 2 * r >= 1000 { q + 1 } else { q }) as u64
}

pub fn id_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z0-9-]{1,12}",
        "\\PC{1,12}".prop_filter("non-blank", |s| !s.trim().is_empty())
    ]
}

pub fn any_text() -> impl Strategy<Value = String> {
    "\\PC{0,24}"
}

pub fn charge_request() -> impl Strategy<Value = ChargeRequest> {
    (
        (id_text(), any_text(), any_text(), any_text()),
        (id_text(), any_text(), 1900i64..=2200),
        (1900i32..=2100, 1u32..=12, 1u32..=28),
    )
        .prop_map(
            |((oid, name, email, phone), (cid, model, year), (y, m, d))| ChargeRequest {
                owner_id: oid,
                owner_name: name,
                owner_email: email,
                owner_phone: phone,
                car_id: cid,
                car_model_name: model,
                car_model_year: year,
                car_date_purchased: format!("{y:04}-{m:02}-{d:02}"),
            },
        )
}

pub fn bill() -> impl Strategy<Value = Bill> {
    (any_text(), 1u64..=10_000_000, 1u64..=100_000).prop_map(|(id, milli, cents)| Bill {
        bill_id: id,
        kwh: Kwh::from_milli(milli).unwrap(),
        price_per_kwh: Money::from_cents(cents).unwrap(),
        total: Money::from_cents(oracle_total(milli, cents)).unwrap(),
    })
}

pub fn message() -> impl Strategy<Value = ProtocolMessage> {
    use ProtocolMessage as M;
    prop_oneof![
        any_text().prop_map(|name| M::FileName { name }),
        charge_request().prop_map(|request| M::FileContent { request }),
        any_text().prop_map(|station_id| M::AuthOk { station_id }),
        any_text().prop_map(|reason| M::AuthDenied { reason }),
        Just(M::AmountRequest),
        (0u64..=1_000_000_000_000).prop_map(|m| M::Amount {
            kwh: Kwh::from_milli(m).unwrap()
        }),
        bill().prop_map(M::Bill),
        (any_text(), 0u64..=1_000_000_000_000).prop_map(|(bill_id, c)| M::Payment {
            bill_id,
            amount: Money::from_cents(c).unwrap()
        }),
        (any_text(), any_text()).prop_map(|(transaction_id, bill_id)| M::Receipt {
            transaction_id,
            bill_id
        }),
        any_text().prop_map(|reason| M::Close { reason }),
    ]
}

pub fn ctx() -> SessionContext {
    SessionContext {
        station_id: "s1".into(),
        tariff: money("0.10"),
        bill_id: "b-1".into(),
        transaction_id: "t-1".into(),
    }
}

pub fn grant(_: &ChargeRequest) -> AuthDecision {
    AuthDecision::Granted
}

pub fn deny(_: &ChargeRequest) -> AuthDecision {
    AuthDecision::Denied {
        reason: DenialReason::NotRegistered,
        detail: "unknown".into(),
    }
}

pub fn sample_bill() -> Bill {
    Bill {
        bill_id: "b-1".into(),
        kwh: kwh("10"),
        price_per_kwh: money("0.10"),
        total: money("1.00"),
    }
}

/// One message of every type, shaped to be the valid one where it matters.
pub fn one_of_each() -> Vec<ProtocolMessage> {
    use ProtocolMessage as M;
    let msgs = vec![
        M::FileName {
            name: "test.json".into(),
        },
        M::FileContent {
            request: request("o1", "c1"),
        },
        M::AuthOk {
            station_id: "s1".into(),
        },
        M::AuthDenied {
            reason: "not-registered".into(),
        },
        M::AmountRequest,
        M::Amount { kwh: kwh("10") },
        M::Bill(sample_bill()),
        M::Payment {
            bill_id: "b-1".into(),
            amount: money("1.00"),
        },
        M::Receipt {
            transaction_id: "t-1".into(),
            bill_id: "b-1".into(),
        },
        M::Close {
            reason: "denied".into(),
        },
    ];
    let names: Vec<_> = msgs.iter().map(ProtocolMessage::type_name).collect();
    assert_eq!(names, MESSAGE_TYPES);
    msgs
}

pub fn server_states() -> Vec<ServerSessionState> {
    vec![
        ServerSessionState::AwaitFileName,
        ServerSessionState::AwaitFileContent,
        ServerSessionState::AwaitAmount {
            request: request("o1", "c1"),
        },
        ServerSessionState::AwaitPayment {
            request: request("o1", "c1"),
            bill: sample_bill(),
        },
        ServerSessionState::Closed {
            outcome: SessionOutcome::DeniedUnregistered,
        },
    ]
}

pub fn server_label(s: &ServerSessionState) -> &'static str {
    match s {
        ServerSessionState::AwaitFileName => "await_file_name",
        ServerSessionState::AwaitFileContent => "await_file_content",
        ServerSessionState::AwaitAmount { .. } => "await_amount",
        ServerSessionState::AwaitPayment { .. } => "await_payment",
        ServerSessionState::Closed { .. } => "closed",
    }
}

/// Steps the server machine through every state and message type, asserting
/// each transition. Returns the number of cells visited.
pub fn server_totality() -> usize {
    let mut cells = 0;
    for state in server_states() {
        for msg in one_of_each() {
            cells += 1;
            let label = (server_label(&state), msg.type_name());
            let step = server_step(state.clone(), msg.clone(), &grant, &ctx());
            let expected = match label {
                ("await_file_name", "file_name") => "await_file_content",
                ("await_file_content", "file_content") => "await_amount",
                ("await_amount", "amount") => "await_payment",
                _ => "closed",
            };
            assert_eq!(server_label(&step.state), expected, "{label:?}");

            if let ServerSessionState::Closed { outcome } = &state {
                assert_eq!(step.state.outcome(), Some(outcome), "terminal state left");
                assert!(step.outbound.is_empty() && step.draft.is_none());
                continue;
            }
            if let Some(outcome) = step.state.outcome() {
                let want = match label {
                    ("await_payment", "payment") => "completed",
                    _ => "protocol_error",
                };
                assert_eq!(outcome.close_reason(), want, "{label:?}");
                assert_eq!(
                    step.outbound.last(),
                    Some(&ProtocolMessage::Close {
                        reason: want.into()
                    }),
                    "{label:?}"
                );
                assert_eq!(step.draft.is_some(), outcome.is_completed());
            }
            for out in &step.outbound {
                if let ProtocolMessage::Bill(bill) = out {
                    assert_eq!(
                        bill.total.cents(),
                        oracle_total(bill.kwh.milli(), bill.price_per_kwh.cents())
                    );
                }
                encode_message(out).unwrap();
            }
        }
    }
    cells
}

pub fn client_states() -> Vec<ClientSessionState> {
    let bill = sample_bill();
    vec![
        ClientSessionState::SendFileName,
        ClientSessionState::SendFileContent,
        ClientSessionState::AwaitAuth,
        ClientSessionState::AwaitAmountRequest,
        ClientSessionState::AwaitBill,
        ClientSessionState::SendPayment { bill: bill.clone() },
        ClientSessionState::AwaitReceipt { bill },
        ClientSessionState::Done {
            outcome: SessionOutcome::PaymentMismatch,
        },
    ]
}

pub fn client_label(s: &ClientSessionState) -> &'static str {
    match s {
        ClientSessionState::SendFileName => "send_file_name",
        ClientSessionState::SendFileContent => "send_file_content",
        ClientSessionState::AwaitAuth => "await_auth",
        ClientSessionState::AwaitAmountRequest => "await_amount_request",
        ClientSessionState::AwaitBill => "await_bill",
        ClientSessionState::SendPayment { .. } => "send_payment",
        ClientSessionState::AwaitReceipt { .. } => "await_receipt",
        ClientSessionState::Done { .. } => "done",
    }
}

/// As [`server_totality`] for the vehicle machine, with "no frame" as an
/// extra input.
pub fn client_totality() -> usize {
    let intent = ChargeIntent {
        request: request("o1", "c1"),
        file_name: "test.json".into(),
        kwh: kwh("10"),
        station: "127.0.0.1:7431".parse().unwrap(),
    };
    let mut inputs: Vec<Option<ProtocolMessage>> = vec![None];
    inputs.extend(one_of_each().into_iter().map(Some));
    let mut cells = 0;
    for state in client_states() {
        for input in &inputs {
            cells += 1;
            let kind = input.as_ref().map_or("none", ProtocolMessage::type_name);
            let label = (client_label(&state), kind);
            let (next, out) = client_step(state.clone(), input.clone(), &intent);
            let expected = match label {
                ("send_file_name", "none") => "send_file_content",
                ("send_file_content", "none") => "await_auth",
                ("send_payment", "none") => "await_receipt",
                ("await_auth", "auth_ok") => "await_amount_request",
                ("await_amount_request", "amount_request") => "await_bill",
                ("await_bill", "bill") => "await_receipt",
                _ => "done",
            };
            assert_eq!(client_label(&next), expected, "{label:?}");
            if let ClientSessionState::Done { outcome } = &state {
                assert_eq!(next.outcome(), Some(outcome), "terminal state left");
                assert!(out.is_empty());
                continue;
            }
            if let Some(outcome) = next.outcome() {
                let sending = state.is_sending();
                let want = match label {
                    ("await_receipt", "receipt") => "completed",
                    ("await_auth", "auth_denied") => "denied",
                    (_, "close") if !sending => "denied",
                    _ => "protocol_error",
                };
                assert_eq!(outcome.close_reason(), want, "{label:?}");
                assert!(out.is_empty(), "{label:?}");
            }
        }
    }
    cells
}

pub const HAPPY_ORDER: [&str; 9] = [
    "file_name",
    "file_content",
    "auth_ok",
    "amount_request",
    "amount",
    "bill",
    "payment",
    "receipt",
    "close",
];

/// Message types of a granted 10 kWh session composed in memory.
pub fn composed_order() -> (Vec<&'static str>, Vec<Sender>) {
    let intent = ChargeIntent {
        request: request("o1", "c1"),
        file_name: "test.json".into(),
        kwh: kwh("10"),
        station: "127.0.0.1:7431".parse().unwrap(),
    };
    let conv = converse(&intent, &grant, &ctx());
    (
        conv.transcript.iter().map(|(_, m)| m.type_name()).collect(),
        conv.transcript.iter().map(|(s, _)| *s).collect(),
    )
}
