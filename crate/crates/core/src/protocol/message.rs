use serde::Serialize;

use super::request::ChargeRequest;
use crate::decimal::{bill_total, Kwh, Money};

/// A priced energy offer for one session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Bill {
    pub bill_id: String,
    pub kwh: Kwh,
    pub price_per_kwh: Money,
    pub total: Money,
}

impl Bill {
    pub fn is_consistent(&self) -> bool {
        self.total == bill_total(self.kwh, self.price_per_kwh)
    }
}

/// Every frame exchanged between a vehicle and a station.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProtocolMessage {
    FileName {
        name: String,
    },
    FileContent {
        request: ChargeRequest,
    },
    AuthOk {
        station_id: String,
    },
    AuthDenied {
        reason: String,
    },
    AmountRequest,
    Amount {
        kwh: Kwh,
    },
    Bill(Bill),
    Payment {
        bill_id: String,
        amount: Money,
    },
    Receipt {
        transaction_id: String,
        bill_id: String,
    },
    Close {
        reason: String,
    },
}

/// Wire discriminators, in protocol order.
pub const MESSAGE_TYPES: [&str; 10] = [
    "file_name",
    "file_content",
    "auth_ok",
    "auth_denied",
    "amount_request",
    "amount",
    "bill",
    "payment",
    "receipt",
    "close",
];

impl ProtocolMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::FileName { .. } => "file_name",
            Self::FileContent { .. } => "file_content",
            Self::AuthOk { .. } => "auth_ok",
            Self::AuthDenied { .. } => "auth_denied",
            Self::AmountRequest => "amount_request",
            Self::Amount { .. } => "amount",
            Self::Bill(_) => "bill",
            Self::Payment { .. } => "payment",
            Self::Receipt { .. } => "receipt",
            Self::Close { .. } => "close",
        }
    }

    /// Checks the invariants the type system does not already enforce.
    pub fn check(&self) -> Result<(), String> {
        match self {
            Self::FileContent { request } => request.validate().map_err(|e| e.to_string()),
            Self::Bill(bill) if !bill.is_consistent() => Err(format!(
                "bill total {} does not equal {} kWh x {}",
                bill.total, bill.kwh, bill.price_per_kwh
            )),
            _ => Ok(()),
        }
    }
}

/// Close reasons used on the wire.
pub mod close_reason {
    pub const COMPLETED: &str = "completed";
    pub const DENIED: &str = "denied";
    pub const PAYMENT_MISMATCH: &str = "payment_mismatch";
    pub const PROTOCOL_ERROR: &str = "protocol_error";
    pub const TIMEOUT: &str = "timeout";
}
