//! Newline-delimited JSON framing.
//!
//! One frame is a single JSON object with a `"type"` discriminator followed
//! by exactly one `0x0A`. Frames, newline included, never exceed
//! [`MAX_FRAME_LEN`] bytes.

use serde_json::{Map, Value};
use thiserror::Error;

use super::message::{Bill, ProtocolMessage, MESSAGE_TYPES};
use super::request::ChargeRequest;
use crate::decimal::{Kwh, Money};
use crate::fields::{self, FieldError};

pub const MAX_FRAME_LEN: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("encoded frame is {len} bytes, limit is {MAX_FRAME_LEN}")]
    EncodingOverflow { len: usize },
    #[error("message violates its invariants: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("frame exceeds {MAX_FRAME_LEN} bytes")]
    FrameTooLong,
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

pub fn encode_message(msg: &ProtocolMessage) -> Result<Vec<u8>, EncodeError> {
    msg.check().map_err(EncodeError::InvariantViolation)?;
    // Serialization of these types cannot fail: no maps with non-string keys.
    let mut line = serde_json::to_vec(msg).expect("protocol messages always serialize");
    line.push(b'\n');
    if line.len() > MAX_FRAME_LEN {
        return Err(EncodeError::EncodingOverflow { len: line.len() });
    }
    Ok(line)
}

pub fn decode_message(line: &[u8]) -> Result<ProtocolMessage, DecodeError> {
    if line.len() > MAX_FRAME_LEN {
        return Err(DecodeError::FrameTooLong);
    }
    let body = line
        .strip_suffix(b"\n")
        .ok_or_else(|| DecodeError::MalformedFrame("missing trailing newline".into()))?;
    if body.contains(&b'\n') {
        return Err(DecodeError::MalformedFrame("embedded newline".into()));
    }
    let text = std::str::from_utf8(body)
        .map_err(|e| DecodeError::MalformedFrame(format!("invalid UTF-8: {e}")))?;
    let value: Value = serde_json::from_str(text)
        .map_err(|e| DecodeError::MalformedFrame(format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(DecodeError::MalformedFrame(
            "frame is not a JSON object".into(),
        ));
    };
    let kind = match obj.get("type") {
        Some(Value::String(kind)) => kind.clone(),
        Some(_) => {
            return Err(DecodeError::MalformedFrame(
                "\"type\" is not a string".into(),
            ))
        }
        None => return Err(DecodeError::MalformedFrame("missing \"type\"".into())),
    };
    if !MESSAGE_TYPES.contains(&kind.as_str()) {
        return Err(DecodeError::UnknownType(kind));
    }
    let frame = Frame { obj: &obj };
    let msg = match kind.as_str() {
        "file_name" => {
            frame.expect_fields(&["name"])?;
            ProtocolMessage::FileName {
                name: frame.string("name")?,
            }
        }
        "file_content" => {
            frame.expect_fields(&["request"])?;
            let raw = obj
                .get("request")
                .ok_or_else(|| DecodeError::MalformedFrame("missing field \"request\"".into()))?;
            if !raw.is_object() {
                return Err(DecodeError::MalformedFrame(
                    "\"request\" is not an object".into(),
                ));
            }
            let request = ChargeRequest::from_json(raw)
                .map_err(|e| DecodeError::InvariantViolation(e.to_string()))?;
            ProtocolMessage::FileContent { request }
        }
        "auth_ok" => {
            frame.expect_fields(&["station_id"])?;
            ProtocolMessage::AuthOk {
                station_id: frame.string("station_id")?,
            }
        }
        "auth_denied" => {
            frame.expect_fields(&["reason"])?;
            ProtocolMessage::AuthDenied {
                reason: frame.string("reason")?,
            }
        }
        "amount_request" => {
            frame.expect_fields(&[])?;
            ProtocolMessage::AmountRequest
        }
        "amount" => {
            frame.expect_fields(&["kwh"])?;
            ProtocolMessage::Amount {
                kwh: frame.kwh("kwh")?,
            }
        }
        "bill" => {
            frame.expect_fields(&["bill_id", "kwh", "price_per_kwh", "total"])?;
            ProtocolMessage::Bill(Bill {
                bill_id: frame.string("bill_id")?,
                kwh: frame.kwh("kwh")?,
                price_per_kwh: frame.money("price_per_kwh")?,
                total: frame.money("total")?,
            })
        }
        "payment" => {
            frame.expect_fields(&["bill_id", "amount"])?;
            ProtocolMessage::Payment {
                bill_id: frame.string("bill_id")?,
                amount: frame.money("amount")?,
            }
        }
        "receipt" => {
            frame.expect_fields(&["transaction_id", "bill_id"])?;
            ProtocolMessage::Receipt {
                transaction_id: frame.string("transaction_id")?,
                bill_id: frame.string("bill_id")?,
            }
        }
        "close" => {
            frame.expect_fields(&["reason"])?;
            ProtocolMessage::Close {
                reason: frame.string("reason")?,
            }
        }
        _ => unreachable!("type checked against MESSAGE_TYPES"),
    };
    msg.check().map_err(DecodeError::InvariantViolation)?;
    Ok(msg)
}

struct Frame<'a> {
    obj: &'a Map<String, Value>,
}

fn malformed(e: FieldError) -> DecodeError {
    DecodeError::MalformedFrame(e.to_string())
}

impl Frame<'_> {
    /// Rejects fields outside the schema of the message type.
    fn expect_fields(&self, allowed: &[&str]) -> Result<(), DecodeError> {
        match self
            .obj
            .keys()
            .find(|k| k.as_str() != "type" && !allowed.contains(&k.as_str()))
        {
            Some(extra) => Err(DecodeError::MalformedFrame(format!(
                "unexpected field {extra:?}"
            ))),
            None => Ok(()),
        }
    }

    fn string(&self, field: &str) -> Result<String, DecodeError> {
        fields::string(self.obj, field).map_err(malformed)
    }

    fn kwh(&self, field: &str) -> Result<Kwh, DecodeError> {
        let raw = fields::number(self.obj, field).map_err(malformed)?;
        Kwh::from_f64(raw).map_err(|e| DecodeError::InvariantViolation(format!("{field}: {e}")))
    }

    fn money(&self, field: &str) -> Result<Money, DecodeError> {
        let raw = fields::number(self.obj, field).map_err(malformed)?;
        Money::from_f64(raw).map_err(|e| DecodeError::InvariantViolation(format!("{field}: {e}")))
    }
}
