use thiserror::Error;

use crate::decimal::{bill_total, Kwh, Money};
use crate::protocol::Bill;

/// Largest energy amount a single session may buy.
pub const MAX_SESSION_KWH: Kwh = Kwh::clamped(1_000_000);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BillingError {
    #[error("invalid amount {0} kWh: must be > 0 and <= {MAX_SESSION_KWH}")]
    InvalidAmount(Kwh),
    #[error("tariff must be positive")]
    InvalidTariff,
}

/// Prices one session's energy at `tariff`.
pub fn make_bill(
    kwh: Kwh,
    tariff: Money,
    bill_id: impl Into<String>,
) -> Result<Bill, BillingError> {
    if kwh.is_zero() || kwh > MAX_SESSION_KWH {
        return Err(BillingError::InvalidAmount(kwh));
    }
    if tariff.is_zero() {
        return Err(BillingError::InvalidTariff);
    }
    Ok(Bill {
        bill_id: bill_id.into(),
        kwh,
        price_per_kwh: tariff,
        total: bill_total(kwh, tariff),
    })
}
