//! Exact fixed-point quantities for metered energy and money.
//!
//! Energy is held in thousandths of a kWh and money in hundredths of the
//! currency unit. Both are non-negative scaled integers; JSON carries them as
//! plain numbers and decoding rejects anything that does not fit the scale
//! exactly.

use std::fmt;
use std::iter::Sum;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest scaled value accepted by either quantity. Keeps every value exactly
/// representable as an `f64` with room to spare.
pub const MAX_SCALED: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecimalError {
    #[error("not a decimal number: {0:?}")]
    Syntax(String),
    #[error("value must not be negative")]
    Negative,
    #[error("at most {max} fractional digits allowed")]
    TooManyFractionDigits { max: u32 },
    #[error("value out of range")]
    OutOfRange,
}

/// Parses a plain decimal literal into an integer scaled by `10^digits`.
fn parse_scaled(text: &str, digits: u32) -> Result<u64, DecimalError> {
    let text = text.trim();
    let body = match text.strip_prefix('-') {
        Some(rest) => {
            // "-0", "-0.000" are still zero.
            if rest.chars().all(|c| c == '0' || c == '.') && !rest.is_empty() {
                rest
            } else {
                return Err(DecimalError::Negative);
            }
        }
        None => text.strip_prefix('+').unwrap_or(text),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    let well_formed = !(int_part.is_empty() && frac_part.is_empty())
        && int_part.bytes().all(|b| b.is_ascii_digit())
        && frac_part.bytes().all(|b| b.is_ascii_digit());
    if !well_formed {
        return Err(DecimalError::Syntax(text.to_string()));
    }
    let frac_trimmed = frac_part.trim_end_matches('0');
    if frac_trimmed.len() as u32 > digits {
        return Err(DecimalError::TooManyFractionDigits { max: digits });
    }
    let int_trimmed = int_part.trim_start_matches('0');
    if int_trimmed.len() > 15 {
        return Err(DecimalError::OutOfRange);
    }
    let whole: u64 = if int_trimmed.is_empty() {
        0
    } else {
        int_trimmed.parse().map_err(|_| DecimalError::OutOfRange)?
    };
    let mut frac: u64 = 0;
    for i in 0..digits as usize {
        let d = frac_trimmed
            .as_bytes()
            .get(i)
            .map_or(0, |b| u64::from(b - b'0'));
        frac = frac * 10 + d;
    }
    let scaled = whole
        .checked_mul(10u64.pow(digits))
        .and_then(|w| w.checked_add(frac))
        .ok_or(DecimalError::OutOfRange)?;
    if scaled > MAX_SCALED {
        return Err(DecimalError::OutOfRange);
    }
    Ok(scaled)
}

/// Converts a decoded JSON number into a scaled integer without drift: the
/// shortest round-tripping rendering of the float is the literal that was
/// written, which is then parsed exactly.
fn scaled_from_f64(value: f64, digits: u32) -> Result<u64, DecimalError> {
    if !value.is_finite() {
        return Err(DecimalError::Syntax(value.to_string()));
    }
    parse_scaled(&value.to_string(), digits)
}

fn fmt_scaled(f: &mut fmt::Formatter<'_>, scaled: u64, digits: u32) -> fmt::Result {
    let unit = 10u64.pow(digits);
    write!(
        f,
        "{}.{:0width$}",
        scaled / unit,
        scaled % unit,
        width = digits as usize
    )
}

macro_rules! fixed_point {
    ($(#[$meta:meta])* $name:ident, $digits:expr, $unit_ctor:ident, $unit_get:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(u64);

        impl $name {
            pub const DIGITS: u32 = $digits;
            pub const ZERO: Self = Self(0);

            pub const fn $unit_ctor(scaled: u64) -> Result<Self, DecimalError> {
                if scaled > MAX_SCALED {
                    return Err(DecimalError::OutOfRange);
                }
                Ok(Self(scaled))
            }

            /// Like the checked constructor but clamps to the maximum.
            pub const fn clamped(scaled: u64) -> Self {
                if scaled > MAX_SCALED {
                    Self(MAX_SCALED)
                } else {
                    Self(scaled)
                }
            }

            pub const fn $unit_get(self) -> u64 {
                self.0
            }

            pub fn from_f64(value: f64) -> Result<Self, DecimalError> {
                scaled_from_f64(value, Self::DIGITS).map(Self)
            }

            pub fn to_f64(self) -> f64 {
                self.0 as f64 / 10u64.pow(Self::DIGITS) as f64
            }

            pub const fn is_zero(self) -> bool {
                self.0 == 0
            }

            pub fn checked_add(self, other: Self) -> Option<Self> {
                self.0
                    .checked_add(other.0)
                    .filter(|v| *v <= MAX_SCALED)
                    .map(Self)
            }
        }

        impl FromStr for $name {
            type Err = DecimalError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                parse_scaled(s, Self::DIGITS).map(Self)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt_scaled(f, self.0, Self::DIGITS)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_f64(self.to_f64())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = f64::deserialize(deserializer)?;
                Self::from_f64(raw).map_err(serde::de::Error::custom)
            }
        }

        impl Sum for $name {
            /// Saturates at the representable maximum.
            fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
                iter.fold(Self::ZERO, |acc, v| {
                    acc.checked_add(v).unwrap_or(Self(MAX_SCALED))
                })
            }
        }
    };
}

fixed_point!(
    /// Energy in kWh with exactly three fractional digits.
    Kwh,
    3,
    from_milli,
    milli
);

fixed_point!(
    /// Currency amount with exactly two fractional digits. Tariffs
    /// (price per kWh) use the same representation.
    Money,
    2,
    from_cents,
    cents
);

/// `kwh × price_per_kwh`, rounded half-up to whole cents.
pub fn bill_total(kwh: Kwh, price_per_kwh: Money) -> Money {
    // milli-kWh × cents is in units of 1e-5 currency; 1000 of those make a cent.
    let product = u128::from(kwh.milli()) * u128::from(price_per_kwh.cents());
    let cents = (product + 500) / 1000;
    Money(u64::try_from(cents).unwrap_or(MAX_SCALED).min(MAX_SCALED))
}
