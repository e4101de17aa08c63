use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::decimal::{bill_total, Kwh, Money};
use crate::fields::FieldError;
use crate::protocol::check_model_year;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Owner,
    Car,
    Station,
    Registration,
    Transaction,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Owner => "owner",
            Self::Car => "car",
            Self::Station => "station",
            Self::Registration => "registration",
            Self::Transaction => "transaction",
        }
    }
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn require_id(field: &str, id: &str) -> Result<(), FieldError> {
    if id.trim().is_empty() {
        return Err(FieldError::required(field));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OwnerRecord {
    pub id: String,
    pub name: String,
    pub email: String,
    pub phone: String,
}

impl OwnerRecord {
    pub fn validate(&self) -> Result<(), FieldError> {
        require_id("owner_id", &self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CarRecord {
    pub id: String,
    pub model_name: String,
    pub model_year: i64,
    pub date_purchased: NaiveDate,
    /// References [`OwnerRecord::id`].
    pub owner_id: String,
}

impl CarRecord {
    pub fn validate(&self) -> Result<(), FieldError> {
        require_id("car_id", &self.id)?;
        require_id("car_owner_id", &self.owner_id)?;
        check_model_year("car_model_year", self.model_year)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StationRecord {
    pub id: String,
    pub name: String,
    pub address: String,
}

impl StationRecord {
    pub fn validate(&self) -> Result<(), FieldError> {
        require_id("station_id", &self.id)
    }
}

/// One row of the station-has-car relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub station_id: String,
    pub car_id: String,
    pub car_owner_id: String,
}

impl std::fmt::Display for RegistrationRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.station_id, self.car_id, self.car_owner_id
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransactionOutcome {
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub id: String,
    pub bill_id: String,
    pub station_id: String,
    pub car_id: String,
    pub owner_id: String,
    pub kwh: Kwh,
    pub price_per_kwh: Money,
    pub total: Money,
    pub timestamp: DateTime<Utc>,
    pub outcome: TransactionOutcome,
}

impl TransactionRecord {
    pub fn check_amounts(&self) -> Result<(), String> {
        if self.kwh.is_zero() {
            return Err("transaction energy must be positive".into());
        }
        let expected = bill_total(self.kwh, self.price_per_kwh);
        if self.total != expected {
            return Err(format!(
                "total {} does not equal {} kWh x {} = {}",
                self.total, self.kwh, self.price_per_kwh, expected
            ));
        }
        Ok(())
    }
}
