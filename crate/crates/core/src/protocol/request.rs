use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fields::{self, FieldError};

pub const MIN_MODEL_YEAR: i64 = 1900;
pub const MAX_MODEL_YEAR: i64 = 2200;

/// The per-vehicle document sent at the start of every charging session:
/// who owns the car and which car it is.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChargeRequest {
    pub owner_id: String,
    pub owner_name: String,
    pub owner_email: String,
    pub owner_phone: String,
    pub car_id: String,
    pub car_model_name: String,
    pub car_model_year: i64,
    /// Calendar date, `YYYY-MM-DD`.
    pub car_date_purchased: String,
}

pub fn check_model_year(field: &str, year: i64) -> Result<(), FieldError> {
    if !(MIN_MODEL_YEAR..=MAX_MODEL_YEAR).contains(&year) {
        return Err(FieldError::new(
            field,
            format!("must be between {MIN_MODEL_YEAR} and {MAX_MODEL_YEAR}"),
        ));
    }
    Ok(())
}

pub fn parse_date(field: &str, text: &str) -> Result<NaiveDate, FieldError> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
        .map_err(|_| FieldError::new(field, "must be an ISO-8601 calendar date (YYYY-MM-DD)"))
}

impl ChargeRequest {
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.owner_id.trim().is_empty() {
            return Err(FieldError::required("owner_id"));
        }
        if self.car_id.trim().is_empty() {
            return Err(FieldError::required("car_id"));
        }
        check_model_year("car_model_year", self.car_model_year)?;
        parse_date("car_date_purchased", &self.car_date_purchased)?;
        Ok(())
    }

    /// Builds a request from a JSON object, reporting the first offending
    /// field by name.
    pub fn from_json(value: &Value) -> Result<Self, FieldError> {
        let obj = value
            .as_object()
            .ok_or_else(|| FieldError::new("request", "must be a JSON object"))?;
        let request = Self {
            owner_id: fields::non_empty(obj, "owner_id")?,
            owner_name: fields::string(obj, "owner_name")?,
            owner_email: fields::string(obj, "owner_email")?,
            owner_phone: fields::string(obj, "owner_phone")?,
            car_id: fields::non_empty(obj, "car_id")?,
            car_model_name: fields::string(obj, "car_model_name")?,
            car_model_year: fields::integer(obj, "car_model_year")?,
            car_date_purchased: fields::string(obj, "car_date_purchased")?,
        };
        request.validate()?;
        Ok(request)
    }
}
