//! Field-by-field extraction from loosely typed JSON objects, so that
//! validation failures can name the offending field.

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn required(field: impl Into<String>) -> Self {
        Self::new(field, "required")
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

pub(crate) fn string(obj: &Map<String, Value>, field: &str) -> Result<String, FieldError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(FieldError::required(field)),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(FieldError::new(field, "must be a string")),
    }
}

/// Like [`string`] but also rejects blank values.
pub(crate) fn non_empty(obj: &Map<String, Value>, field: &str) -> Result<String, FieldError> {
    let s = string(obj, field)?;
    if s.trim().is_empty() {
        return Err(FieldError::required(field));
    }
    Ok(s)
}

pub(crate) fn integer(obj: &Map<String, Value>, field: &str) -> Result<i64, FieldError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(FieldError::required(field)),
        Some(Value::Number(n)) => n
            .as_i64()
            .ok_or_else(|| FieldError::new(field, "must be an integer")),
        Some(_) => Err(FieldError::new(field, "must be an integer")),
    }
}

pub(crate) fn number(obj: &Map<String, Value>, field: &str) -> Result<f64, FieldError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(FieldError::required(field)),
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| FieldError::new(field, "must be a number")),
        Some(_) => Err(FieldError::new(field, "must be a number")),
    }
}

/// Collects every field error instead of stopping at the first one.
#[derive(Debug, Default)]
pub(crate) struct Collector {
    pub errors: Vec<FieldError>,
}

impl Collector {
    pub fn take<T>(&mut self, result: Result<T, FieldError>) -> Option<T> {
        match result {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(e);
                None
            }
        }
    }
}
