//! HTTP registration service over the registry.
//!
//! ```text
//! POST /api/v1/registrations              201 | 409 | 422
//! GET  /api/v1/stations
//! GET  /api/v1/stations/{id}/registrations
//! GET  /api/v1/stations/{id}/transactions
//! GET  /api/v1/owners/{id}/cars
//! ```
//!
//! List endpoints accept `?limit=N`.

use std::collections::BTreeMap;
use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::fields::{self, Collector, FieldError};
use crate::protocol::{check_model_year, parse_date};
use crate::registry::{CarRecord, OwnerRecord, RegistryError, SharedRegistry, StationRecord};

pub const DEFAULT_API_PORT: u16 = 7432;

/// The registration form, flattened into one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationSubmission {
    pub owner_id: String,
    pub owner_name: String,
    pub owner_email: String,
    pub owner_phone: String,
    pub car_id: String,
    pub car_model_name: String,
    pub car_model_year: i64,
    pub car_date_purchased: String,
    pub station_id: String,
    pub station_name: String,
    pub station_address: String,
}

const TEXT_FIELDS: [&str; 10] = [
    "owner_id",
    "owner_name",
    "owner_email",
    "owner_phone",
    "car_id",
    "car_model_name",
    "car_date_purchased",
    "station_id",
    "station_name",
    "station_address",
];

impl RegistrationSubmission {
    /// Validates a submitted document, collecting an error for every bad
    /// field.
    pub fn from_json(value: &Value) -> Result<Self, BTreeMap<String, String>> {
        let Some(obj) = value.as_object() else {
            return Err(BTreeMap::from([(
                "body".to_string(),
                "must be a JSON object".to_string(),
            )]));
        };
        let mut errors = Collector::default();
        let mut text: BTreeMap<&str, String> = BTreeMap::new();
        for field in TEXT_FIELDS {
            if let Some(v) = errors.take(fields::non_empty(obj, field)) {
                text.insert(field, v);
            }
        }
        if let Some(email) = text.get("owner_email") {
            if !looks_like_email(email) {
                errors
                    .errors
                    .push(FieldError::new("owner_email", "must be an email address"));
            }
        }
        if let Some(date) = text.get("car_date_purchased") {
            errors.take(parse_date("car_date_purchased", date));
        }
        let year = errors
            .take(fields::integer(obj, "car_model_year"))
            .and_then(|y| errors.take(check_model_year("car_model_year", y).map(|_| y)));

        if !errors.errors.is_empty() {
            return Err(errors
                .errors
                .into_iter()
                .map(|e| (e.field, e.reason))
                .collect());
        }
        let mut take = |f: &str| text.remove(f).unwrap_or_default();
        Ok(Self {
            owner_id: take("owner_id"),
            owner_name: take("owner_name"),
            owner_email: take("owner_email"),
            owner_phone: take("owner_phone"),
            car_id: take("car_id"),
            car_model_name: take("car_model_name"),
            car_model_year: year.unwrap_or_default(),
            car_date_purchased: take("car_date_purchased"),
            station_id: take("station_id"),
            station_name: take("station_name"),
            station_address: take("station_address"),
        })
    }

    /// Splits the form into the three records it describes. Assumes the
    /// submission passed [`Self::from_json`].
    pub fn into_records(self) -> Result<(OwnerRecord, CarRecord, StationRecord), FieldError> {
        let date_purchased = parse_date("car_date_purchased", &self.car_date_purchased)?;
        Ok((
            OwnerRecord {
                id: self.owner_id.clone(),
                name: self.owner_name,
                email: self.owner_email,
                phone: self.owner_phone,
            },
            CarRecord {
                id: self.car_id,
                model_name: self.car_model_name,
                model_year: self.car_model_year,
                date_purchased,
                owner_id: self.owner_id,
            },
            StationRecord {
                id: self.station_id,
                name: self.station_name,
                address: self.station_address,
            },
        ))
    }
}

fn looks_like_email(s: &str) -> bool {
    match s.trim().split_once('@') {
        Some((local, domain)) => !local.is_empty() && !domain.is_empty() && !domain.contains('@'),
        None => false,
    }
}

#[derive(Debug, Deserialize)]
struct ListParams {
    limit: Option<usize>,
}

fn limited<T: Serialize>(mut rows: Vec<T>, params: &ListParams) -> Json<Vec<T>> {
    if let Some(limit) = params.limit {
        rows.truncate(limit);
    }
    Json(rows)
}

/// Maps a registry failure onto the status codes of the registration
/// endpoint.
pub fn error_response(err: &RegistryError) -> (StatusCode, Value) {
    match err {
        RegistryError::KeyConstraintViolation { relation, key } => (
            StatusCode::CONFLICT,
            json!({"relation": relation, "key": key, "reason": err.to_string()}),
        ),
        RegistryError::DuplicateRegistration(reg) => (
            StatusCode::CONFLICT,
            json!({"relation": "registration", "key": reg.to_string(), "reason": err.to_string()}),
        ),
        RegistryError::ForeignKeyViolation { relation, key, .. } => (
            StatusCode::CONFLICT,
            json!({"relation": relation, "key": key, "reason": err.to_string()}),
        ),
        RegistryError::InvalidField(e) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({ e.field.clone(): e.reason.clone() }),
        ),
        _ => (
            StatusCode::INTERNAL_SERVER_ERROR,
            json!({"error": err.to_string()}),
        ),
    }
}

async fn create_registration(State(registry): State<SharedRegistry>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({"error": format!("body is not JSON: {e}")})),
            )
                .into_response()
        }
    };
    let submission = match RegistrationSubmission::from_json(&value) {
        Ok(s) => s,
        Err(errors) => return (StatusCode::UNPROCESSABLE_ENTITY, Json(errors)).into_response(),
    };
    let (owner, car, station) = match submission.into_records() {
        Ok(records) => records,
        Err(e) => {
            return (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(json!({ e.field: e.reason })),
            )
                .into_response()
        }
    };
    let result =
        tokio::task::spawn_blocking(move || registry.write().register(owner, car, station)).await;
    match result {
        Ok(Ok(registration)) => (StatusCode::CREATED, Json(registration)).into_response(),
        Ok(Err(e)) => {
            let (status, body) = error_response(&e);
            (status, Json(body)).into_response()
        }
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({"error": e.to_string()})),
        )
            .into_response(),
    }
}

async fn list_stations(
    State(registry): State<SharedRegistry>,
    Query(params): Query<ListParams>,
) -> impl IntoResponse {
    limited(registry.read().list_stations(), &params)
}

async fn station_registrations(
    State(registry): State<SharedRegistry>,
    Path(id): Path<String>,
    Query(params): Query<ListParams>,
) -> impl IntoResponse {
    limited(registry.read().list_registrations(Some(&id)), &params)
}

async fn station_transactions(
    State(registry): State<SharedRegistry>,
    Path(id): Path<String>,
    Query(params): Query<ListParams>,
) -> impl IntoResponse {
    limited(registry.read().list_transactions(Some(&id), None), &params)
}

async fn owner_cars(
    State(registry): State<SharedRegistry>,
    Path(id): Path<String>,
    Query(params): Query<ListParams>,
) -> impl IntoResponse {
    limited(registry.read().list_cars(Some(&id)), &params)
}

/// Builds the service. `cors_origin` of `"*"` allows any origin.
pub fn router(registry: SharedRegistry, cors_origin: Option<&str>) -> Router {
    let app = Router::new()
        .route("/api/v1/registrations", post(create_registration))
        .route("/api/v1/stations", get(list_stations))
        .route(
            "/api/v1/stations/{id}/registrations",
            get(station_registrations),
        )
        .route(
            "/api/v1/stations/{id}/transactions",
            get(station_transactions),
        )
        .route("/api/v1/owners/{id}/cars", get(owner_cars))
        .with_state(registry);
    let origin = match cors_origin {
        None => return app,
        Some("*") => AllowOrigin::any(),
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => {
                tracing::warn!("ignoring invalid CORS origin {origin:?}");
                return app;
            }
        },
    };
    app.layer(
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
    )
}

/// Serves until the process is interrupted.
pub async fn serve(
    addr: SocketAddr,
    registry: SharedRegistry,
    cors_origin: Option<String>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = ?listener.local_addr().ok(), "registration API listening");
    axum::serve(listener, router(registry, cors_origin.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form() -> Value {
        json!({
            "owner_id": "o1", "owner_name": "Ada", "owner_email": "ada@example.org",
            "owner_phone": "+7 000", "car_id": "c1", "car_model_name": "Model E",
            "car_model_year": 2019, "car_date_purchased": "2019-05-01",
            "station_id": "s1", "station_name": "Main St", "station_address": "1 Main St"
        })
    }

    #[test]
    fn accepts_complete_form() {
        let s = RegistrationSubmission::from_json(&form()).unwrap();
        let (owner, car, station) = s.into_records().unwrap();
        assert_eq!(car.owner_id, owner.id);
        assert_eq!(station.id, "s1");
    }

    #[test]
    fn reports_every_bad_field() {
        let mut v = form();
        let obj = v.as_object_mut().unwrap();
        obj.remove("owner_email");
        obj.insert("car_model_year".into(), json!(1800));
        obj.insert("station_id".into(), json!(""));
        let errors = RegistrationSubmission::from_json(&v).unwrap_err();
        assert_eq!(
            errors.get("owner_email").map(String::as_str),
            Some("required")
        );
        assert!(errors.contains_key("car_model_year"));
        assert_eq!(
            errors.get("station_id").map(String::as_str),
            Some("required")
        );
        assert_eq!(errors.len(), 3);
    }

    #[test]
    fn checks_email_shape() {
        assert!(looks_like_email("a@b"));
        assert!(!looks_like_email("ab"));
        assert!(!looks_like_email("@b"));
        assert!(!looks_like_email("a@b@c"));
    }
}
