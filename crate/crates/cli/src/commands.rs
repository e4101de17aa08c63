use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use eav_core::api::{self, RegistrationSubmission};
use eav_core::fleetsim::{self, SimConfig, SimSetupError};
use eav_core::registry::RegistryError;
use eav_core::station::{self, StationConfig, StationError};
use eav_core::vehicle::{self, ChargeIntent, VehicleError};
use eav_core::{RegistryStore, SessionOutcome, SharedRegistry};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::{ApiArgs, ChargeArgs, RelationArg, SimArgs, StationArgs};

pub const DEFAULT_DATA_DIR: &str = "eav-data";

/// A domain failure. Maps to exit code 1.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub details: Map<String, Value>,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            details: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.into(), value.into());
        self
    }

    pub fn to_json(&self) -> Value {
        let mut doc = Map::new();
        doc.insert("kind".into(), self.kind.into());
        doc.insert("message".into(), self.message.clone().into());
        doc.extend(self.details.clone());
        Value::Object(doc)
    }
}

impl From<RegistryError> for CliError {
    fn from(err: RegistryError) -> Self {
        let message = err.to_string();
        match err {
            RegistryError::KeyConstraintViolation { relation, key } => {
                CliError::new("key_conflict", message)
                    .with("relation", relation.as_str())
                    .with("key", key)
            }
            RegistryError::DuplicateRegistration(reg) => {
                CliError::new("duplicate", message).with("registration", reg.to_string())
            }
            RegistryError::ForeignKeyViolation { relation, key, .. } => {
                CliError::new("foreign_key", message)
                    .with("relation", relation.as_str())
                    .with("key", key)
            }
            RegistryError::InvalidField(field) => CliError::new("invalid_fields", message)
                .with("fields", json!({ field.field: field.reason })),
            RegistryError::CorruptLog { line, .. } => {
                CliError::new("corrupt_store", message).with("line", line)
            }
            _ => CliError::new("storage", message),
        }
    }
}

impl From<StationError> for CliError {
    fn from(err: StationError) -> Self {
        match err {
            StationError::Registry(e) => e.into(),
            StationError::UnknownStation(ref id) => {
                let id = id.clone();
                CliError::new("unknown_station", err.to_string()).with("station_id", id)
            }
            other => CliError::new("station", other.to_string()),
        }
    }
}

impl From<SimSetupError> for CliError {
    fn from(err: SimSetupError) -> Self {
        match err {
            SimSetupError::Registry(e) => e.into(),
            SimSetupError::Station(e) => e.into(),
            SimSetupError::InvalidConfig(_) => CliError::new("invalid_config", err.to_string()),
            SimSetupError::DataDirNotEmpty(_) => {
                CliError::new("data_dir_not_empty", err.to_string())
            }
            SimSetupError::Io(_) => CliError::new("io", err.to_string()),
        }
    }
}

/// What a successful command prints: a JSON document and its text rendering.
pub struct Output {
    pub json: Value,
    pub text: String,
}

impl Output {
    /// For servers, which already announced themselves on startup.
    pub fn silent() -> Self {
        Self {
            json: Value::Null,
            text: String::new(),
        }
    }
}

fn read_json(path: &Path, kind: &'static str) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new(kind, format!("{} is not valid JSON: {e}", path.display())))
}

fn open_store(data_dir: &Path) -> Result<RegistryStore, CliError> {
    Ok(RegistryStore::load(data_dir)?)
}

/// Blocks until SIGINT or SIGTERM.
fn wait_for_interrupt() -> Result<(), CliError> {
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(|e| CliError::new("signal", e.to_string()))?;
    let _ = rx.recv();
    Ok(())
}

pub fn station_serve(args: StationArgs, data_dir: &Path, json: bool) -> Result<Output, CliError> {
    let mut config = StationConfig::new(args.station_id, args.tariff, data_dir);
    config.bind_address = args.bind;
    config.port = args.port;
    config.session_timeout = Duration::from_secs(args.session_timeout_secs);
    config.id_seed = args.id_seed;
    if let Some(dir) = args.archive_dir {
        config.archive_dir = dir;
    }
    let registry = SharedRegistry::new(open_store(data_dir)?);
    let station_id = config.station_id.clone();
    let handle = station::spawn(config, registry)?;
    let addr = handle.local_addr();
    // Announce readiness before blocking so scripts can wait on it.
    if json {
        println!(
            "{}",
            json!({ "event": "listening", "station_id": station_id, "addr": addr.to_string() })
        );
    } else {
        println!("station {station_id} listening on {addr}");
    }
    wait_for_interrupt()?;
    tracing::info!("interrupted; finishing current session");
    handle.shutdown();
    Ok(Output::silent())
}

pub fn api_serve(args: ApiArgs, data_dir: &Path, json: bool) -> Result<Output, CliError> {
    let registry = SharedRegistry::new(open_store(data_dir)?);
    let addr = SocketAddr::new(args.bind, args.api_port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new("io", e.to_string()))?;
    if json {
        println!(
            "{}",
            json!({ "event": "listening", "addr": addr.to_string() })
        );
    } else {
        println!("registration API listening on {addr}");
    }
    runtime
        .block_on(api::serve(addr, registry, args.cors_origin))
        .map_err(|e| CliError::new("io", format!("cannot serve on {addr}: {e}")))?;
    Ok(Output::silent())
}

pub fn register(file: &Path, data_dir: &Path) -> Result<Output, CliError> {
    let doc = read_json(file, "invalid_request")?;
    let form = RegistrationSubmission::from_json(&doc).map_err(|fields| {
        CliError::new("invalid_fields", "registration form has invalid fields")
            .with("fields", json!(fields))
    })?;
    let (owner, car, station) = form.into_records().map_err(RegistryError::InvalidField)?;
    let mut store = open_store(data_dir)?;
    let reg = store.register(owner, car, station)?;
    Ok(Output {
        json: json!({
            "registration": reg.to_string(),
            "station_id": reg.station_id,
            "car_id": reg.car_id,
            "owner_id": reg.car_owner_id,
        }),
        text: reg.to_string(),
    })
}

pub fn vehicle_charge(args: ChargeArgs) -> Result<Output, CliError> {
    let request = vehicle::load_charge_request(&args.request).map_err(|e| match e {
        VehicleError::InvariantViolation(ref f) => {
            let fields = json!({ f.field.clone(): f.reason.clone() });
            CliError::new("invalid_request", e.to_string()).with("fields", fields)
        }
        other => CliError::new("invalid_request", other.to_string()),
    })?;
    let file_name = args
        .request
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "request.json".into());
    let intent = ChargeIntent {
        request,
        file_name,
        kwh: args.kwh,
        station: SocketAddr::new(args.host, args.port),
    };
    let report = vehicle::charge_with_timeout(&intent, Duration::from_secs(args.timeout_secs))
        .map_err(|e| match e {
            VehicleError::ConnectError { addr, .. } => {
                CliError::new("connect_error", e.to_string()).with("addr", addr.to_string())
            }
            other => CliError::new("io", other.to_string()),
        })?;
    match report.outcome {
        SessionOutcome::Completed { transaction_id } => {
            let text = match &report.bill {
                Some(bill) => format!(
                    "charged {} kWh at {} per kWh, paid {}; transaction {transaction_id}",
                    bill.kwh, bill.price_per_kwh, bill.total
                ),
                None => format!("transaction {transaction_id}"),
            };
            Ok(Output {
                json: json!({
                    "outcome": "completed",
                    "transaction_id": transaction_id,
                    "bill": report.bill,
                }),
                text,
            })
        }
        SessionOutcome::DeniedUnregistered => Err(CliError::new(
            "denied",
            "station denied the request: car is not registered there",
        )),
        SessionOutcome::PaymentMismatch => Err(CliError::new(
            "payment_mismatch",
            "station rejected the payment",
        )),
        SessionOutcome::ProtocolError { detail } => Err(CliError::new("protocol_error", detail)),
    }
}

fn scratch_dir() -> PathBuf {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or_default();
    std::env::temp_dir().join(format!("eav-sim-{}-{nanos}", std::process::id()))
}

pub fn sim_run(args: SimArgs, data_dir: Option<&Path>) -> Result<Output, CliError> {
    let doc = read_json(&args.config, "invalid_config")?;
    let config: SimConfig = serde_json::from_value(doc)
        .map_err(|e| CliError::new("invalid_config", format!("invalid simulation config: {e}")))?;
    let dir = data_dir.map(Path::to_path_buf).unwrap_or_else(scratch_dir);
    let run = fleetsim::run_sim_timed(&config, &dir)?;
    let (elapsed, throughput) = (run.elapsed, run.sessions_per_sec());
    tracing::info!(
        elapsed_ms = elapsed.as_millis() as u64,
        sessions_per_sec = throughput,
        "simulation finished"
    );
    let report = run.report;
    let report_json = serde_json::to_value(&report).expect("report serializes");
    if let Some(out) = &args.out {
        let body = serde_json::to_string_pretty(&report_json).expect("report serializes");
        fs::write(out, body + "\n")
            .map_err(|e| CliError::new("io", format!("cannot write {}: {e}", out.display())))?;
    }
    if args.verify {
        let check = fleetsim::verify_ledger(&report, &open_store(&dir)?);
        if !check.passed() {
            return Err(CliError::new(
                "ledger_mismatch",
                format!("{} ledger discrepancies", check.discrepancies.len()),
            )
            .with("discrepancies", json!(check.discrepancies)));
        }
    }
    let mut text = format!(
        "{} sessions: {} completed, {} denied, {} errors; {} kWh sold for {}\n",
        report.sessions_total,
        report.sessions_completed,
        report.sessions_denied,
        report.sessions_error,
        report.energy_sold,
        report.revenue
    );
    for (id, s) in &report.per_station {
        text.push_str(&format!(
            "  {id}: {} sessions, {} completed, {} kWh, {}\n",
            s.sessions, s.completed, s.energy_sold, s.revenue
        ));
    }
    text.push_str(&format!(
        "{:.2}s, {:.1} sessions/s; transcripts in {}",
        elapsed.as_secs_f64(),
        throughput,
        report.transcript_dir.display()
    ));
    Ok(Output {
        json: report_json,
        text,
    })
}

pub fn store_show(
    data_dir: &Path,
    relation: Option<RelationArg>,
    station: Option<&str>,
) -> Result<Output, CliError> {
    let store = open_store(data_dir)?;
    let wanted = |r: RelationArg| relation.is_none_or(|x| x == r);
    let mut doc = Map::new();
    let mut text = String::new();
    let mut section = |name: &str, rows: Vec<Value>, lines: Vec<String>| {
        text.push_str(&format!("{name} ({})\n", rows.len()));
        for line in lines {
            text.push_str(&format!("  {line}\n"));
        }
        doc.insert(name.into(), Value::Array(rows));
    };
    if wanted(RelationArg::Owners) {
        let rows = store.list_owners();
        let lines = rows
            .iter()
            .map(|o| format!("{} {} <{}> {}", o.id, o.name, o.email, o.phone))
            .collect();
        section("owners", to_values(&rows), lines);
    }
    if wanted(RelationArg::Cars) {
        let rows = store.list_cars(None);
        let lines = rows
            .iter()
            .map(|c| {
                format!(
                    "{} {} {} bought {} owner {}",
                    c.id, c.model_name, c.model_year, c.date_purchased, c.owner_id
                )
            })
            .collect();
        section("cars", to_values(&rows), lines);
    }
    if wanted(RelationArg::Stations) {
        let rows = store.list_stations();
        let lines = rows
            .iter()
            .map(|s| format!("{} {}, {}", s.id, s.name, s.address))
            .collect();
        section("stations", to_values(&rows), lines);
    }
    if wanted(RelationArg::Registrations) {
        let rows = store.list_registrations(station);
        let lines = rows.iter().map(|r| r.to_string()).collect();
        section("registrations", to_values(&rows), lines);
    }
    if wanted(RelationArg::Transactions) {
        let rows = store.list_transactions(station, None);
        let lines = rows
            .iter()
            .map(|t| {
                format!(
                    "{} {} car {} {} kWh x {} = {} at {}",
                    t.id,
                    t.station_id,
                    t.car_id,
                    t.kwh,
                    t.price_per_kwh,
                    t.total,
                    t.timestamp.to_rfc3339()
                )
            })
            .collect();
        section("transactions", to_values(&rows), lines);
    }
    Ok(Output {
        json: Value::Object(doc),
        text: text.trim_end().to_string(),
    })
}

fn to_values<T: Serialize>(rows: &[T]) -> Vec<Value> {
    rows.iter()
        .map(|r| serde_json::to_value(r).expect("records serialize"))
        .collect()
}
