//! Fleet simulation: a seeded population of owners and cars, some of them
//! registered, charging against in-process stations, summarized into a
//! service-provider report that can be audited against the ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::decimal::{Kwh, Money};
use crate::protocol::{ChargeIntent, ChargeRequest, ProtocolMessage, SessionOutcome};
use crate::registry::{
    CarRecord, OwnerRecord, RegistryError, RegistryStore, SharedRegistry, StationRecord,
};
use crate::station::{
    self, decode_frame, Station, StationConfig, StationError, Transcript, TRANSCRIPTS_DIR,
};
use crate::transport::ChannelTransport;
use crate::vehicle::{self, run_client, SessionReport};

/// Per-read timeout for simulated vehicles. Generous, since queued vehicles
/// wait in the station backlog while earlier sessions finish.
const CLIENT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KwhDistribution {
    Fixed(Kwh),
    Uniform { min: Kwh, max: Kwh },
}

impl KwhDistribution {
    fn sample(&self, rng: &mut impl Rng) -> Kwh {
        match *self {
            Self::Fixed(kwh) => kwh,
            Self::Uniform { min, max } => Kwh::clamped(rng.random_range(min.milli()..=max.milli())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    Sequential,
    Concurrent { max_in_flight: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimTransport {
    /// Real sockets on loopback.
    #[default]
    Tcp,
    /// In-process channels, for fast tests.
    Memory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_stations: usize,
    pub n_vehicles: usize,
    pub registered_fraction: f64,
    pub kwh_distribution: KwhDistribution,
    pub tariff: Money,
    pub arrival: Arrival,
    #[serde(default)]
    pub transport: SimTransport,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimSetupError> {
        let invalid = |m: &str| Err(SimSetupError::InvalidConfig(m.to_string()));
        if self.n_stations == 0 {
            return invalid("n_stations must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.registered_fraction) {
            return invalid("registered_fraction must be in [0, 1]");
        }
        if self.tariff.is_zero() {
            return invalid("tariff must be > 0");
        }
        match self.kwh_distribution {
            KwhDistribution::Fixed(kwh) if kwh.is_zero() => return invalid("kwh must be > 0"),
            KwhDistribution::Uniform { min, max } if min.is_zero() || min > max => {
                return invalid("uniform kwh range must satisfy 0 < min <= max")
            }
            _ => {}
        }
        if let Arrival::Concurrent { max_in_flight: 0 } = self.arrival {
            return invalid("max_in_flight must be >= 1");
        }
        Ok(())
    }

    /// How many vehicles get registered.
    pub fn registered_count(&self) -> usize {
        // The epsilon keeps 100 × 0.29 from flooring to 28.
        ((self.n_vehicles as f64) * self.registered_fraction + 1e-9).floor() as usize
    }
}

#[derive(Debug, Error)]
pub enum SimSetupError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("data directory {0} is not empty")]
    DataDirNotEmpty(PathBuf),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Station(#[from] StationError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationStats {
    pub sessions: usize,
    pub completed: usize,
    pub denied: usize,
    pub error: usize,
    pub energy_sold: Kwh,
    pub revenue: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetReport {
    pub sessions_total: usize,
    pub sessions_completed: usize,
    pub sessions_denied: usize,
    pub sessions_error: usize,
    pub energy_sold: Kwh,
    pub revenue: Money,
    pub per_station: BTreeMap<String, StationStats>,
    pub transcript_dir: PathBuf,
}

/// A report plus the wall-clock figures kept out of it so reports stay
/// reproducible.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub report: FleetReport,
    pub elapsed: Duration,
}

impl SimRun {
    pub fn sessions_per_sec(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs > 0.0 {
            self.report.sessions_total as f64 / secs
        } else {
            0.0
        }
    }
}

/// One simulated vehicle and where it will charge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimVehicle {
    pub owner: OwnerRecord,
    pub car: CarRecord,
    pub registered: bool,
    pub station_id: String,
    pub kwh: Kwh,
}

impl SimVehicle {
    pub fn request(&self) -> ChargeRequest {
        ChargeRequest {
            owner_id: self.owner.id.clone(),
            owner_name: self.owner.name.clone(),
            owner_email: self.owner.email.clone(),
            owner_phone: self.owner.phone.clone(),
            car_id: self.car.id.clone(),
            car_model_name: self.car.model_name.clone(),
            car_model_year: self.car.model_year,
            car_date_purchased: self.car.date_purchased.format("%Y-%m-%d").to_string(),
        }
    }
}

/// The seeded world a simulation runs in.
#[derive(Debug, Clone)]
pub struct Population {
    pub stations: Vec<StationRecord>,
    pub vehicles: Vec<SimVehicle>,
    /// Id seed for each station, in `stations` order.
    pub station_seeds: Vec<u64>,
}

const NAMES: [&str; 8] = [
    "Alice", "Bogdan", "Chen", "Dana", "Emil", "Farida", "Goran", "Hana",
];
const MODELS: [&str; 5] = ["Volt", "Leaf", "Model 3", "Zoe", "e-Golf"];

pub fn station_id(index: usize) -> String {
    format!("station-{:02}", index + 1)
}

/// Generates stations and vehicles. Registered vehicles are picked by a
/// seeded shuffle and assigned to stations round-robin in pick order; the
/// rest charge at station `index % n_stations`.
pub fn populate(config: &SimConfig) -> Population {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let stations: Vec<StationRecord> = (0..config.n_stations)
        .map(|i| StationRecord {
            id: station_id(i),
            name: format!("Station {}", i + 1),
            address: format!("{} Charging Way", 10 * (i + 1)),
        })
        .collect();

    let mut vehicles: Vec<SimVehicle> = (0..config.n_vehicles)
        .map(|i| {
            let name = format!(
                "{} {}",
                NAMES[rng.random_range(0..NAMES.len())],
                (b'A' + rng.random_range(0..26u8)) as char
            );
            let owner_id = format!("owner-{:04}", i + 1);
            let year = rng.random_range(2012..=2024);
            let date = NaiveDate::from_ymd_opt(
                year as i32,
                rng.random_range(1..=12),
                rng.random_range(1..=28),
            )
            .expect("day <= 28 is valid in every month");
            let owner = OwnerRecord {
                id: owner_id.clone(),
                name,
                email: format!("{owner_id}@fleet.example"),
                phone: format!("+1-555-{:04}", rng.random_range(0..10_000)),
            };
            let car = CarRecord {
                id: format!("car-{:04}", i + 1),
                model_name: MODELS[rng.random_range(0..MODELS.len())].to_string(),
                model_year: year,
                date_purchased: date,
                owner_id,
            };
            SimVehicle {
                owner,
                car,
                registered: false,
                station_id: station_id(i % config.n_stations),
                kwh: config.kwh_distribution.sample(&mut rng),
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..vehicles.len()).collect();
    order.shuffle(&mut rng);
    for (rank, &i) in order.iter().take(config.registered_count()).enumerate() {
        vehicles[i].registered = true;
        vehicles[i].station_id = station_id(rank % config.n_stations);
    }
    let station_seeds = (0..config.n_stations).map(|_| rng.next_u64()).collect();
    Population {
        stations,
        vehicles,
        station_seeds,
    }
}

/// Runs the simulation with its registry and transcripts under `data_dir`,
/// which must be empty or absent.
pub fn run_sim(config: &SimConfig, data_dir: &Path) -> Result<FleetReport, SimSetupError> {
    run_sim_timed(config, data_dir).map(|run| run.report)
}

pub fn run_sim_timed(config: &SimConfig, data_dir: &Path) -> Result<SimRun, SimSetupError> {
    config.validate()?;
    if data_dir.exists() && fs::read_dir(data_dir)?.next().is_some() {
        return Err(SimSetupError::DataDirNotEmpty(data_dir.to_path_buf()));
    }
    fs::create_dir_all(data_dir)?;
    let started = Instant::now();

    let population = populate(config);
    let registry = SharedRegistry::new(RegistryStore::load(data_dir)?);
    {
        let mut store = registry.write();
        for station in &population.stations {
            store.add_station(station.clone())?;
        }
        for v in population.vehicles.iter().filter(|v| v.registered) {
            let station = population
                .stations
                .iter()
                .find(|s| s.id == v.station_id)
                .expect("vehicles are assigned to generated stations");
            store.register(v.owner.clone(), v.car.clone(), station.clone())?;
        }
    }

    let configs: Vec<StationConfig> = population
        .stations
        .iter()
        .zip(&population.station_seeds)
        .map(|(s, &seed)| {
            let mut c = StationConfig::new(s.id.clone(), config.tariff, data_dir);
            c.port = 0;
            c.id_seed = Some(seed);
            c.session_timeout = CLIENT_TIMEOUT;
            c
        })
        .collect();

    let results = match config.transport {
        SimTransport::Tcp => run_tcp(config, &population, configs, &registry)?,
        SimTransport::Memory => run_memory(config, &population, configs, &registry)?,
    };

    let report = aggregate(&population, &results, data_dir.join(TRANSCRIPTS_DIR));
    let elapsed = started.elapsed();
    info!(
        sessions = report.sessions_total,
        elapsed_ms = elapsed.as_millis() as u64,
        "simulation finished"
    );
    Ok(SimRun { report, elapsed })
}

type SessionResult = Result<SessionReport, String>;

fn intent(v: &SimVehicle, index: usize, station: SocketAddr) -> ChargeIntent {
    ChargeIntent {
        request: v.request(),
        file_name: format!("vehicle-{:04}.json", index + 1),
        kwh: v.kwh,
        station,
    }
}

fn station_index(population: &Population, id: &str) -> usize {
    population
        .stations
        .iter()
        .position(|s| s.id == id)
        .expect("vehicles are assigned to generated stations")
}

/// Runs `job` for every vehicle index, sequentially or on a worker pool, and
/// returns results in vehicle order.
fn for_each_vehicle(
    arrival: Arrival,
    n: usize,
    job: impl Fn(usize) -> SessionResult + Sync,
) -> Vec<SessionResult> {
    match arrival {
        Arrival::Sequential => (0..n).map(job).collect(),
        Arrival::Concurrent { max_in_flight } => {
            let next = AtomicUsize::new(0);
            let slots: Vec<Mutex<Option<SessionResult>>> =
                (0..n).map(|_| Mutex::new(None)).collect();
            thread::scope(|scope| {
                for _ in 0..max_in_flight.min(n) {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= n {
                            break;
                        }
                        let result = job(i);
                        *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(result);
                    });
                }
            });
            slots
                .into_iter()
                .map(|slot| {
                    slot.into_inner()
                        .unwrap_or_else(|e| e.into_inner())
                        .expect("every index is claimed by a worker")
                })
                .collect()
        }
    }
}

fn run_tcp(
    config: &SimConfig,
    population: &Population,
    configs: Vec<StationConfig>,
    registry: &SharedRegistry,
) -> Result<Vec<SessionResult>, SimSetupError> {
    let handles = configs
        .into_iter()
        .map(|c| station::spawn(c, registry.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let addrs: Vec<SocketAddr> = handles.iter().map(|h| h.local_addr()).collect();
    let results = for_each_vehicle(config.arrival, population.vehicles.len(), |i| {
        let v = &population.vehicles[i];
        let addr = addrs[station_index(population, &v.station_id)];
        vehicle::charge_with_timeout(&intent(v, i, addr), CLIENT_TIMEOUT).map_err(|e| e.to_string())
    });
    for handle in handles {
        handle.shutdown();
    }
    Ok(results)
}

fn run_memory(
    config: &SimConfig,
    population: &Population,
    configs: Vec<StationConfig>,
    registry: &SharedRegistry,
) -> Result<Vec<SessionResult>, SimSetupError> {
    let stations = configs
        .into_iter()
        .map(|c| Station::new(c, registry.clone()).map(Mutex::new))
        .collect::<Result<Vec<_>, _>>()?;
    let unrouted = SocketAddr::from((Ipv4Addr::LOCALHOST, 0));
    Ok(for_each_vehicle(
        config.arrival,
        population.vehicles.len(),
        |i| {
            let v = &population.vehicles[i];
            // Holding the station lock keeps each station single-lane.
            let mut guard = stations[station_index(population, &v.station_id)]
                .lock()
                .unwrap_or_else(|e| e.into_inner());
            let station: &mut Station = &mut guard;
            let (mut server_end, mut client_end) = ChannelTransport::pair(Some(CLIENT_TIMEOUT));
            let intent = intent(v, i, unrouted);
            Ok(thread::scope(|scope| {
                scope.spawn(move || {
                    station.run_session(&mut server_end, None);
                });
                run_client(&mut client_end, &intent, |_| {})
            }))
        },
    ))
}

fn aggregate(
    population: &Population,
    results: &[SessionResult],
    transcript_dir: PathBuf,
) -> FleetReport {
    let mut per_station: BTreeMap<String, StationStats> = population
        .stations
        .iter()
        .map(|s| (s.id.clone(), StationStats::default()))
        .collect();
    for (v, result) in population.vehicles.iter().zip(results) {
        let stats = per_station
            .get_mut(&v.station_id)
            .expect("vehicles are assigned to generated stations");
        stats.sessions += 1;
        match result {
            Ok(report) => match (&report.outcome, &report.bill) {
                (SessionOutcome::Completed { .. }, Some(bill)) => {
                    stats.completed += 1;
                    stats.energy_sold = [stats.energy_sold, bill.kwh].into_iter().sum();
                    stats.revenue = [stats.revenue, bill.total].into_iter().sum();
                }
                (SessionOutcome::DeniedUnregistered, _) => stats.denied += 1,
                _ => stats.error += 1,
            },
            Err(_) => stats.error += 1,
        }
    }
    let stats = per_station.values();
    FleetReport {
        sessions_total: stats.clone().map(|s| s.sessions).sum(),
        sessions_completed: stats.clone().map(|s| s.completed).sum(),
        sessions_denied: stats.clone().map(|s| s.denied).sum(),
        sessions_error: stats.clone().map(|s| s.error).sum(),
        energy_sold: stats.clone().map(|s| s.energy_sold).sum(),
        revenue: stats.map(|s| s.revenue).sum(),
        per_station,
        transcript_dir,
    }
}

/// A way in which the transcripts, the ledger and the report disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Discrepancy {
    UnreadableTranscript {
        path: PathBuf,
        detail: String,
    },
    MissingReceipt {
        session_id: String,
    },
    OrphanedTranscript {
        session_id: String,
        transaction_id: String,
    },
    BillMismatch {
        session_id: String,
        transaction_id: String,
        transcript_kwh: Kwh,
        transcript_total: Money,
        ledger_kwh: Kwh,
        ledger_total: Money,
    },
    PaymentMismatch {
        session_id: String,
        transaction_id: String,
        transcript_amount: Option<Money>,
        ledger_total: Money,
    },
    UntranscribedTransaction {
        transaction_id: String,
    },
    CompletedCountMismatch {
        report: usize,
        transcripts: usize,
    },
    EnergyMismatch {
        report: Kwh,
        ledger: Kwh,
    },
    RevenueMismatch {
        report: Money,
        ledger: Money,
    },
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnreadableTranscript { path, detail } => {
                write!(f, "unreadable transcript {}: {detail}", path.display())
            }
            Self::MissingReceipt { session_id } => {
                write!(f, "session {session_id} completed without a receipt")
            }
            Self::OrphanedTranscript {
                session_id,
                transaction_id,
            } => write!(
                f,
                "session {session_id} receipted transaction {transaction_id}, which the ledger lacks"
            ),
            Self::BillMismatch {
                session_id,
                transaction_id,
                transcript_kwh,
                transcript_total,
                ledger_kwh,
                ledger_total,
            } => write!(
                f,
                "session {session_id} billed {transcript_kwh} kWh for {transcript_total}, \
                 ledger {transaction_id} has {ledger_kwh} kWh for {ledger_total}"
            ),
            Self::PaymentMismatch {
                session_id,
                transaction_id,
                transcript_amount,
                ledger_total,
            } => {
                let paid = transcript_amount.map_or("nothing".to_string(), |m| m.to_string());
                write!(
                    f,
                    "session {session_id} paid {paid}, ledger {transaction_id} totals {ledger_total}"
                )
            }
            Self::UntranscribedTransaction { transaction_id } => {
                write!(f, "ledger transaction {transaction_id} has no completed transcript")
            }
            Self::CompletedCountMismatch {
                report,
                transcripts,
            } => write!(
                f,
                "report counts {report} completed sessions, transcripts show {transcripts}"
            ),
            Self::EnergyMismatch { report, ledger } => {
                write!(f, "report energy {report} kWh, ledger sums to {ledger} kWh")
            }
            Self::RevenueMismatch { report, ledger } => {
                write!(f, "report revenue {report}, ledger sums to {ledger}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCheck {
    pub completed_transcripts: usize,
    pub transactions: usize,
    pub discrepancies: Vec<Discrepancy>,
}

impl LedgerCheck {
    pub fn passed(&self) -> bool {
        self.discrepancies.is_empty()
    }
}

fn read_transcripts(dir: &Path) -> io::Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Cross-checks the station transcripts in the report's transcript
/// directory against the ledger in `store`, and both against the report.
pub fn verify_ledger(report: &FleetReport, store: &RegistryStore) -> LedgerCheck {
    let mut check = LedgerCheck::default();
    let stations: BTreeSet<&str> = report.per_station.keys().map(String::as_str).collect();
    let ledger: Vec<_> = store
        .list_transactions(None, None)
        .into_iter()
        .filter(|t| stations.contains(t.station_id.as_str()))
        .collect();
    check.transactions = ledger.len();
    let mut receipted = BTreeSet::new();

    let paths = match read_transcripts(&report.transcript_dir) {
        Ok(paths) => paths,
        Err(e) => {
            check.discrepancies.push(Discrepancy::UnreadableTranscript {
                path: report.transcript_dir.clone(),
                detail: e.to_string(),
            });
            Vec::new()
        }
    };
    for path in paths {
        let transcript = match Transcript::read(&path) {
            Ok(t) => t,
            Err(e) => {
                check.discrepancies.push(Discrepancy::UnreadableTranscript {
                    path,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        if !transcript
            .outcome()
            .is_some_and(SessionOutcome::is_completed)
        {
            continue;
        }
        check.completed_transcripts += 1;
        let session_id = transcript.session_id().unwrap_or_default().to_string();
        let decode_all = |frames: Vec<&serde_json::Value>| -> Vec<ProtocolMessage> {
            frames
                .into_iter()
                .filter_map(|f| decode_frame(f).ok())
                .collect()
        };
        let outbound = decode_all(transcript.outbound());
        let inbound = decode_all(transcript.inbound());

        let Some(transaction_id) = outbound.iter().find_map(|m| match m {
            ProtocolMessage::Receipt { transaction_id, .. } => Some(transaction_id.clone()),
            _ => None,
        }) else {
            check
                .discrepancies
                .push(Discrepancy::MissingReceipt { session_id });
            continue;
        };
        receipted.insert(transaction_id.clone());
        let Some(record) = store.transaction(&transaction_id) else {
            check.discrepancies.push(Discrepancy::OrphanedTranscript {
                session_id,
                transaction_id,
            });
            continue;
        };

        let bill = outbound.iter().find_map(|m| match m {
            ProtocolMessage::Bill(b) => Some(b),
            _ => None,
        });
        if let Some(bill) = bill {
            if bill.kwh != record.kwh || bill.total != record.total {
                check.discrepancies.push(Discrepancy::BillMismatch {
                    session_id: session_id.clone(),
                    transaction_id: transaction_id.clone(),
                    transcript_kwh: bill.kwh,
                    transcript_total: bill.total,
                    ledger_kwh: record.kwh,
                    ledger_total: record.total,
                });
            }
        }
        // A tampered amount may no longer decode, so read it from the raw
        // frame as a fallback.
        let paid = inbound
            .iter()
            .find_map(|m| match m {
                ProtocolMessage::Payment { amount, .. } => Some(*amount),
                _ => None,
            })
            .or_else(|| raw_payment_amount(&transcript));
        if paid != Some(record.total) {
            check.discrepancies.push(Discrepancy::PaymentMismatch {
                session_id,
                transaction_id,
                transcript_amount: paid,
                ledger_total: record.total,
            });
        }
    }

    for t in &ledger {
        if !receipted.contains(&t.id) {
            check
                .discrepancies
                .push(Discrepancy::UntranscribedTransaction {
                    transaction_id: t.id.clone(),
                });
        }
    }
    if check.completed_transcripts != report.sessions_completed {
        check
            .discrepancies
            .push(Discrepancy::CompletedCountMismatch {
                report: report.sessions_completed,
                transcripts: check.completed_transcripts,
            });
    }
    let ledger_energy: Kwh = ledger.iter().map(|t| t.kwh).sum();
    if ledger_energy != report.energy_sold {
        check.discrepancies.push(Discrepancy::EnergyMismatch {
            report: report.energy_sold,
            ledger: ledger_energy,
        });
    }
    let ledger_revenue: Money = ledger.iter().map(|t| t.total).sum();
    if ledger_revenue != report.revenue {
        check.discrepancies.push(Discrepancy::RevenueMismatch {
            report: report.revenue,
            ledger: ledger_revenue,
        });
    }
    check
}

fn raw_payment_amount(transcript: &Transcript) -> Option<Money> {
    transcript.inbound().into_iter().find_map(|frame| {
        if frame.get("type")?.as_str()? != "payment" {
            return None;
        }
        Money::from_f64(frame.get("amount")?.as_f64()?).ok()
    })
}
