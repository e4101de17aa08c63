use std::io;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use super::log::EventLog;
use super::records::{
    CarRecord, OwnerRecord, RegistrationRecord, Relation, StationRecord, TransactionOutcome,
    TransactionRecord,
};
use super::relations::{Cardinalities, Event, Relations};
use crate::fields::FieldError;
use crate::protocol::{AuthDecision, ChargeRequest, DenialReason, TransactionDraft};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error(
        "{relation} key {key:?} already exists with different attributes; enter a valid/unique key"
    )]
    KeyConstraintViolation { relation: Relation, key: String },
    #[error("registration {0} already exists")]
    DuplicateRegistration(RegistrationRecord),
    #[error("{relation} {key:?}: {detail}")]
    ForeignKeyViolation {
        relation: Relation,
        key: String,
        detail: String,
    },
    #[error("invalid field {0}")]
    InvalidField(FieldError),
    #[error("invalid transaction: {0}")]
    InvalidTransaction(String),
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("corrupt event log at line {line}: {detail}")]
    CorruptLog { line: usize, detail: String },
    #[error("storage error: {0}")]
    Io(#[from] io::Error),
}

/// The registry: relations plus the event log they are derived from.
///
/// Without a log the store lives purely in memory.
#[derive(Debug, Default)]
pub struct RegistryStore {
    relations: Relations,
    log: Option<EventLog>,
    corrupt: Option<(usize, String)>,
}

fn normalized(s: &str) -> String {
    s.trim().nfc().collect()
}

fn same_text(a: &str, b: &str) -> bool {
    normalized(a) == normalized(b)
}

fn same_email(a: &str, b: &str) -> bool {
    normalized(a).to_lowercase() == normalized(b).to_lowercase()
}

impl RegistryStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `<dir>/events.jsonl`, creating it when absent, and replays it.
    pub fn load(dir: &Path) -> Result<Self, RegistryError> {
        let mut store = Self {
            relations: Relations::default(),
            log: Some(EventLog::open(dir)?),
            corrupt: None,
        };
        store.catch_up_locked()?;
        Ok(store)
    }

    pub fn is_persistent(&self) -> bool {
        self.log.is_some()
    }

    pub fn relations(&self) -> &Relations {
        &self.relations
    }

    pub fn cardinalities(&self) -> Cardinalities {
        self.relations.cardinalities()
    }

    fn check_healthy(&self) -> Result<(), RegistryError> {
        match &self.corrupt {
            Some((line, detail)) => Err(RegistryError::CorruptLog {
                line: *line,
                detail: detail.clone(),
            }),
            None => Ok(()),
        }
    }

    /// Applies lines other writers appended since the last read.
    fn apply_new_lines(&mut self) -> Result<(), RegistryError> {
        let Some(log) = self.log.as_mut() else {
            return Ok(());
        };
        let lines = match log.read_new()? {
            Ok(lines) => lines,
            Err(bad) => {
                self.corrupt = Some((bad.line, bad.detail));
                return self.check_healthy();
            }
        };
        for (line, event) in lines {
            if let Err(detail) = self.relations.apply(event) {
                self.corrupt = Some((line, detail));
                return self.check_healthy();
            }
        }
        Ok(())
    }

    fn catch_up_locked(&mut self) -> Result<(), RegistryError> {
        self.check_healthy()?;
        // Lock through a separate handle so `self` stays mutably borrowable.
        let Some(log) = self.log.as_ref() else {
            return Ok(());
        };
        let lock_file = std::fs::File::open(log.path())?;
        lock_file.lock_shared()?;
        let result = self.apply_new_lines();
        let _ = lock_file.unlock();
        result
    }

    /// Re-reads the log if another process appended to it.
    pub fn refresh(&mut self) -> Result<(), RegistryError> {
        self.check_healthy()?;
        match &self.log {
            Some(log) if log.has_unread()? => self.catch_up_locked(),
            _ => Ok(()),
        }
    }

    pub fn needs_refresh(&self) -> bool {
        self.log
            .as_ref()
            .is_some_and(|log| log.has_unread().unwrap_or(true))
    }

    /// Validates `build`'s events against the latest state, then makes them
    /// durable and applies them. Nothing changes if any step fails.
    fn commit<T>(
        &mut self,
        build: impl FnOnce(&Relations) -> Result<(Vec<Event>, T), RegistryError>,
    ) -> Result<T, RegistryError> {
        self.check_healthy()?;
        let guard_file = match &self.log {
            Some(log) => {
                let f = std::fs::File::open(log.path())?;
                f.lock()?;
                Some(f)
            }
            None => None,
        };
        let result = (|| {
            self.apply_new_lines()?;
            let (events, value) = build(&self.relations)?;
            // Later events may depend on earlier ones, so each is checked
            // after its predecessors are applied; any failure unwinds them.
            for (applied, event) in events.iter().enumerate() {
                if let Err(e) = self.relations.apply(event.clone()) {
                    self.relations.undo(&events[..applied]);
                    return Err(RegistryError::ConstraintViolation(e));
                }
            }
            if let Some(log) = self.log.as_mut() {
                if let Err(e) = log.append(&events) {
                    self.relations.undo(&events);
                    return Err(e.into());
                }
            }
            Ok(value)
        })();
        if let Some(f) = guard_file {
            let _ = f.unlock();
        }
        result
    }

    /// Registers `car` (owned by `owner`) at `station`, adding whichever of
    /// the owner, car and station tuples are new plus the registration tuple.
    ///
    /// An existing tuple is reused only when every attribute matches; any
    /// difference is a key-constraint violation. All constraints are checked
    /// before anything is written.
    pub fn register(
        &mut self,
        owner: OwnerRecord,
        car: CarRecord,
        station: StationRecord,
    ) -> Result<RegistrationRecord, RegistryError> {
        owner.validate().map_err(RegistryError::InvalidField)?;
        car.validate().map_err(RegistryError::InvalidField)?;
        station.validate().map_err(RegistryError::InvalidField)?;
        if car.owner_id != owner.id {
            return Err(RegistryError::ForeignKeyViolation {
                relation: Relation::Car,
                key: car.id.clone(),
                detail: format!(
                    "owner_id {:?} does not match the submitted owner {:?}",
                    car.owner_id, owner.id
                ),
            });
        }
        self.commit(move |rel| {
            let mut events = Vec::with_capacity(4);
            match rel.owners.get(&owner.id) {
                Some(existing) if *existing == owner => {}
                Some(_) => {
                    return Err(RegistryError::KeyConstraintViolation {
                        relation: Relation::Owner,
                        key: owner.id,
                    })
                }
                None => events.push(Event::OwnerAdded(owner)),
            }
            match rel.cars.get(&car.id) {
                Some(existing) if *existing == car => {}
                Some(_) => {
                    return Err(RegistryError::KeyConstraintViolation {
                        relation: Relation::Car,
                        key: car.id,
                    })
                }
                None => events.push(Event::CarAdded(car.clone())),
            }
            match rel.stations.get(&station.id) {
                Some(existing) if *existing == station => {}
                Some(_) => {
                    return Err(RegistryError::KeyConstraintViolation {
                        relation: Relation::Station,
                        key: station.id,
                    })
                }
                None => events.push(Event::StationAdded(station.clone())),
            }
            let registration = RegistrationRecord {
                station_id: station.id,
                car_id: car.id,
                car_owner_id: car.owner_id,
            };
            if rel.registrations.contains(&registration) {
                return Err(RegistryError::DuplicateRegistration(registration));
            }
            events.push(Event::RegistrationAdded(registration.clone()));
            Ok((events, registration))
        })
    }

    /// Adds a station on its own, e.g. before any car is registered there.
    /// Re-adding an identical station is a no-op.
    pub fn add_station(&mut self, station: StationRecord) -> Result<(), RegistryError> {
        station.validate().map_err(RegistryError::InvalidField)?;
        self.commit(move |rel| match rel.stations.get(&station.id) {
            Some(existing) if *existing == station => Ok((Vec::new(), ())),
            Some(_) => Err(RegistryError::KeyConstraintViolation {
                relation: Relation::Station,
                key: station.id,
            }),
            None => Ok((vec![Event::StationAdded(station)], ())),
        })
    }

    /// Whether `request` may charge at `station_id`: the registration triple
    /// must exist and the stored owner and car details must match the
    /// request.
    pub fn authorize(&self, station_id: &str, request: &ChargeRequest) -> AuthDecision {
        let not_registered = |detail: String| AuthDecision::Denied {
            reason: DenialReason::NotRegistered,
            detail,
        };
        let key = RegistrationRecord {
            station_id: station_id.to_string(),
            car_id: request.car_id.clone(),
            car_owner_id: request.owner_id.clone(),
        };
        if !self.relations.registrations.contains(&key) {
            return not_registered(format!("no registration {key}"));
        }
        let (Some(owner), Some(car)) = (
            self.relations.owners.get(&request.owner_id),
            self.relations.cars.get(&request.car_id),
        ) else {
            return not_registered(format!("registration {key} has no owner or car"));
        };
        let request_date =
            NaiveDate::parse_from_str(request.car_date_purchased.trim(), "%Y-%m-%d").ok();
        let mismatch = if !same_text(&owner.name, &request.owner_name) {
            Some("owner_name")
        } else if !same_email(&owner.email, &request.owner_email) {
            Some("owner_email")
        } else if !same_text(&owner.phone, &request.owner_phone) {
            Some("owner_phone")
        } else if !same_text(&car.model_name, &request.car_model_name) {
            Some("car_model_name")
        } else if car.model_year != request.car_model_year {
            Some("car_model_year")
        } else if request_date != Some(car.date_purchased) {
            Some("car_date_purchased")
        } else {
            None
        };
        match mismatch {
            Some(field) => AuthDecision::Denied {
                reason: DenialReason::DetailMismatch,
                detail: format!("{field} differs from the registered value"),
            },
            None => AuthDecision::Granted,
        }
    }

    pub fn record_transaction(
        &mut self,
        draft: TransactionDraft,
    ) -> Result<TransactionRecord, RegistryError> {
        self.record_transaction_at(draft, Utc::now())
    }

    /// Records a paid session under the transaction id the session already
    /// announced in its receipt.
    pub fn record_transaction_at(
        &mut self,
        draft: TransactionDraft,
        timestamp: DateTime<Utc>,
    ) -> Result<TransactionRecord, RegistryError> {
        let record = TransactionRecord {
            id: draft.transaction_id,
            bill_id: draft.bill_id,
            station_id: draft.station_id,
            car_id: draft.car_id,
            owner_id: draft.owner_id,
            kwh: draft.kwh,
            price_per_kwh: draft.price_per_kwh,
            total: draft.total,
            timestamp,
            outcome: TransactionOutcome::Completed,
        };
        if record.id.trim().is_empty() {
            return Err(RegistryError::InvalidTransaction(
                "empty transaction id".into(),
            ));
        }
        record
            .check_amounts()
            .map_err(RegistryError::InvalidTransaction)?;
        self.commit(move |rel| {
            for (relation, key, present) in [
                (
                    Relation::Station,
                    &record.station_id,
                    rel.stations.contains_key(&record.station_id),
                ),
                (
                    Relation::Car,
                    &record.car_id,
                    rel.cars.contains_key(&record.car_id),
                ),
                (
                    Relation::Owner,
                    &record.owner_id,
                    rel.owners.contains_key(&record.owner_id),
                ),
            ] {
                if !present {
                    return Err(RegistryError::ForeignKeyViolation {
                        relation: Relation::Transaction,
                        key: record.id.clone(),
                        detail: format!("references unknown {relation} {key:?}"),
                    });
                }
            }
            let reg = RegistrationRecord {
                station_id: record.station_id.clone(),
                car_id: record.car_id.clone(),
                car_owner_id: record.owner_id.clone(),
            };
            if !rel.registrations.contains(&reg) {
                return Err(RegistryError::ForeignKeyViolation {
                    relation: Relation::Transaction,
                    key: record.id.clone(),
                    detail: format!("references unknown registration {reg}"),
                });
            }
            if rel.transactions.contains_key(&record.id) {
                return Err(RegistryError::KeyConstraintViolation {
                    relation: Relation::Transaction,
                    key: record.id.clone(),
                });
            }
            Ok((vec![Event::TransactionRecorded(record.clone())], record))
        })
    }

    pub fn list_owners(&self) -> Vec<OwnerRecord> {
        self.relations.owners.values().cloned().collect()
    }

    pub fn owner(&self, id: &str) -> Option<&OwnerRecord> {
        self.relations.owners.get(id)
    }

    pub fn car(&self, id: &str) -> Option<&CarRecord> {
        self.relations.cars.get(id)
    }

    pub fn station(&self, id: &str) -> Option<&StationRecord> {
        self.relations.stations.get(id)
    }

    pub fn transaction(&self, id: &str) -> Option<&TransactionRecord> {
        self.relations.transactions.get(id)
    }

    pub fn list_cars(&self, owner_id: Option<&str>) -> Vec<CarRecord> {
        self.relations
            .cars
            .values()
            .filter(|c| owner_id.is_none_or(|o| c.owner_id == o))
            .cloned()
            .collect()
    }

    pub fn list_stations(&self) -> Vec<StationRecord> {
        self.relations.stations.values().cloned().collect()
    }

    pub fn list_registrations(&self, station_id: Option<&str>) -> Vec<RegistrationRecord> {
        self.relations
            .registrations
            .iter()
            .filter(|r| station_id.is_none_or(|s| r.station_id == s))
            .cloned()
            .collect()
    }

    pub fn list_transactions(
        &self,
        station_id: Option<&str>,
        since: Option<DateTime<Utc>>,
    ) -> Vec<TransactionRecord> {
        self.relations
            .transactions
            .values()
            .filter(|t| station_id.is_none_or(|s| t.station_id == s))
            .filter(|t| since.is_none_or(|since| t.timestamp >= since))
            .cloned()
            .collect()
    }
}
