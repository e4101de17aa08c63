//! Owners, cars, charging stations, the station-has-car registrations that
//! gate charging, and the transaction ledger.
//!
//! Every mutation is an event appended to `<data-dir>/events.jsonl`; loading
//! a directory replays the log from empty.

mod log;
mod records;
mod relations;
mod store;

use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

pub use log::{EventLog, EVENT_LOG_FILE};
pub use records::{
    CarRecord, OwnerRecord, RegistrationRecord, Relation, StationRecord, TransactionOutcome,
    TransactionRecord,
};
pub use relations::{Cardinalities, Event, Relations};
pub use store::{RegistryError, RegistryStore};

use crate::protocol::{AuthDecision, Authorizer, ChargeRequest};

/// A registry shared between threads. Writers are serialized through the
/// write lock; readers see a consistent snapshot.
#[derive(Debug, Clone)]
pub struct SharedRegistry {
    inner: Arc<RwLock<RegistryStore>>,
}

impl SharedRegistry {
    pub fn new(store: RegistryStore) -> Self {
        Self {
            inner: Arc::new(RwLock::new(store)),
        }
    }

    /// Read access, after picking up anything other processes appended.
    pub fn read(&self) -> RwLockReadGuard<'_, RegistryStore> {
        let stale = self
            .inner
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .needs_refresh();
        if stale {
            let mut store = self.write();
            if let Err(e) = store.refresh() {
                tracing::error!("registry refresh failed: {e}");
            }
        }
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, RegistryStore> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn authorizer(&self, station_id: impl Into<String>) -> StationAuthorizer {
        StationAuthorizer {
            registry: self.clone(),
            station_id: station_id.into(),
        }
    }
}

/// Authorization bound to one station.
#[derive(Debug, Clone)]
pub struct StationAuthorizer {
    registry: SharedRegistry,
    station_id: String,
}

impl Authorizer for StationAuthorizer {
    fn authorize(&self, request: &ChargeRequest) -> AuthDecision {
        self.registry.read().authorize(&self.station_id, request)
    }
}
