use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use super::records::{
    CarRecord, OwnerRecord, RegistrationRecord, StationRecord, TransactionRecord,
};

/// One durable change to the registry. The relations are exactly the fold of
/// these events over an empty registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event_type", rename_all = "snake_case")]
pub enum Event {
    OwnerAdded(OwnerRecord),
    CarAdded(CarRecord),
    StationAdded(StationRecord),
    RegistrationAdded(RegistrationRecord),
    TransactionRecorded(TransactionRecord),
}

/// The five relations, each in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Relations {
    pub(crate) owners: IndexMap<String, OwnerRecord>,
    pub(crate) cars: IndexMap<String, CarRecord>,
    pub(crate) stations: IndexMap<String, StationRecord>,
    pub(crate) registrations: IndexSet<RegistrationRecord>,
    pub(crate) transactions: IndexMap<String, TransactionRecord>,
}

/// Relation sizes, in owner/car/station/registration/transaction order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cardinalities {
    pub owners: usize,
    pub cars: usize,
    pub stations: usize,
    pub registrations: usize,
    pub transactions: usize,
}

impl Relations {
    pub fn cardinalities(&self) -> Cardinalities {
        Cardinalities {
            owners: self.owners.len(),
            cars: self.cars.len(),
            stations: self.stations.len(),
            registrations: self.registrations.len(),
            transactions: self.transactions.len(),
        }
    }

    /// Checks that `event` keeps every relation invariant, without applying it.
    pub fn check(&self, event: &Event) -> Result<(), String> {
        match event {
            Event::OwnerAdded(owner) => {
                owner.validate().map_err(|e| e.to_string())?;
                if self.owners.contains_key(&owner.id) {
                    return Err(format!("duplicate owner id {:?}", owner.id));
                }
            }
            Event::CarAdded(car) => {
                car.validate().map_err(|e| e.to_string())?;
                if self.cars.contains_key(&car.id) {
                    return Err(format!("duplicate car id {:?}", car.id));
                }
                if !self.owners.contains_key(&car.owner_id) {
                    return Err(format!(
                        "car {:?} references unknown owner {:?}",
                        car.id, car.owner_id
                    ));
                }
            }
            Event::StationAdded(station) => {
                station.validate().map_err(|e| e.to_string())?;
                if self.stations.contains_key(&station.id) {
                    return Err(format!("duplicate station id {:?}", station.id));
                }
            }
            Event::RegistrationAdded(reg) => {
                if self.registrations.contains(reg) {
                    return Err(format!("duplicate registration {reg}"));
                }
                if !self.stations.contains_key(&reg.station_id) {
                    return Err(format!(
                        "registration references unknown station {:?}",
                        reg.station_id
                    ));
                }
                match self.cars.get(&reg.car_id) {
                    None => {
                        return Err(format!(
                            "registration references unknown car {:?}",
                            reg.car_id
                        ))
                    }
                    Some(car) if car.owner_id != reg.car_owner_id => {
                        return Err(format!(
                            "registration owner {:?} is not the owner of car {:?}",
                            reg.car_owner_id, reg.car_id
                        ))
                    }
                    Some(_) => {}
                }
            }
            Event::TransactionRecorded(tx) => {
                if tx.id.trim().is_empty() {
                    return Err("empty transaction id".into());
                }
                if self.transactions.contains_key(&tx.id) {
                    return Err(format!("duplicate transaction id {:?}", tx.id));
                }
                tx.check_amounts()?;
                let reg = RegistrationRecord {
                    station_id: tx.station_id.clone(),
                    car_id: tx.car_id.clone(),
                    car_owner_id: tx.owner_id.clone(),
                };
                if !self.registrations.contains(&reg) {
                    return Err(format!("transaction references unknown registration {reg}"));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, event: Event) -> Result<(), String> {
        self.check(&event)?;
        match event {
            Event::OwnerAdded(owner) => {
                self.owners.insert(owner.id.clone(), owner);
            }
            Event::CarAdded(car) => {
                self.cars.insert(car.id.clone(), car);
            }
            Event::StationAdded(station) => {
                self.stations.insert(station.id.clone(), station);
            }
            Event::RegistrationAdded(reg) => {
                self.registrations.insert(reg);
            }
            Event::TransactionRecorded(tx) => {
                self.transactions.insert(tx.id.clone(), tx);
            }
        }
        Ok(())
    }

    /// Reverts `events`, which must be the most recently applied ones.
    /// Applying only ever inserts fresh keys, so popping restores the
    /// previous state exactly.
    pub(crate) fn undo(&mut self, events: &[Event]) {
        for event in events.iter().rev() {
            match event {
                Event::OwnerAdded(_) => {
                    self.owners.pop();
                }
                Event::CarAdded(_) => {
                    self.cars.pop();
                }
                Event::StationAdded(_) => {
                    self.stations.pop();
                }
                Event::RegistrationAdded(_) => {
                    self.registrations.pop();
                }
                Event::TransactionRecorded(_) => {
                    self.transactions.pop();
                }
            }
        }
    }

    /// Order-sensitive equality: same records in the same insertion order.
    pub fn identical(&self, other: &Self) -> bool {
        self.owners.iter().eq(other.owners.iter())
            && self.cars.iter().eq(other.cars.iter())
            && self.stations.iter().eq(other.stations.iter())
            && self.registrations.iter().eq(other.registrations.iter())
            && self.transactions.iter().eq(other.transactions.iter())
    }
}
