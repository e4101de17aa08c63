use std::collections::HashSet;

use chrono::NaiveDate;
use proptest::prelude::*;

use super::{car, money, owner, station};
use eav_core::decimal::bill_total;
use eav_core::protocol::TransactionDraft;
use eav_core::registry::{
    CarRecord, Cardinalities, OwnerRecord, RegistrationRecord, RegistryError, RegistryStore,
    Relation, StationRecord,
};
use eav_core::{Kwh, Money};

/// A deliberately naive registry: vectors and linear scans.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reference {
    pub owners: Vec<OwnerRecord>,
    pub cars: Vec<CarRecord>,
    pub stations: Vec<StationRecord>,
    pub registrations: Vec<RegistrationRecord>,
    pub transactions: Vec<(String, String, String, String, Kwh, Money)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Key(Relation),
    Duplicate,
    Foreign,
    Invalid,
}

pub fn verdict<T>(result: &Result<T, RegistryError>) -> Verdict {
    match result {
        Ok(_) => Verdict::Ok,
        Err(RegistryError::KeyConstraintViolation { relation, .. }) => Verdict::Key(*relation),
        Err(RegistryError::DuplicateRegistration(_)) => Verdict::Duplicate,
        Err(RegistryError::ForeignKeyViolation { .. }) => Verdict::Foreign,
        Err(RegistryError::InvalidTransaction(_)) => Verdict::Invalid,
        Err(e) => panic!("unexpected registry error {e}"),
    }
}

impl Reference {
    pub fn register(&mut self, o: &OwnerRecord, c: &CarRecord, s: &StationRecord) -> Verdict {
        if c.owner_id != o.id {
            return Verdict::Foreign;
        }
        let owner_new = match self.owners.iter().find(|x| x.id == o.id) {
            Some(x) if x == o => false,
            Some(_) => return Verdict::Key(Relation::Owner),
            None => true,
        };
        let car_new = match self.cars.iter().find(|x| x.id == c.id) {
            Some(x) if x == c => false,
            Some(_) => return Verdict::Key(Relation::Car),
            None => true,
        };
        let station_new = match self.stations.iter().find(|x| x.id == s.id) {
            Some(x) if x == s => false,
            Some(_) => return Verdict::Key(Relation::Station),
            None => true,
        };
        let reg = RegistrationRecord {
            station_id: s.id.clone(),
            car_id: c.id.clone(),
            car_owner_id: o.id.clone(),
        };
        if self.registrations.contains(&reg) {
            return Verdict::Duplicate;
        }
        if owner_new {
            self.owners.push(o.clone());
        }
        if car_new {
            self.cars.push(c.clone());
        }
        if station_new {
            self.stations.push(s.clone());
        }
        self.registrations.push(reg);
        Verdict::Ok
    }

    pub fn add_station(&mut self, s: &StationRecord) -> Verdict {
        match self.stations.iter().find(|x| x.id == s.id) {
            Some(x) if x == s => Verdict::Ok,
            Some(_) => Verdict::Key(Relation::Station),
            None => {
                self.stations.push(s.clone());
                Verdict::Ok
            }
        }
    }

    pub fn record(&mut self, d: &TransactionDraft) -> Verdict {
        if d.kwh.is_zero() || d.total != bill_total(d.kwh, d.price_per_kwh) {
            return Verdict::Invalid;
        }
        let reg = RegistrationRecord {
            station_id: d.station_id.clone(),
            car_id: d.car_id.clone(),
            car_owner_id: d.owner_id.clone(),
        };
        if !self.registrations.contains(&reg) {
            return Verdict::Foreign;
        }
        if self.transactions.iter().any(|t| t.0 == d.transaction_id) {
            return Verdict::Key(Relation::Transaction);
        }
        self.transactions.push((
            d.transaction_id.clone(),
            d.station_id.clone(),
            d.car_id.clone(),
            d.owner_id.clone(),
            d.kwh,
            d.total,
        ));
        Verdict::Ok
    }

    pub fn cardinalities(&self) -> Cardinalities {
        Cardinalities {
            owners: self.owners.len(),
            cars: self.cars.len(),
            stations: self.stations.len(),
            registrations: self.registrations.len(),
            transactions: self.transactions.len(),
        }
    }

    pub fn matches(&self, store: &RegistryStore) -> bool {
        let txs: Vec<_> = store
            .list_transactions(None, None)
            .into_iter()
            .map(|t| (t.id, t.station_id, t.car_id, t.owner_id, t.kwh, t.total))
            .collect();
        store.list_owners() == self.owners
            && store.list_cars(None) == self.cars
            && store.list_stations() == self.stations
            && store.list_registrations(None) == self.registrations
            && txs == self.transactions
    }
}

pub fn assert_invariants(store: &RegistryStore) {
    let owners = store.list_owners();
    let cars = store.list_cars(None);
    let stations = store.list_stations();
    let regs = store.list_registrations(None);
    let txs = store.list_transactions(None, None);

    let unique = |ids: Vec<&str>| ids.iter().collect::<HashSet<_>>().len() == ids.len();
    assert!(
        unique(owners.iter().map(|o| o.id.as_str()).collect()),
        "owner ids"
    );
    assert!(
        unique(cars.iter().map(|c| c.id.as_str()).collect()),
        "car ids"
    );
    assert!(
        unique(stations.iter().map(|s| s.id.as_str()).collect()),
        "station ids"
    );
    assert!(
        unique(txs.iter().map(|t| t.id.as_str()).collect()),
        "transaction ids"
    );
    assert_eq!(
        regs.iter().collect::<HashSet<_>>().len(),
        regs.len(),
        "triples"
    );

    for c in &cars {
        assert!(
            owners.iter().any(|o| o.id == c.owner_id),
            "car {} dangles",
            c.id
        );
    }
    for r in &regs {
        assert!(stations.iter().any(|s| s.id == r.station_id), "{r} station");
        assert!(
            cars.iter()
                .any(|c| c.id == r.car_id && c.owner_id == r.car_owner_id),
            "{r} car"
        );
    }
    for t in &txs {
        assert!(regs.iter().any(|r| r.station_id == t.station_id
            && r.car_id == t.car_id
            && r.car_owner_id == t.owner_id));
    }
}

pub fn draft(id: &str, s: &str, c: &str, o: &str, kwh: Kwh, price: Money) -> TransactionDraft {
    TransactionDraft {
        transaction_id: id.into(),
        bill_id: format!("bill-{id}"),
        station_id: s.into(),
        car_id: c.into(),
        owner_id: o.into(),
        kwh,
        price_per_kwh: price,
        total: bill_total(kwh, price),
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Register {
        owner: usize,
        name: usize,
        car: usize,
        year: usize,
        car_owner: usize,
        station: usize,
        addr: usize,
    },
    AddStation {
        station: usize,
        addr: usize,
    },
    Record {
        tx: usize,
        station: usize,
        car: usize,
        owner: usize,
        kwh: u64,
        tamper: bool,
    },
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => (0..4usize, 0..2usize, 0..5usize, 0..2usize, 0..5usize, 0..3usize, 0..2usize).prop_map(
            |(owner, name, car, year, co, station, addr)| Op::Register {
                owner,
                name,
                car,
                year,
                // Mostly consistent, sometimes the car claims another owner.
                car_owner: if co < 4 { owner } else { (owner + 1) % 4 },
                station,
                addr,
            }
        ),
        1 => (0..3usize, 0..2usize).prop_map(|(station, addr)| Op::AddStation { station, addr }),
        3 => (0..6usize, 0..3usize, 0..5usize, 0..4usize, 0..20_000u64, proptest::bool::weighted(0.1))
            .prop_map(|(tx, station, car, owner, kwh, tamper)| Op::Record { tx, station, car, owner, kwh, tamper }),
    ]
}

fn materialize_register(
    owner_i: usize,
    name: usize,
    car_i: usize,
    year: usize,
    car_owner: usize,
    station_i: usize,
    addr: usize,
) -> (OwnerRecord, CarRecord, StationRecord) {
    let mut o = owner(&format!("o{owner_i}"));
    o.name = ["Ada", "Grace"][name].into();
    let mut c = car(&format!("c{car_i}"), &format!("o{car_owner}"));
    c.model_year = [2019, 2020][year];
    c.date_purchased = NaiveDate::from_ymd_opt(2019, 5, 1).unwrap();
    let mut s = station(&format!("s{station_i}"));
    s.address = ["1 Main St", "2 Side St"][addr].into();
    (o, c, s)
}

pub fn run_ops(
    store: &mut RegistryStore,
    reference: &mut Reference,
    ops: &[Op],
) -> Result<(), TestCaseError> {
    let price = money("0.10");
    for op in ops {
        let before = store.relations().clone();
        let (got, want) = match op {
            Op::Register {
                owner,
                name,
                car,
                year,
                car_owner,
                station,
                addr,
            } => {
                let (o, c, s) =
                    materialize_register(*owner, *name, *car, *year, *car_owner, *station, *addr);
                (
                    verdict(&store.register(o.clone(), c.clone(), s.clone())),
                    reference.register(&o, &c, &s),
                )
            }
            Op::AddStation { station: i, addr } => {
                let mut s = station(&format!("s{i}"));
                s.address = ["1 Main St", "2 Side St"][*addr].into();
                (
                    verdict(&store.add_station(s.clone())),
                    reference.add_station(&s),
                )
            }
            Op::Record {
                tx,
                station,
                car,
                owner,
                kwh,
                tamper,
            } => {
                let mut d = draft(
                    &format!("t{tx}"),
                    &format!("s{station}"),
                    &format!("c{car}"),
                    &format!("o{owner}"),
                    Kwh::from_milli(*kwh).unwrap(),
                    price,
                );
                if *tamper {
                    d.total = Money::from_cents(d.total.cents() + 1).unwrap();
                }
                (
                    verdict(&store.record_transaction(d.clone())),
                    reference.record(&d),
                )
            }
        };
        prop_assert_eq!(&got, &want, "op {:?}", op);
        if got != Verdict::Ok {
            prop_assert!(
                store.relations().identical(&before),
                "failed op mutated state: {:?}",
                op
            );
        }
        prop_assert!(reference.matches(store));
        assert_invariants(store);
    }
    Ok(())
}
