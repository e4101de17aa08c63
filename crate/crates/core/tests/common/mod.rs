#![allow(dead_code)]

pub mod protocol;
pub mod reference;

use chrono::NaiveDate;
use eav_core::registry::{CarRecord, OwnerRecord, StationRecord};
use eav_core::ChargeRequest;

pub fn owner(id: &str) -> OwnerRecord {
    OwnerRecord {
        id: id.into(),
        name: "Ada Lovelace".into(),
        email: "ada@example.org".into(),
        phone: "+44 20 0000".into(),
    }
}

pub fn car(id: &str, owner_id: &str) -> CarRecord {
    CarRecord {
        id: id.into(),
        model_name: "Model E".into(),
        model_year: 2019,
        date_purchased: NaiveDate::from_ymd_opt(2019, 5, 1).unwrap(),
        owner_id: owner_id.into(),
    }
}

pub fn station(id: &str) -> StationRecord {
    StationRecord {
        id: id.into(),
        name: format!("Station {id}"),
        address: "1 Main St".into(),
    }
}

/// The request document matching [`owner`] and [`car`].
pub fn request(owner_id: &str, car_id: &str) -> ChargeRequest {
    let o = owner(owner_id);
    let c = car(car_id, owner_id);
    ChargeRequest {
        owner_id: o.id,
        owner_name: o.name,
        owner_email: o.email,
        owner_phone: o.phone,
        car_id: c.id,
        car_model_name: c.model_name,
        car_model_year: c.model_year,
        car_date_purchased: "2019-05-01".into(),
    }
}

pub fn kwh(s: &str) -> eav_core::Kwh {
    s.parse().unwrap()
}

pub fn money(s: &str) -> eav_core::Money {
    s.parse().unwrap()
}
