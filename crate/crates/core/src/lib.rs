//! Machine-to-machine charging for electric autonomous vehicles.
//!
//! A charging station listens on a fixed address. A vehicle connects, sends
//! its request document (owner and car identity), and is authorized against
//! the station's registry. Authorized vehicles ask for an amount of energy,
//! receive a bill, pay it, and get a receipt; the station records the
//! transaction in an append-only ledger.
//!
//! - [`protocol`]: wire messages, framing, session state machines
//! - [`registry`]: owners, cars, stations, registrations, transactions
//! - [`station`]: the charging-station daemon
//! - [`vehicle`]: the vehicle client
//! - [`api`]: HTTP registration service
//! - [`fleetsim`]: deterministic fleet simulation and ledger audit

pub mod api;
pub mod billing;
pub mod decimal;
pub mod fields;
pub mod fleetsim;
pub mod ids;
pub mod protocol;
pub mod registry;
pub mod station;
pub mod transport;
pub mod vehicle;

pub use decimal::{Kwh, Money};
pub use protocol::{ChargeRequest, ProtocolMessage, SessionOutcome};
pub use registry::{RegistryStore, SharedRegistry};
