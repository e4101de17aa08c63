use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eav_core::{Kwh, Money};

#[derive(Debug, Parser)]
#[command(name = "eav", version, about = "Machine-to-machine EV charging")]
pub struct Cli {
    /// Registry, transcripts and archive live here.
    #[arg(long, global = true, env = "EAV_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    /// Print results, and errors on stderr, as JSON.
    #[arg(long, global = true)]
    pub json: bool,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a charging station.
    #[command(subcommand)]
    Station(StationCommand),
    /// Run the HTTP registration service.
    #[command(subcommand)]
    Api(ApiCommand),
    /// Register an owner, car and station from a JSON form.
    Register {
        #[arg(long)]
        file: PathBuf,
    },
    /// Act as a vehicle.
    #[command(subcommand)]
    Vehicle(VehicleCommand),
    /// Run fleet simulations.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Inspect the registry.
    #[command(subcommand)]
    Store(StoreCommand),
}

#[derive(Debug, Subcommand)]
pub enum StationCommand {
    /// Serve vehicles one at a time until interrupted.
    Serve(StationArgs),
}

#[derive(Debug, Args)]
pub struct StationArgs {
    #[arg(long)]
    pub station_id: String,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, env = "EAV_STATION_PORT", default_value_t = eav_core::station::DEFAULT_PORT)]
    pub port: u16,
    /// Price per kWh.
    #[arg(long, env = "EAV_TARIFF")]
    pub tariff: Money,
    /// Defaults to `<data-dir>/archive`.
    #[arg(long)]
    pub archive_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub session_timeout_secs: u64,
    /// Seed bill and transaction ids for reproducible runs.
    #[arg(long)]
    pub id_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum ApiCommand {
    /// Serve until interrupted.
    Serve(ApiArgs),
}

#[derive(Debug, Args)]
pub struct ApiArgs {
    #[arg(long, default_value_t = eav_core::api::DEFAULT_API_PORT)]
    pub api_port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Allowed browser origin, or `*`.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum VehicleCommand {
    /// Run one charging session.
    Charge(ChargeArgs),
}

#[derive(Debug, Args)]
pub struct ChargeArgs {
    /// Request document with owner and car details.
    #[arg(long)]
    pub request: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = eav_core::station::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long)]
    pub kwh: Kwh,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run a simulation and print its report.
    Run(SimArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Audit transcripts against the ledger afterwards; discrepancies fail
    /// the command.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Subcommand)]
pub enum StoreCommand {
    /// Print relations.
    Show {
        #[arg(long, value_enum)]
        relation: Option<RelationArg>,
        /// Only registrations and transactions of this station.
        #[arg(long)]
        station: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RelationArg {
    Owners,
    Cars,
    Stations,
    Registrations,
    Transactions,
}
