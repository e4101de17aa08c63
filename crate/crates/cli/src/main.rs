mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use args::{ApiCommand, Cli, Command, SimCommand, StationCommand, StoreCommand, VehicleCommand};
use commands::{CliError, Output, DEFAULT_DATA_DIR};

fn main() -> ExitCode {
    // clap exits with 2 on usage errors.
    let cli = Cli::parse();
    let filter = EnvFilter::try_new(&cli.log_level).unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            match (json, out.json.is_null()) {
                (_, true) => {}
                (true, false) => println!("{}", out.json),
                (false, false) => println!("{}", out.text),
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            if json {
                eprintln!("{}", err.to_json());
            } else {
                eprintln!("error: {}", err.message);
            }
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Output, CliError> {
    let explicit_dir = cli.data_dir;
    let data_dir = explicit_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
    match cli.command {
        Command::Station(StationCommand::Serve(args)) => {
            commands::station_serve(args, &data_dir, cli.json)
        }
        Command::Api(ApiCommand::Serve(args)) => commands::api_serve(args, &data_dir, cli.json),
        Command::Register { file } => commands::register(&file, &data_dir),
        Command::Vehicle(VehicleCommand::Charge(args)) => commands::vehicle_charge(args),
        // Without an explicit directory a simulation runs in a fresh scratch one.
        Command::Sim(SimCommand::Run(args)) => commands::sim_run(args, explicit_dir.as_deref()),
        Command::Store(StoreCommand::Show { relation, station }) => {
            commands::store_show(&data_dir, relation, station.as_deref())
        }
    }
}
