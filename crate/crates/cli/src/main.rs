use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use radio_cli::{load_ratings, read_catalog, stats_json, write_matrix_csv, CliError};
use radio_core::analytics::AnalysisUnit;
use radio_service::{Engine, ServiceConfig};
use radio_sim::{run_simulation, SimConfig};

#[derive(Parser)]
#[command(name = "radio", version, about = "Generative radio curation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// TOML or JSON config; RADIO_* env vars override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Rating analytics as JSON, identical to GET /api/stats.
    Stats {
        /// Event log or ratings JSON lines.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "per_song_mean")]
        unit: AnalysisUnit,
        /// Also write the correlation matrix as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Needed only to replay an event log.
        #[arg(long, default_value = "fixtures/catalog.json")]
        catalog: PathBuf,
    },
    /// Closed-loop simulation with synthetic listeners.
    Simulate {
        #[arg(long, default_value = "fixtures/catalog.json")]
        catalog: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 5)]
        primes_per_epoch: usize,
        #[arg(long, default_value_t = 8)]
        gamma: usize,
        #[arg(long = "M", default_value_t = 64)]
        m: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        listeners: usize,
        #[arg(long, default_value_t = 5)]
        ratings_per_song: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value = "linear")]
        population: String,
        /// CSV report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full JSON report, including per-decision traces.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        match e {
            CliError::Core(radio_core::Error::Validation(msg)) => {
                Cli::command().error(ErrorKind::ValueValidation, msg).exit()
            }
            CliError::Service(radio_service::ServiceError::Config(msg)) => {
                Cli::command().error(ErrorKind::InvalidValue, msg).exit()
            }
            other => {
                eprintln!("error: {other}");
                std::process::exit(1);
            }
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Serve { config, catalog, bind } => {
            let mut cfg = ServiceConfig::from_env(config.as_deref())?;
            if let Some(c) = catalog {
                cfg.catalog_path = c;
            }
            if let Some(b) = bind {
                cfg.bind_addr = b;
            }
            let engine = Engine::open(cfg)?;
            tokio::runtime::Runtime::new()?.block_on(radio_service::serve(engine))?;
        }
        Command::Stats {
            input,
            unit,
            csv,
            catalog,
        } => {
            let ratings = load_ratings(&input, || read_catalog(&catalog))?;
            let (report, json) = stats_json(&ratings, unit);
            io::stdout().write_all(json.as_bytes())?;
            if let Some(path) = csv {
                write_matrix_csv(&report, fs::File::create(path)?)?;
            }
        }
        Command::Simulate {
            catalog,
            epochs,
            primes_per_epoch,
            gamma,
            m,
            seed,
            listeners,
            ratings_per_song,
            noise_sd,
            population,
            out,
            json,
        } => {
            let cfg = SimConfig {
                listeners,
                epochs,
                primes_per_epoch,
                ratings_per_song,
                gamma,
                m,
                seed,
                noise_sd,
                population,
                ..SimConfig::default()
            };
            cfg.validate()?;
            let report = run_simulation(&read_catalog(&catalog)?, &cfg)?;
            match out {
                Some(path) => report.write_csv(fs::File::create(path)?)?,
                None => report.write_csv(io::stdout().lock())?,
            }
            if let Some(path) = json {
                fs::write(path, report.to_json())?;
            }
        }
    }
    Ok(())
}
