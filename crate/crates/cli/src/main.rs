use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use uvturb_cli::analyze::{analyze_measurements, parse_measurements};
use uvturb_cli::phase::phase_table;
use uvturb_cli::run::{run_mcs_compare, run_scenario, run_sweep, sweep_report, SweepAxis};
use uvturb_cli::{CliError, Report, ScenarioConfig};

/// Turbulent NLOS ultraviolet channel simulator.
///
/// Every global flag can also be set through an environment variable with
/// the UVTURB_ prefix; flags win over the environment, which wins over the
/// config file.
#[derive(Parser)]
#[command(name = "uvturb", version)]
struct Cli {
    /// Scenario file (`key = value unit` lines); reference link if omitted
    #[arg(long, global = true, env = "UVTURB_CONFIG")]
    config: Option<PathBuf>,

    #[arg(long, global = true, env = "UVTURB_SEED")]
    seed: Option<u64>,

    /// Worker threads
    #[arg(long, global = true, env = "UVTURB_WORKERS")]
    workers: Option<u64>,

    /// Paths per scattering order
    #[arg(long, global = true, env = "UVTURB_SAMPLES")]
    samples: Option<u64>,

    /// Highest scattering order
    #[arg(long, global = true, env = "UVTURB_ORDERS")]
    orders: Option<u64>,

    /// Output file; stdout if omitted
    #[arg(long, global = true, env = "UVTURB_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-order power, turbulent variance and fading density
    Scenario,
    /// One scenario per value along an axis
    Sweep {
        /// distance (m), zenith (deg, both ends) or cn2 (m^-2/3)
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Conventional Monte-Carlo variance against the integration estimator
    McsCompare {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
        m_list: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
    /// Phase functions on a log-spaced angle grid
    Phase {
        #[arg(long, default_value_t = 512)]
        points: usize,
        /// Eddy sizes in m; the configured one if omitted
        #[arg(long, value_delimiter = ',')]
        eddy_sizes: Vec<f64>,
    },
    /// Scintillation statistics of a measured signal
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::parse(&read(path)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if let Some(v) = cli.samples {
        cfg.samples = v;
    }
    if let Some(v) = cli.orders {
        cfg.orders = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    if let Command::Analyze { input, bins } = &cli.command {
        let text = read(input)?;
        let samples = parse_measurements(&text)?;
        let digest = format!("{:x}", Sha256::digest(text.as_bytes()));
        return Ok(analyze_measurements(&samples, *bins)?.report(&input.display().to_string(), &digest));
    }
    let cfg = load_config(cli)?;
    Ok(match &cli.command {
        Command::Scenario => run_scenario(&cfg)?.report(&cfg),
        Command::Sweep { axis, values } => sweep_report(&cfg, *axis, &run_sweep(&cfg, *axis, values)?),
        Command::McsCompare { m_list, reps } => run_mcs_compare(&cfg, m_list, *reps)?.report(&cfg, *reps),
        Command::Phase { points, eddy_sizes } => phase_table(&cfg, *points, eddy_sizes)?.report(&cfg),
        Command::Analyze { .. } => unreachable!(),
    })
}

fn emit(cli: &Cli, report: &Report) -> Result<(), CliError> {
    match &cli.out {
        Some(path) => fs::write(path, report.as_str()).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => std::io::stdout()
            .write_all(report.as_str().as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli).and_then(|r| emit(&cli, &r)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
