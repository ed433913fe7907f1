mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covroute_core::{DetectorKind, Error, Objective, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(name = "covroute", version, about = "Covert multi-hop DSSS routing against a cyclostationary detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo calibration of Willie's detectors over the configured grid.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Detector to calibrate; defaults to every detector the scenario uses.
        #[arg(long)]
        detector: Vec<DetectorKind>,
        /// Trials per hypothesis and grid cell.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Allocates power, bandwidth and spreading gain for one hop.
    Allocate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solve: SolveArgs,
        /// Transmitting node (default: Alice).
        #[arg(long)]
        tx: Option<usize>,
        /// Receiving node (default: Bob).
        #[arg(long)]
        rx: Option<usize>,
    },
    /// Builds the hop graph and solves for the optimal route.
    Route {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Runs the configured parameter sweep, one routing solve per grid point.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Detectors to sweep; overrides the config.
        #[arg(long)]
        detector: Vec<DetectorKind>,
    },
    /// Writes the scenario topology and its gain table.
    GenTopology {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: grid-covert, grid-latency, grid-dep-sweep or grid-m-sweep.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct SolveArgs {
    /// Objective: covert_max or latency_min; overrides the config.
    #[arg(long)]
    mode: Option<Objective>,
    /// Calibration table to route against: cycle or energy; overrides the config.
    #[arg(long)]
    detector: Option<DetectorKind>,
}

impl Common {
    fn scenario(&self) -> covroute_core::Result<ScenarioConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(name)) => ScenarioConfig::preset(name)?,
            (None, None) => return Err(Error::Config("either --config or --preset is required".into())),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

impl SolveArgs {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(detector) = self.detector {
            cfg.detector = detector;
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Calibrate { common, detector, trials } => {
            let mut cfg = common.scenario()?;
            if let Some(t) = trials {
                cfg.calibration.trials = t;
            }
            let kinds = if detector.is_empty() { cfg.detectors() } else { detector };
            commands::calibrate(&cfg, &kinds)
        }
        Command::Allocate { common, solve, tx, rx } => {
            let mut cfg = common.scenario()?;
            solve.apply(&mut cfg);
            commands::allocate(&cfg, tx, rx)
        }
        Command::Route { common, solve } => {
            let mut cfg = common.scenario()?;
            solve.apply(&mut cfg);
            commands::route(&cfg)
        }
        Command::Sweep { common, detector } => {
            let mut cfg = common.scenario()?;
            if !detector.is_empty() {
                if let Some(s) = &mut cfg.sweep {
                    s.detectors = detector;
                }
            }
            commands::sweep(&cfg)
        }
        Command::GenTopology { common } => commands::gen_topology(&common.scenario()?),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible(_) | Error::Disconnected(_)) => 3,
        Some(Error::MissingCalibration(_) | Error::FingerprintMismatch { .. }) => 4,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
