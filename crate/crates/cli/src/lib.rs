//! Command-line front end: optimize, sweep, simulate, bound, verify, place.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;

use config::{parse_grid, parse_user_grid, ConfigFile, Network, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Core(txcache::Error),
    Io(String),
    /// Verification ran and found violations; the report is already out.
    Verification(usize),
}

impl From<txcache::Error> for CliError {
    fn from(e: txcache::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => EXIT_VERIFY,
            _ => EXIT_USAGE,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Config(m) => ("config", m.clone()),
            CliError::Core(e) => (e.kind(), e.to_string()),
            CliError::Io(m) => ("io", m.clone()),
            CliError::Verification(n) => ("verification", format!("{n} checks failed")),
        };
        serde_json::json!({ "error": kind, "message": message })
    }
}

#[derive(Debug, Parser)]
#[command(name = "txcache", version, about = "Popularity-aware transmitter cache placement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal segmentation and redundancies for one (K, alpha) point.
    Optimize(Common),
    /// Achieved gain and gain bound over a (K, alpha) grid, as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Skip the optimizer and report the bound only.
        #[arg(long)]
        bound_only: bool,
    },
    /// Monte Carlo DoF statistics of the optimized placement, as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write per-trial rows (K, alpha, trial, delay, dof).
        #[arg(long)]
        per_trial: Option<PathBuf>,
    },
    /// Gain ceiling and delay lower bound over a grid, as CSV.
    Bound(Common),
    /// Oracle and certificate checks at desk scale; exit 2 on any violation.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Add 0.1 to the first coded redundancy before certifying.
        #[arg(long)]
        inject_perturbation: bool,
    },
    /// Transmitter and receiver placement manifests for one point, as JSON.
    Place {
        #[command(flatten)]
        common: Common,
        /// Leave the receiver cache map out of the manifest.
        #[arg(long)]
        no_receivers: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file with keys N, K, K_T, gamma, gamma_T, F, lambda, alpha, trials, seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter preset the config file and flags override.
    #[arg(long, value_enum, default_value = "one")]
    pub scenario: Scenario,
    #[arg(long, conflicts_with = "alpha_grid")]
    pub alpha: Option<f64>,
    /// `a,b,c` or `start:step:end`.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    #[arg(long, conflicts_with = "k_grid")]
    pub k: Option<usize>,
    /// `a,b,c` or `start:step:end`.
    #[arg(long)]
    pub k_grid: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Charge the whole broadcast block whenever one of its files is requested.
    #[arg(long)]
    pub strict_b1: bool,
    /// Largest sub-library count tried.
    #[arg(long, default_value_t = txcache::search::DEFAULT_MAX_SUBLIBRARIES)]
    pub qmax: usize,
}

/// Everything a command needs, with defaults applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub network: Network,
    pub users: Vec<usize>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub strict_b1: bool,
    pub qmax: usize,
}

pub const DEFAULT_USERS: [usize; 4] = [300, 500, 1000, 2000];

pub fn default_alphas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 5.0).collect()
}

impl Common {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let file = self.config.as_deref().map(ConfigFile::load).transpose()?;
        let network = Network::resolve(self.scenario, file.as_ref());
        let users = match (&self.k_grid, self.k, file.as_ref().and_then(|f| f.users)) {
            (Some(g), _, _) => parse_user_grid(g)?,
            (None, Some(k), _) | (None, None, Some(k)) => vec![k],
            _ => DEFAULT_USERS.to_vec(),
        };
        let alphas = match (&self.alpha_grid, self.alpha, file.as_ref().and_then(|f| f.alpha)) {
            (Some(g), _, _) => parse_grid(g)?,
            (None, Some(a), _) | (None, None, Some(a)) => vec![a],
            _ => default_alphas(),
        };
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(CliError::Usage(format!("alpha must be finite and >= 0, got {a}")));
        }
        if self.qmax == 0 {
            return Err(CliError::Usage("--qmax must be at least 1".into()));
        }
        let trials = self
            .trials
            .or(file.as_ref().and_then(|f| f.trials))
            .unwrap_or(1000);
        if trials == 0 {
            return Err(CliError::Usage("trials must be at least 1".into()));
        }
        let resolved = Resolved {
            network,
            users,
            alphas,
            trials,
            seed: self.seed.or(file.as_ref().and_then(|f| f.seed)).unwrap_or(0),
            out: self.out.clone(),
            strict_b1: self.strict_b1,
            qmax: self.qmax,
        };
        // every grid point must be a valid network
        for &k in &resolved.users {
            resolved.network.system(k)?;
        }
        Ok(resolved)
    }
}

impl Resolved {
    /// The single `(K, alpha)` point of a point command.
    pub fn single_point(&self) -> Result<(usize, f64), CliError> {
        match (&self.users[..], &self.alphas[..]) {
            ([k], [a]) => Ok((*k, *a)),
            _ => Err(CliError::Usage(
                "this command takes a single point: give --k and --alpha (or K and alpha in the config)"
                    .into(),
            )),
        }
    }

    /// Grid points sorted by `(K, alpha)`.
    pub fn points(&self) -> Vec<(usize, f64)> {
        let mut users = self.users.clone();
        users.sort_unstable();
        users.dedup();
        let mut alphas = self.alphas.clone();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        users
            .iter()
            .flat_map(|&k| alphas.iter().map(move |&a| (k, a)))
            .collect()
    }

    pub fn writer(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.out {
            Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(
                |e| CliError::Io(format!("cannot create {}: {e}", p.display())),
            )?)),
            None => Box::new(std::io::stdout().lock()),
        })
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Optimize(c) => commands::optimize(&c.resolve()?),
        Command::Sweep { common, bound_only } => commands::sweep(&common.resolve()?, bound_only),
        Command::Simulate { common, per_trial } => {
            commands::simulate(&common.resolve()?, per_trial.as_deref())
        }
        Command::Bound(c) => commands::bound(&c.resolve()?),
        Command::Verify {
            common,
            inject_perturbation,
        } => commands::verify(&common, inject_perturbation),
        Command::Place {
            common,
            no_receivers,
        } => commands::place(&common.resolve()?, !no_receivers),
    }
}
