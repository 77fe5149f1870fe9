//! Run configuration: scenario preset, optional JSON file, command-line
//! overrides.

use std::path::Path;

use serde::Deserialize;
use txcache::{choose_lambda, SystemConfig};

use crate::CliError;

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "N")]
    pub files: Option<usize>,
    #[serde(rename = "K")]
    pub users: Option<usize>,
    #[serde(rename = "K_T")]
    pub transmitters: Option<usize>,
    pub gamma: Option<f64>,
    #[serde(rename = "gamma_T")]
    pub gamma_t: Option<f64>,
    #[serde(rename = "F")]
    pub subpacketization: Option<u64>,
    pub lambda: Option<usize>,
    pub alpha: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scenario {
    /// N=6000, K_T=50, gamma=gamma_T=1/10, Lambda=40, F=10^5
    One,
    /// N=3000, K_T=20, gamma=1/50, gamma_T=1/10, Lambda=150, F=10^6
    Two,
}

/// Network parameters minus the user count, which may vary over a grid.
#[derive(Debug, Clone)]
pub struct Network {
    pub files: usize,
    pub transmitters: usize,
    pub gamma: f64,
    pub gamma_t: f64,
    pub subpacketization: u64,
    /// `None`: pick the largest admissible value per user count.
    pub lambda: Option<usize>,
}

impl Network {
    pub fn preset(s: Scenario) -> Self {
        match s {
            Scenario::One => Network {
                files: 6000,
                transmitters: 50,
                gamma: 0.1,
                gamma_t: 0.1,
                subpacketization: 100_000,
                lambda: Some(40),
            },
            Scenario::Two => Network {
                files: 3000,
                transmitters: 20,
                gamma: 1.0 / 50.0,
                gamma_t: 0.1,
                subpacketization: 1_000_000,
                lambda: Some(150),
            },
        }
    }

    /// Preset overridden by the file. A file that leaves `lambda` out gets
    /// the automatic choice.
    pub fn resolve(preset: Scenario, file: Option<&ConfigFile>) -> Self {
        let mut net = Network::preset(preset);
        if let Some(f) = file {
            net.files = f.files.unwrap_or(net.files);
            net.transmitters = f.transmitters.unwrap_or(net.transmitters);
            net.gamma = f.gamma.unwrap_or(net.gamma);
            net.gamma_t = f.gamma_t.unwrap_or(net.gamma_t);
            net.subpacketization = f.subpacketization.unwrap_or(net.subpacketization);
            net.lambda = f.lambda;
        }
        net
    }

    pub fn system(&self, users: usize) -> Result<SystemConfig, CliError> {
        let lambda = match self.lambda {
            Some(l) => l,
            None => choose_lambda(self.gamma, self.subpacketization, users)?,
        };
        Ok(SystemConfig::new(
            self.files,
            users,
            self.transmitters,
            self.gamma,
            self.gamma_t,
            lambda,
            self.subpacketization,
        )?)
    }
}

/// Parses `a,b,c` or `start:step:end` (inclusive).
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |what: &str| CliError::Usage(format!("bad grid `{text}`: {what}"));
    let out: Vec<f64> = if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_, _>>()?;
        let [start, step, end] = parts[..] else {
            return Err(bad("expected start:step:end"));
        };
        if !(step > 0.0) || end < start {
            return Err(bad("step must be positive and end >= start"));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize;
        // round to the step's decimals so 0.2 * 3 prints as 0.6
        (0..=count)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        text.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_, _>>()?
    };
    if out.is_empty() {
        return Err(bad("empty"));
    }
    Ok(out)
}

pub fn parse_user_grid(text: &str) -> Result<Vec<usize>, CliError> {
    let grid = parse_grid(text)?;
    grid.iter()
        .map(|&k| {
            if k >= 1.0 && k.fract() == 0.0 {
                Ok(k as usize)
            } else {
                Err(CliError::Usage(format!("user count {k} is not a positive integer")))
            }
        })
        .collect()
}
