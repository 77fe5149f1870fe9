//! Monte Carlo evaluation of a placement under random demand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    expected_delay_unchecked, PopularityModel, RedundancyAllocation, Segmentation, Solution,
    SystemConfig,
};

/// How requests for broadcast files are charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadcastMode {
    /// One slot per distinct requested broadcast file.
    #[default]
    Distinct,
    /// The whole block `|B_1|` as soon as any of its files is requested.
    Strict,
}

/// One demand realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandSample {
    /// Requested file (0-based) of each user.
    pub requests: Vec<usize>,
    /// `K_q`: users whose request falls in sub-library `q`.
    pub per_q_count: Vec<usize>,
    /// Distinct requested files inside the broadcast block.
    pub distinct_b1: usize,
}

/// Draws one request per user from the popularity law by inverting the
/// cumulative distribution.
pub fn sample_demand<R: Rng + ?Sized>(
    model: &PopularityModel,
    seg: &Segmentation,
    users: usize,
    rng: &mut R,
) -> DemandSample {
    let n = model.len();
    let total = model.prefix[n];
    let requests: Vec<usize> = (0..users)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            // first file whose cumulative mass exceeds u
            let i = model.prefix[1..].partition_point(|&c| c <= u);
            i.min(n - 1)
        })
        .collect();
    let mut per_q_count = vec![0; seg.len()];
    let b1 = seg.broadcast_files();
    let mut seen = vec![false; b1];
    let mut distinct_b1 = 0;
    for &f in &requests {
        per_q_count[seg.sublibrary_of(f)] += 1;
        if f < b1 && !seen[f] {
            seen[f] = true;
            distinct_b1 += 1;
        }
    }
    DemandSample {
        requests,
        per_q_count,
        distinct_b1,
    }
}

/// [`sample_demand`] from a fresh generator seeded with `seed`.
pub fn sample_demand_seeded(
    model: &PopularityModel,
    seg: &Segmentation,
    users: usize,
    seed: u64,
) -> DemandSample {
    sample_demand(model, seg, users, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Effective DoF of each sub-library, `(1 + Lambda gamma)` times the
/// harmonic memory-sharing redundancy (unused for the broadcast block).
pub fn effective_rates(cfg: &SystemConfig, alloc: &RedundancyAllocation) -> Vec<f64> {
    alloc
        .splits
        .iter()
        .map(|s| s.effective_redundancy() * cfg.multicast_gain())
        .collect()
}

/// Delivery time of one demand realization:
/// `D_1 + sum_{q coded} K_q (1 - gamma) / min(R_q, K_q)`.
pub fn realized_delay(
    cfg: &SystemConfig,
    seg: &Segmentation,
    alloc: &RedundancyAllocation,
    sample: &DemandSample,
    mode: BroadcastMode,
) -> Result<f64> {
    if sample.per_q_count.len() != seg.len() || alloc.levels.len() != seg.len() {
        return Err(Error::InvalidParameter(format!(
            "sample has {} counts and allocation {} levels for {} sub-libraries",
            sample.per_q_count.len(),
            alloc.levels.len(),
            seg.len()
        )));
    }
    let rates = effective_rates(cfg, alloc);
    let first_coded = usize::from(!seg.is_uniform());
    let broadcast = if first_coded == 0 {
        0.0
    } else {
        match mode {
            BroadcastMode::Distinct => sample.distinct_b1 as f64,
            BroadcastMode::Strict if sample.per_q_count[0] > 0 => seg.broadcast_files() as f64,
            BroadcastMode::Strict => 0.0,
        }
    };
    let coded: f64 = (first_coded..seg.len())
        .filter(|&q| sample.per_q_count[q] > 0)
        .map(|q| {
            let k = sample.per_q_count[q] as f64;
            k * (1.0 - cfg.gamma) / rates[q].min(k)
        })
        .sum();
    Ok(broadcast + coded)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub delay: f64,
    pub dof: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub trials: usize,
    pub seed: u64,
    pub mode: BroadcastMode,
    pub delay_mean: f64,
    /// Unbiased sample deviation, 0 for a single trial.
    pub delay_std: f64,
    pub dof_mean: f64,
    pub dof_std: f64,
    /// Delay at the expected demand `K pi_q` with the memory-sharing rates
    /// actually used for delivery.
    pub analytic_delay: f64,
    /// `K (1 - gamma) / analytic_delay`.
    pub analytic_dof: f64,
    /// The optimizer's objective (fractional redundancies).
    pub objective_delay: f64,
}

/// Aggregates `trials` independent demand draws. Trial `i` uses stream `i`
/// of a ChaCha generator seeded with `seed`, so results do not depend on
/// evaluation order.
pub fn run_simulation(
    cfg: &SystemConfig,
    model: &PopularityModel,
    solution: &Solution,
    trials: usize,
    seed: u64,
    mode: BroadcastMode,
) -> Result<SimulationReport> {
    Ok(run_simulation_with_records(cfg, model, solution, trials, seed, mode)?.0)
}

pub fn run_simulation_with_records(
    cfg: &SystemConfig,
    model: &PopularityModel,
    solution: &Solution,
    trials: usize,
    seed: u64,
    mode: BroadcastMode,
) -> Result<(SimulationReport, Vec<TrialRecord>)> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let seg = &solution.segmentation;
    let alloc = &solution.allocation;
    let work = cfg.users as f64 * (1.0 - cfg.gamma);
    let mut records = Vec::with_capacity(trials);
    for trial in 0..trials {
        let sample = sample_demand(model, seg, cfg.users, &mut trial_rng(seed, trial));
        let delay = realized_delay(cfg, seg, alloc, &sample, mode)?;
        records.push(TrialRecord {
            trial,
            delay,
            dof: work / delay,
        });
    }
    let (delay_mean, delay_std) = mean_std(records.iter().map(|r| r.delay));
    let (dof_mean, dof_std) = mean_std(records.iter().map(|r| r.dof));
    let effective: Vec<f64> = alloc.splits.iter().map(|s| s.effective_redundancy()).collect();
    let analytic_delay = expected_delay_unchecked(cfg, model, seg, &effective);
    let objective_delay = expected_delay_unchecked(cfg, model, seg, &alloc.levels);
    Ok((
        SimulationReport {
            trials,
            seed,
            mode,
            delay_mean,
            delay_std,
            dof_mean,
            dof_std,
            analytic_delay,
            analytic_dof: work / analytic_delay,
            objective_delay,
        },
        records,
    ))
}

/// Generator for one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
