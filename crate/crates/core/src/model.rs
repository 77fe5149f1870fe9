//! System parameters, the Zipf popularity law, and the closed-form delay,
//! gain and bound formulas every other module builds on.
//!
//! Delays are measured in file-transmission times over a unit-capacity link.
//! Sub-libraries are indexed from 0 in code; index 0 is the broadcast
//! sub-library (pinned at redundancy 1), the remaining ones are served with
//! coded multi-transmitter delivery.

use serde::{Deserialize, Serialize};

use crate::error::{Constraint, Error, Result};

/// Slack allowed when checking real-valued constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Library size `N`.
    pub files: usize,
    /// Receiver count `K`.
    pub users: usize,
    /// Transmitter count `K_T`.
    pub transmitters: usize,
    /// Fraction of the library each receiver caches.
    pub gamma: f64,
    /// Fraction of the library each transmitter caches.
    pub gamma_t: f64,
    /// Number of distinct receiver caches `Lambda`.
    pub lambda: usize,
    /// Maximum subpacketization `F`.
    pub subpacketization: u64,
}

impl SystemConfig {
    /// Builds and validates a configuration.
    pub fn new(
        files: usize,
        users: usize,
        transmitters: usize,
        gamma: f64,
        gamma_t: f64,
        lambda: usize,
        subpacketization: u64,
    ) -> Result<Self> {
        let cfg = SystemConfig {
            files,
            users,
            transmitters,
            gamma,
            gamma_t,
            lambda,
            subpacketization,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`SystemConfig::new`] but picks `Lambda` with [`choose_lambda`].
    pub fn with_auto_lambda(
        files: usize,
        users: usize,
        transmitters: usize,
        gamma: f64,
        gamma_t: f64,
        subpacketization: u64,
    ) -> Result<Self> {
        let lambda = choose_lambda(gamma, subpacketization, users)?;
        Self::new(files, users, transmitters, gamma, gamma_t, lambda, subpacketization)
    }

    /// Scenario 1 of the numerical study: 6000 short episodes, 50 transmitters.
    pub fn scenario_one(users: usize) -> Result<Self> {
        Self::new(6000, users, 50, 0.1, 0.1, 40, 100_000)
    }

    /// Scenario 2 of the numerical study: 3000 movies, 20 transmitters.
    pub fn scenario_two(users: usize) -> Result<Self> {
        Self::new(3000, users, 20, 1.0 / 50.0, 0.1, 150, 1_000_000)
    }

    pub fn validate(&self) -> Result<()> {
        if self.files == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if self.users == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if self.transmitters == 0 {
            return Err(Error::InvalidParameter("K_T must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        let kt = self.transmitters as f64;
        if !(self.gamma_t * kt >= 1.0 - FEASIBILITY_TOL && self.gamma_t <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_T must lie in [1/K_T, 1], got {}",
                self.gamma_t
            )));
        }
        if self.lambda == 0 || self.lambda > self.users {
            return Err(Error::InvalidParameter(format!(
                "Lambda must lie in [1, K], got {}",
                self.lambda
            )));
        }
        let lg = self.lambda as f64 * self.gamma;
        if (lg - lg.round()).abs() > 1e-9 {
            return Err(Error::Infeasible(format!(
                "Lambda * gamma = {lg} is not an integer"
            )));
        }
        let t = lg.round() as u64;
        match binomial(self.lambda as u64, t) {
            Some(b) if b <= self.subpacketization as u128 => Ok(()),
            _ => Err(Error::Infeasible(format!(
                "subpacketization binom({}, {t}) exceeds F = {}",
                self.lambda, self.subpacketization
            ))),
        }
    }

    /// Aggregate transmitter redundancy `L = K_T gamma_T`.
    pub fn redundancy(&self) -> f64 {
        self.transmitters as f64 * self.gamma_t
    }

    /// `Lambda gamma`, the number of receiver caches holding each subfile.
    pub fn cached_groups(&self) -> usize {
        (self.lambda as f64 * self.gamma).round() as usize
    }

    /// Multicast factor `1 + Lambda gamma` of a single transmitter.
    pub fn multicast_gain(&self) -> f64 {
        1.0 + self.cached_groups() as f64
    }

    /// `K (1 - gamma) / (1 + Lambda gamma)`: the coded delay of the whole user
    /// population at unit redundancy.
    pub fn delay_scale(&self) -> f64 {
        self.users as f64 * (1.0 - self.gamma) / self.multicast_gain()
    }

    /// Total transmitter memory `L N` in file units.
    pub fn budget(&self) -> f64 {
        self.redundancy() * self.files as f64
    }

    /// Per-transmitter memory `gamma_T N` in file units.
    pub fn transmitter_capacity(&self) -> f64 {
        self.gamma_t * self.files as f64
    }

    /// `U_q = min{K_T, K pi_q / Lambda}`.
    pub fn upper_redundancy(&self, mass: f64) -> f64 {
        (self.transmitters as f64).min(self.users as f64 * mass / self.lambda as f64)
    }
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Largest `Lambda <= K` with `Lambda gamma` integral and
/// `binom(Lambda, Lambda gamma) <= F`.
pub fn choose_lambda(gamma: f64, subpacketization: u64, users: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if subpacketization == 0 {
        return Err(Error::InvalidParameter("F must be at least 1".into()));
    }
    let mut best = None;
    for lambda in 1..=users {
        let lg = lambda as f64 * gamma;
        if (lg - lg.round()).abs() > 1e-9 || lg.round() < 1.0 {
            continue;
        }
        match binomial(lambda as u64, lg.round() as u64) {
            Some(b) if b <= subpacketization as u128 => best = Some(lambda),
            // binom(Lambda, Lambda gamma) grows along the admissible Lambdas
            _ => break,
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no Lambda <= {users} satisfies the subpacketization limit F = {subpacketization} at gamma = {gamma}"
        ))
    })
}

/// Zipf request probabilities with compensated prefix sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularityModel {
    pub alpha: f64,
    pub p: Vec<f64>,
    /// `prefix[i] = p_1 + ... + p_i`, `prefix[0] = 0`.
    pub prefix: Vec<f64>,
}

impl PopularityModel {
    /// `p_n = n^-alpha / sum_k k^-alpha` for `n = 1..=N`.
    pub fn zipf(files: usize, alpha: f64) -> Result<Self> {
        if files == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Zipf exponent must be finite and >= 0, got {alpha}"
            )));
        }
        let weights: Vec<f64> = (1..=files).map(|n| (n as f64).powf(-alpha)).collect();
        let total = compensated_sum(weights.iter().copied());
        let p: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let mut prefix = Vec::with_capacity(files + 1);
        prefix.push(0.0);
        let mut acc = NeumaierSum::default();
        for &x in &p {
            acc.add(x);
            prefix.push(acc.value());
        }
        Ok(PopularityModel { alpha, p, prefix })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `pi = sum_{n=lo+1}^{hi} p_n`, checked.
    pub fn cumulative_mass(&self, lo: usize, hi: usize) -> Result<f64> {
        if lo > hi || hi > self.len() {
            return Err(Error::InvalidParameter(format!(
                "mass range ({lo}, {hi}] outside 0..={}",
                self.len()
            )));
        }
        Ok(self.mass(lo, hi))
    }

    /// Unchecked variant of [`PopularityModel::cumulative_mass`].
    #[inline]
    pub fn mass(&self, lo: usize, hi: usize) -> f64 {
        self.prefix[hi] - self.prefix[lo]
    }
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Consecutive-index library segmentation.
///
/// `boundaries` holds `n_1, ..., n_Q` with `n_Q = N`; sub-library `q` covers
/// files `n_{q-1}+1 ..= n_q` with `n_0 = 0`. With `Q >= 2` the first
/// sub-library is the broadcast one and may be empty (`n_1 = 0`). `Q = 1`
/// denotes the popularity-agnostic placement: the whole library at
/// redundancy `L`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segmentation {
    boundaries: Vec<usize>,
}

impl Segmentation {
    pub fn new(files: usize, boundaries: Vec<usize>) -> Result<Self> {
        let Some(&last) = boundaries.last() else {
            return Err(Error::InvalidSegmentation("no boundaries".into()));
        };
        if last != files {
            return Err(Error::InvalidSegmentation(format!(
                "last boundary {last} != N = {files}"
            )));
        }
        if boundaries.len() > 1 && boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSegmentation(format!(
                "boundaries {boundaries:?} are not strictly increasing"
            )));
        }
        Ok(Segmentation { boundaries })
    }

    /// The single-sub-library (popularity-agnostic) segmentation.
    pub fn uniform(files: usize) -> Self {
        Segmentation {
            boundaries: vec![files],
        }
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// `Q`.
    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    pub fn files(&self) -> usize {
        *self.boundaries.last().expect("non-empty")
    }

    pub fn is_uniform(&self) -> bool {
        self.boundaries.len() == 1
    }

    /// Size of the broadcast sub-library (`n_1`, or 0 for the uniform case).
    pub fn broadcast_files(&self) -> usize {
        if self.is_uniform() {
            0
        } else {
            self.boundaries[0]
        }
    }

    /// Index range `(lo, hi]` covered by sub-library `q` (0-based).
    pub fn range(&self, q: usize) -> (usize, usize) {
        let lo = if q == 0 { 0 } else { self.boundaries[q - 1] };
        (lo, self.boundaries[q])
    }

    pub fn width(&self, q: usize) -> usize {
        let (lo, hi) = self.range(q);
        hi - lo
    }

    /// Sub-library holding 0-based file index `file`.
    pub fn sublibrary_of(&self, file: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= file)
    }

    /// Boundaries as printed in result tables: `n*` without the trailing `N`.
    /// The uniform placement prints as `[0]`.
    pub fn table_boundaries(&self) -> Vec<usize> {
        if self.is_uniform() {
            vec![0]
        } else {
            self.boundaries[..self.boundaries.len() - 1].to_vec()
        }
    }
}

/// Active-set membership of a sub-library in the optimal allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveLabel {
    /// Broadcast sub-library, redundancy fixed at 1.
    Broadcast,
    /// Clamped at the lower bound `L_q = 1` (the set phi).
    Lower,
    /// Clamped at the upper bound `L_q = U_q` (the set psi).
    Upper,
    /// Strictly between the bounds (the set chi).
    Interior,
}

/// Realization of a fractional redundancy by memory sharing between its floor
/// and ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorySharing {
    pub floor: usize,
    pub ceil: usize,
    /// Fraction of each file stored at `ceil` transmitters.
    pub fraction: f64,
    /// Delay inflation relative to the fractional target.
    pub loss_ratio: f64,
}

/// Splits `L_q` as `p ceil(L_q) + (1 - p) floor(L_q) = L_q`.
pub fn memory_sharing_split(level: f64) -> Result<MemorySharing> {
    if !(level >= 1.0) || !level.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "redundancy must be finite and >= 1, got {level}"
        )));
    }
    let floor = level.floor();
    let r = level - floor;
    Ok(MemorySharing {
        floor: floor as usize,
        ceil: floor as usize + 1,
        fraction: r,
        loss_ratio: 1.0 + r * (1.0 - r) / (floor * (floor + 1.0)),
    })
}

impl MemorySharing {
    /// Effective redundancy seen by delivery: the harmonic combination
    /// `1 / (p / ceil + (1 - p) / floor)`.
    pub fn effective_redundancy(&self) -> f64 {
        1.0 / (self.fraction / self.ceil as f64 + (1.0 - self.fraction) / self.floor as f64)
    }
}

/// Per-sub-library transmitter redundancies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyAllocation {
    pub levels: Vec<f64>,
    pub labels: Vec<ActiveLabel>,
    pub splits: Vec<MemorySharing>,
}

impl RedundancyAllocation {
    /// Builds an allocation from raw levels; labels are derived from the
    /// bounds of `seg` under `cfg`/`model`.
    pub fn from_levels(
        cfg: &SystemConfig,
        model: &PopularityModel,
        seg: &Segmentation,
        levels: Vec<f64>,
    ) -> Result<Self> {
        if levels.len() != seg.len() {
            return Err(dimension_error(seg.len(), levels.len()));
        }
        let labels = levels
            .iter()
            .enumerate()
            .map(|(q, &l)| {
                if q == 0 && !seg.is_uniform() {
                    ActiveLabel::Broadcast
                } else {
                    let (lo, hi) = seg.range(q);
                    let u = cfg.upper_redundancy(model.mass(lo, hi));
                    if l <= 1.0 && u > 1.0 {
                        ActiveLabel::Lower
                    } else if l >= u && !seg.is_uniform() {
                        ActiveLabel::Upper
                    } else {
                        ActiveLabel::Interior
                    }
                }
            })
            .collect();
        let splits = levels
            .iter()
            .map(|&l| memory_sharing_split(l.max(1.0)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RedundancyAllocation {
            levels,
            labels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `L-bar` as printed in result tables: levels of the coded sub-libraries.
    pub fn table_levels(&self) -> Vec<f64> {
        if self.levels.len() == 1 {
            self.levels.clone()
        } else {
            self.levels[1..].to_vec()
        }
    }

    pub fn interior_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|l| **l == ActiveLabel::Interior)
            .count()
    }
}

fn dimension_error(expected: usize, got: usize) -> Error {
    Error::ConstraintViolation {
        constraint: Constraint::Dimension,
        sublibrary: None,
        detail: format!("expected {expected} levels, got {got}"),
    }
}

/// A full placement decision with its figures of merit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub segmentation: Segmentation,
    pub allocation: RedundancyAllocation,
    pub expected_delay: f64,
    pub uniform_delay: f64,
    /// `uniform_delay / expected_delay`.
    pub gain: f64,
}

impl Solution {
    pub fn new(
        cfg: &SystemConfig,
        model: &PopularityModel,
        segmentation: Segmentation,
        allocation: RedundancyAllocation,
    ) -> Result<Self> {
        let expected = expected_delay(cfg, model, &segmentation, &allocation)?;
        let uniform = uniform_delay(cfg);
        Ok(Solution {
            segmentation,
            allocation,
            expected_delay: expected,
            uniform_delay: uniform,
            gain: uniform / expected,
        })
    }

    pub fn sublibrary_count(&self) -> usize {
        self.segmentation.len()
    }
}

/// Delivery time of the popularity-agnostic placement,
/// `K (1 - gamma) / (L (1 + Lambda gamma))`.
pub fn uniform_delay(cfg: &SystemConfig) -> f64 {
    cfg.delay_scale() / cfg.redundancy()
}

/// Checks an allocation against every constraint of the placement problem.
pub fn check_feasible(
    cfg: &SystemConfig,
    model: &PopularityModel,
    seg: &Segmentation,
    alloc: &RedundancyAllocation,
) -> Result<()> {
    if model.len() != cfg.files || seg.files() != cfg.files {
        return Err(Error::InvalidParameter(format!(
            "library sizes disagree: config {}, model {}, segmentation {}",
            cfg.files,
            model.len(),
            seg.files()
        )));
    }
    if alloc.len() != seg.len() {
        return Err(dimension_error(seg.len(), alloc.len()));
    }
    if seg.is_uniform() {
        let l = alloc.levels[0];
        if (l - cfg.redundancy()).abs() > FEASIBILITY_TOL * cfg.redundancy() {
            return Err(Error::ConstraintViolation {
                constraint: Constraint::Budget,
                sublibrary: Some(0),
                detail: format!("uniform placement must use L = {}, got {l}", cfg.redundancy()),
            });
        }
        return Ok(());
    }
    if (alloc.levels[0] - 1.0).abs() > FEASIBILITY_TOL {
        return Err(Error::ConstraintViolation {
            constraint: Constraint::BroadcastRedundancy,
            sublibrary: Some(0),
            detail: format!("L_1 = {}", alloc.levels[0]),
        });
    }
    let mut used = NeumaierSum::default();
    used.add(seg.broadcast_files() as f64);
    for q in 1..seg.len() {
        let (lo, hi) = seg.range(q);
        let l = alloc.levels[q];
        if !(l >= 1.0 - FEASIBILITY_TOL) {
            return Err(Error::ConstraintViolation {
                constraint: Constraint::LowerRedundancy,
                sublibrary: Some(q),
                detail: format!("L = {l} < 1"),
            });
        }
        let u = cfg.upper_redundancy(model.mass(lo, hi));
        if l > u * (1.0 + FEASIBILITY_TOL) + FEASIBILITY_TOL {
            return Err(Error::ConstraintViolation {
                constraint: Constraint::UpperRedundancy,
                sublibrary: Some(q),
                detail: format!("L = {l} > U = {u}"),
            });
        }
        used.add(l * (hi - lo) as f64);
    }
    let budget = cfg.budget();
    if used.value() > budget * (1.0 + FEASIBILITY_TOL) {
        return Err(Error::ConstraintViolation {
            constraint: Constraint::Budget,
            sublibrary: None,
            detail: format!("memory {} > L N = {budget}", used.value()),
        });
    }
    Ok(())
}

/// Expected delivery time of a feasible placement,
/// `n_1 + sum_{q>=2} K pi_q (1 - gamma) / (L_q (1 + Lambda gamma))`.
pub fn expected_delay(
    cfg: &SystemConfig,
    model: &PopularityModel,
    seg: &Segmentation,
    alloc: &RedundancyAllocation,
) -> Result<f64> {
    check_feasible(cfg, model, seg, alloc)?;
    Ok(expected_delay_unchecked(cfg, model, seg, &alloc.levels))
}

/// The delay formula without the feasibility gate; used by property tests
/// that probe the objective off the feasible set.
pub fn expected_delay_unchecked(
    cfg: &SystemConfig,
    model: &PopularityModel,
    seg: &Segmentation,
    levels: &[f64],
) -> f64 {
    let scale = cfg.delay_scale();
    if seg.is_uniform() {
        return scale / levels[0];
    }
    let mut acc = NeumaierSum::default();
    acc.add(seg.broadcast_files() as f64);
    for q in 1..seg.len() {
        let (lo, hi) = seg.range(q);
        acc.add(scale * model.mass(lo, hi) / levels[q]);
    }
    acc.value()
}

/// Popularity-driven limit on what any placement can achieve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayBound {
    pub lower_bound_delay: f64,
    /// Largest achievable multiplicative gain over the uniform placement.
    pub gmax: f64,
}

/// Lower bound on the expected delay and the matching gain ceiling, obtained
/// by letting every file form its own sub-library with unconstrained
/// redundancy.
pub fn delay_bound(cfg: &SystemConfig, model: &PopularityModel) -> DelayBound {
    let n = model.len();
    let full = compensated_sum((1..=n).map(|q| (q as f64).powf(-model.alpha)));
    let half = compensated_sum((1..=n).map(|q| (q as f64).powf(-model.alpha / 2.0)));
    let shape = half * half / full;
    DelayBound {
        lower_bound_delay: cfg.delay_scale() / (cfg.redundancy() * n as f64) * shape,
        gmax: n as f64 / shape,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zipf_uniform_and_harmonic() {
        let m = PopularityModel::zipf(4, 0.0).unwrap();
        assert!(m.p.iter().all(|&x| close(x, 0.25, 1e-15)));

        let m = PopularityModel::zipf(4, 1.0).unwrap();
        let want = [12.0 / 25.0, 6.0 / 25.0, 4.0 / 25.0, 3.0 / 25.0];
        for (got, want) in m.p.iter().zip(want) {
            assert!(close(*got, want, 1e-15), "{got} vs {want}");
        }
        assert!(close(m.cumulative_mass(1, 4).unwrap(), 13.0 / 25.0, 1e-15));
    }

    #[test]
    fn zipf_large_library_normalized() {
        let m = PopularityModel::zipf(6000, 0.8).unwrap();
        // independent check of p_1: 1 / H(6000, 0.8), harmonic number summed
        // from the smallest term upward
        let h: f64 = (1..=6000).rev().map(|n| (n as f64).powf(-0.8)).sum();
        assert!(close(m.p[0], 1.0 / h, 1e-13));
        assert!(close(compensated_sum(m.p.iter().copied()), 1.0, 1e-12));
        assert!(close(m.prefix[6000], 1.0, 1e-12));
    }

    #[test]
    fn zipf_rejects_bad_input() {
        assert!(matches!(
            PopularityModel::zipf(0, 1.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            PopularityModel::zipf(5, -0.1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn mass_edges() {
        let m = PopularityModel::zipf(4, 0.0).unwrap();
        assert_eq!(m.cumulative_mass(0, 2).unwrap(), 0.5);
        assert_eq!(m.cumulative_mass(3, 3).unwrap(), 0.0);
        assert!(m.cumulative_mass(3, 2).is_err());
        assert!(m.cumulative_mass(0, 5).is_err());
    }

    #[test]
    fn lambda_choice() {
        assert_eq!(choose_lambda(0.1, 100_000, 300).unwrap(), 40);
        assert_eq!(choose_lambda(1.0 / 50.0, 1_000_000, 500).unwrap(), 150);
        assert_eq!(choose_lambda(0.5, 2, 10).unwrap(), 2);
        assert!(matches!(
            choose_lambda(0.5, 1, 10),
            Err(Error::Infeasible(_))
        ));
        // K caps Lambda
        assert_eq!(choose_lambda(0.1, 100_000, 25).unwrap(), 20);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(40, 4), Some(91_390));
        assert_eq!(binomial(50, 5), Some(2_118_760));
        assert_eq!(binomial(150, 3), Some(551_300));
        assert_eq!(binomial(3, 5), Some(0));
        assert_eq!(binomial(2000, 200), None);
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::scenario_one(300).is_ok());
        assert!(SystemConfig::scenario_two(500).is_ok());
        // Lambda gamma not integral
        assert!(matches!(
            SystemConfig::new(10, 50, 5, 0.1, 0.2, 15, 1000),
            Err(Error::Infeasible(_))
        ));
        // subpacketization exceeded
        assert!(matches!(
            SystemConfig::new(10, 100, 5, 0.1, 0.2, 50, 100_000),
            Err(Error::Infeasible(_))
        ));
        assert!(SystemConfig::new(10, 100, 5, 0.1, 0.1, 10, 100).is_err());
        assert!(SystemConfig::new(10, 100, 5, 1.0, 0.2, 10, 100).is_err());
        let auto = SystemConfig::with_auto_lambda(6000, 300, 50, 0.1, 0.1, 100_000).unwrap();
        assert_eq!(auto.lambda, 40);
    }

    #[test]
    fn uniform_delay_values() {
        let c = SystemConfig::scenario_one(300).unwrap();
        assert!(close(uniform_delay(&c), 10.8, 1e-12));
        let c = SystemConfig::scenario_two(1000).unwrap();
        assert!(close(uniform_delay(&c), 122.5, 1e-12));
        // gamma -> 1 drives the delay to zero
        let c = SystemConfig::new(10, 10_000, 2, 0.9999, 0.5, 10_000, u64::MAX).unwrap();
        assert!(uniform_delay(&c) < 1e-3);
    }

    #[test]
    fn memory_sharing_values() {
        let s = memory_sharing_split(3.0).unwrap();
        assert_eq!((s.floor, s.ceil, s.fraction, s.loss_ratio), (3, 4, 0.0, 1.0));
        let s = memory_sharing_split(1.5).unwrap();
        assert_eq!((s.floor, s.ceil), (1, 2));
        assert!(close(s.fraction, 0.5, 1e-15) && close(s.loss_ratio, 1.125, 1e-15));
        let s = memory_sharing_split(2.5).unwrap();
        assert!(close(s.loss_ratio, 1.0 + 0.25 / 6.0, 1e-15));
        assert!(memory_sharing_split(0.99).is_err());
        // the loss ratio is the delay inflation of the harmonic rate
        let s = memory_sharing_split(2.3).unwrap();
        assert!(close(2.3 / s.effective_redundancy(), s.loss_ratio, 1e-14));
    }

    #[test]
    fn bound_closed_forms() {
        let c = SystemConfig::scenario_one(500).unwrap();
        let m = PopularityModel::zipf(6000, 0.0).unwrap();
        let b = delay_bound(&c, &m);
        assert!(close(b.gmax, 1.0, 1e-12));
        assert!(close(b.lower_bound_delay, uniform_delay(&c), 1e-9));

        let c2 = SystemConfig::new(2, 40, 4, 0.25, 0.5, 4, 100).unwrap();
        for alpha in [0.3, 1.0, 2.5] {
            let m = PopularityModel::zipf(2, alpha).unwrap();
            let x: f64 = 2f64.powf(-alpha);
            let want = 2.0 * (1.0 + x) / (1.0 + x.sqrt()).powi(2);
            assert!(close(delay_bound(&c2, &m).gmax, want, 1e-14));
        }
    }

    #[test]
    fn expected_delay_degenerate_and_symmetric() {
        let c = SystemConfig::new(2, 40, 4, 0.25, 0.5, 4, 100).unwrap();
        let m = PopularityModel::zipf(2, 0.0).unwrap();
        let uni = Segmentation::uniform(2);
        let a = RedundancyAllocation::from_levels(&c, &m, &uni, vec![2.0]).unwrap();
        assert!(close(expected_delay(&c, &m, &uni, &a).unwrap(), uniform_delay(&c), 1e-12));

        let seg = Segmentation::new(2, vec![0, 1, 2]).unwrap();
        let a = RedundancyAllocation::from_levels(&c, &m, &seg, vec![1.0, 2.0, 2.0]).unwrap();
        assert!(close(expected_delay(&c, &m, &seg, &a).unwrap(), uniform_delay(&c), 1e-12));
    }

    #[test]
    fn expected_delay_flags_constraints() {
        let c = SystemConfig::new(2, 40, 4, 0.25, 0.5, 4, 100).unwrap();
        let m = PopularityModel::zipf(2, 0.0).unwrap();
        let seg = Segmentation::new(2, vec![0, 1, 2]).unwrap();
        let cases = [
            (vec![1.0, 2.5, 2.0], Constraint::Budget),
            (vec![1.0, 0.5, 2.0], Constraint::LowerRedundancy),
            (vec![2.0, 2.0, 2.0], Constraint::BroadcastRedundancy),
            (vec![1.0, 2.0], Constraint::Dimension),
        ];
        for (levels, want) in cases {
            let a = RedundancyAllocation {
                labels: vec![ActiveLabel::Interior; levels.len()],
                splits: vec![],
                levels,
            };
            match expected_delay(&c, &m, &seg, &a) {
                Err(Error::ConstraintViolation { constraint, .. }) => assert_eq!(constraint, want),
                other => panic!("expected {want:?}, got {other:?}"),
            }
        }
        // U = min(K_T, K pi / Lambda) = min(4, 5) = 4
        let seg = Segmentation::new(2, vec![1, 2]).unwrap();
        let a = RedundancyAllocation {
            levels: vec![1.0, 4.5],
            labels: vec![ActiveLabel::Broadcast, ActiveLabel::Interior],
            splits: vec![],
        };
        assert!(matches!(
            expected_delay(&c, &m, &seg, &a),
            Err(Error::ConstraintViolation {
                constraint: Constraint::UpperRedundancy,
                ..
            })
        ));
    }

    #[test]
    fn segmentation_validation() {
        assert!(Segmentation::new(6, vec![0, 3, 6]).is_ok());
        assert!(Segmentation::new(6, vec![0, 0, 6]).is_err());
        assert!(Segmentation::new(6, vec![2, 5]).is_err());
        assert!(Segmentation::new(6, vec![]).is_err());
        let s = Segmentation::new(6, vec![1, 3, 6]).unwrap();
        assert_eq!(s.range(0), (0, 1));
        assert_eq!(s.range(2), (3, 6));
        assert_eq!(s.sublibrary_of(0), 0);
        assert_eq!(s.sublibrary_of(1), 1);
        assert_eq!(s.sublibrary_of(5), 2);
        assert_eq!(s.table_boundaries(), vec![1, 3]);
        assert_eq!(Segmentation::uniform(6).table_boundaries(), vec![0]);
    }
}
