//! Exhaustive reference implementations for small libraries.
//!
//! Used to certify the boundary search and the restriction to consecutive
//! sub-libraries. Nothing here scales past a few dozen files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kkt::{self, Part};
use crate::model::{binomial, PopularityModel, Segmentation, Solution, SystemConfig};
use crate::search::{segment_delay, UpperBound};

/// Largest library accepted by [`brute_optimal`].
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Largest library enumerated exhaustively by
/// [`verify_consecutive_dominance`]; larger ones are sampled.
pub const EXHAUSTIVE_GENERAL_LIMIT: usize = 12;

/// All boundary vectors `n_1 < n_2 < ... < n_Q = N` in lexicographic order.
/// `n_1 = 0` (empty broadcast block) is included when `allow_empty_broadcast`.
pub fn enumerate_consecutive(
    files: usize,
    sublibraries: usize,
    allow_empty_broadcast: bool,
) -> Consecutive {
    let lo = usize::from(!allow_empty_broadcast);
    let free = sublibraries.saturating_sub(1);
    let start: Vec<usize> = (lo..lo + free).collect();
    // the free coordinates are distinct values in lo..files
    let valid = sublibraries >= 1 && free <= files.saturating_sub(lo);
    Consecutive {
        files,
        lo,
        current: valid.then_some(start),
    }
}

/// Number of vectors produced by [`enumerate_consecutive`]:
/// `binom(N - 1, Q - 1)`, plus `binom(N - 1, Q - 2)` when `n_1 = 0` is allowed.
pub fn consecutive_count(files: usize, sublibraries: usize, allow_empty_broadcast: bool) -> u128 {
    if sublibraries == 0 || files == 0 {
        return 0;
    }
    let n = files as u64 - 1;
    let k = sublibraries as u64 - 1;
    let base = binomial(n, k).unwrap_or(u128::MAX);
    if allow_empty_broadcast && k >= 1 {
        base + binomial(n, k - 1).unwrap_or(u128::MAX)
    } else {
        base
    }
}

#[derive(Debug, Clone)]
pub struct Consecutive {
    files: usize,
    lo: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Consecutive {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.as_mut()?;
        let mut out = cur.clone();
        out.push(self.files);
        // advance the combination of free coordinates drawn from lo..files
        let k = cur.len();
        let top = self.files; // exclusive
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if cur[i] < top - (k - i) {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
        if k == 0 {
            self.current = None;
        }
        debug_assert!(out.iter().all(|&b| b >= self.lo || b == self.files));
        Some(out)
    }
}

/// Exact minimizer over every consecutive segmentation into `q` sub-libraries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForce {
    pub solution: Solution,
    pub delay: f64,
    pub checked: usize,
}

pub fn brute_optimal(cfg: &SystemConfig, model: &PopularityModel, q: usize) -> Result<BruteForce> {
    brute_optimal_with(cfg, model, q, UpperBound::Enforced).and_then(|(seg, delay, checked)| {
        let allocation = kkt::solve_allocation(cfg, model, &seg)?;
        Ok(BruteForce {
            solution: Solution::new(cfg, model, seg, allocation)?,
            delay,
            checked,
        })
    })
}

/// Brute force returning only the minimizing segmentation and its delay.
/// Ties keep the lexicographically first candidate.
pub fn brute_optimal_with(
    cfg: &SystemConfig,
    model: &PopularityModel,
    q: usize,
    upper: UpperBound,
) -> Result<(Segmentation, f64, usize)> {
    let n = model.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::OracleScale {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if q == 0 || q > n {
        return Err(Error::InvalidParameter(format!(
            "sub-library count must lie in [1, N = {n}], got {q}"
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut checked = 0;
    for b in enumerate_consecutive(n, q, true) {
        checked += 1;
        let d = segment_delay(cfg, model, &b, upper);
        if d.is_finite() && best.as_ref().is_none_or(|(_, bd)| d < *bd) {
            best = Some((b, d));
        }
    }
    let expected = consecutive_count(n, q, true);
    assert_eq!(checked as u128, expected, "enumeration count mismatch");
    let (b, d) = best.ok_or_else(|| {
        Error::Infeasible(format!("no segmentation into {q} sub-libraries is feasible"))
    })?;
    Ok((Segmentation::new(n, b)?, d, checked))
}

/// Arbitrary assignment of files to sub-libraries; label 0 is the broadcast
/// block, labels `1..Q` are coded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GeneralSegmentation {
    pub labels: Vec<usize>,
    pub sublibraries: usize,
}

impl GeneralSegmentation {
    pub fn new(labels: Vec<usize>, sublibraries: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= sublibraries) {
            return Err(Error::InvalidSegmentation(format!(
                "label {bad} outside [0, {sublibraries})"
            )));
        }
        Ok(Self {
            labels,
            sublibraries,
        })
    }

    pub fn from_consecutive(seg: &Segmentation) -> Self {
        let labels = (0..seg.files()).map(|f| seg.sublibrary_of(f)).collect();
        Self {
            labels,
            sublibraries: seg.len(),
        }
    }

    /// `true` when some coded label is unused.
    pub fn has_empty_coded(&self) -> bool {
        let mut used = vec![false; self.sublibraries];
        for &l in &self.labels {
            used[l] = true;
        }
        used.iter().skip(1).any(|u| !u)
    }

    /// Mass and size of each coded sub-library, and the broadcast size.
    pub fn parts(&self, model: &PopularityModel) -> (usize, Vec<Part>) {
        let mut parts = vec![
            Part {
                mass: 0.0,
                width: 0
            };
            self.sublibraries
        ];
        for (f, &l) in self.labels.iter().enumerate() {
            parts[l].mass += model.p[f];
            parts[l].width += 1;
        }
        let broadcast = parts[0].width;
        (broadcast, parts.split_off(1))
    }

    /// Delay with KKT-optimal redundancies, `+inf` when infeasible or when
    /// a coded sub-library is empty.
    pub fn delay(&self, cfg: &SystemConfig, model: &PopularityModel) -> f64 {
        self.delay_with(cfg, model, UpperBound::Enforced)
    }

    pub fn delay_with(&self, cfg: &SystemConfig, model: &PopularityModel, upper: UpperBound) -> f64 {
        if self.has_empty_coded() {
            return f64::INFINITY;
        }
        if self.sublibraries == 1 {
            return crate::model::uniform_delay(cfg);
        }
        let (broadcast, parts) = self.parts(model);
        let enforce = upper == UpperBound::Enforced;
        kkt::optimized_delay_parts_with(cfg, broadcast, &parts, enforce).unwrap_or(f64::INFINITY)
    }

    /// Delay with fixed per-label redundancies (index 0 ignored).
    pub fn delay_at(&self, cfg: &SystemConfig, model: &PopularityModel, levels: &[f64]) -> f64 {
        let (broadcast, parts) = self.parts(model);
        let coded: f64 = parts
            .iter()
            .zip(&levels[1..])
            .map(|(p, &l)| p.mass / l)
            .sum();
        broadcast as f64 + cfg.delay_scale() * coded
    }
}

/// Every labelling of `files` files with `sublibraries` labels, `Q^N` in
/// total.
pub fn enumerate_general(files: usize, sublibraries: usize) -> impl Iterator<Item = GeneralSegmentation> {
    let mut current = (sublibraries > 0).then(|| vec![0usize; files]);
    std::iter::from_fn(move || {
        let cur = current.as_mut()?;
        let out = GeneralSegmentation {
            labels: cur.clone(),
            sublibraries,
        };
        let mut i = 0;
        loop {
            if i == cur.len() {
                current = None;
                break;
            }
            cur[i] += 1;
            if cur[i] < sublibraries {
                break;
            }
            cur[i] = 0;
            i += 1;
        }
        Some(out)
    })
}

/// Outcome of [`verify_consecutive_dominance`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest `best_consecutive - general` seen (negative when all dominated).
    pub worst_gap: f64,
    pub seed: u64,
    pub exhaustive: bool,
    pub swaps_checked: usize,
    pub swap_violations: usize,
    /// Largest deviation of a swap's delay change from its closed form.
    pub worst_swap_residual: f64,
    /// Labels of the general segmentation that beats every consecutive one
    /// by the widest margin.
    pub counterexample: Option<Vec<usize>>,
}

impl DominanceReport {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.swap_violations == 0
    }
}

/// Checks that consecutive segmentations dominate general ones, and that
/// moving a more popular file to the sub-library with more redundancy never
/// hurts. Exhaustive up to [`EXHAUSTIVE_GENERAL_LIMIT`] files, sampled with
/// `trials` random labellings otherwise.
pub fn verify_consecutive_dominance(
    cfg: &SystemConfig,
    model: &PopularityModel,
    q: usize,
    trials: usize,
    seed: u64,
) -> Result<DominanceReport> {
    verify_consecutive_dominance_with(cfg, model, q, trials, seed, UpperBound::Enforced)
}

/// [`verify_consecutive_dominance`] with a choice of whether `L_q <= U_q`
/// constrains both sides.
pub fn verify_consecutive_dominance_with(
    cfg: &SystemConfig,
    model: &PopularityModel,
    q: usize,
    trials: usize,
    seed: u64,
    upper: UpperBound,
) -> Result<DominanceReport> {
    let n = model.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::OracleScale {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let (_, best, _) = brute_optimal_with(cfg, model, q, upper)?;
    let exhaustive = n <= EXHAUSTIVE_GENERAL_LIMIT && (q as f64).powi(n as i32) <= 1e6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Box<dyn Iterator<Item = GeneralSegmentation>> = if exhaustive {
        Box::new(enumerate_general(n, q))
    } else {
        let mut draws = Vec::with_capacity(trials);
        for _ in 0..trials {
            let labels = (0..n).map(|_| rng.gen_range(0..q)).collect();
            draws.push(GeneralSegmentation {
                labels,
                sublibraries: q,
            });
        }
        Box::new(draws.into_iter())
    };

    let mut report = DominanceReport {
        checked: 0,
        violations: 0,
        worst_gap: f64::NEG_INFINITY,
        seed,
        exhaustive,
        swaps_checked: 0,
        swap_violations: 0,
        worst_swap_residual: 0.0,
        counterexample: None,
    };
    let tol = 1e-12 * best.abs().max(1.0);
    for g in candidates {
        let d = g.delay_with(cfg, model, upper);
        if !d.is_finite() {
            continue;
        }
        report.checked += 1;
        let gap = best - d;
        if gap > tol {
            report.violations += 1;
            if gap > report.worst_gap {
                report.counterexample = Some(g.labels.clone());
            }
        }
        report.worst_gap = report.worst_gap.max(gap);
        if q >= 3 {
            check_swap(cfg, model, &g, upper, &mut rng, &mut report);
        }
    }
    Ok(report)
}

/// One random swap between coded sub-libraries of `g`, at the KKT levels
/// of `g`.
fn check_swap(
    cfg: &SystemConfig,
    model: &PopularityModel,
    g: &GeneralSegmentation,
    upper: UpperBound,
    rng: &mut ChaCha8Rng,
    report: &mut DominanceReport,
) {
    let (broadcast, parts) = g.parts(model);
    let enforce = upper == UpperBound::Enforced;
    let Ok(sol) = kkt::solve_parts_with(cfg, broadcast, &parts, enforce) else {
        return;
    };
    let mut levels = vec![1.0];
    levels.extend(&sol.levels);
    let coded: Vec<usize> = (0..g.labels.len()).filter(|&f| g.labels[f] != 0).collect();
    if coded.len() < 2 {
        return;
    }
    let a = coded[rng.gen_range(0..coded.len())];
    let b = coded[rng.gen_range(0..coded.len())];
    let (la, lb) = (levels[g.labels[a]], levels[g.labels[b]]);
    if g.labels[a] == g.labels[b] {
        return;
    }
    // orient so that file `a` is the more popular one and sits lower
    let (a, b, la, lb) = if model.p[a] >= model.p[b] { (a, b, la, lb) } else { (b, a, lb, la) };
    if la >= lb {
        return;
    }
    let before = g.delay_at(cfg, model, &levels);
    let mut swapped = g.clone();
    swapped.labels.swap(a, b);
    let after = swapped.delay_at(cfg, model, &levels);
    let predicted = cfg.delay_scale() * (model.p[a] - model.p[b]) * (lb - la) / (la * lb);
    let residual = ((before - after) - predicted).abs();
    report.swaps_checked += 1;
    report.worst_swap_residual = report.worst_swap_residual.max(residual);
    if after > before + 1e-12 * before.abs() || residual > 1e-12 * before.abs().max(1.0) {
        report.swap_violations += 1;
    }
}

/// Best delay over a grid of redundancies with spacing `step`, for
/// segmentations with at most two coded sub-libraries. The first coded level
/// walks the grid (plus its clamp); the second takes whatever budget is left,
/// clamped to `[1, U]`.
pub fn grid_delay(
    cfg: &SystemConfig,
    model: &PopularityModel,
    seg: &Segmentation,
    step: f64,
) -> Result<f64> {
    if seg.is_uniform() {
        return Ok(cfg.delay_scale() / cfg.redundancy());
    }
    let parts = kkt::parts_of(model, seg);
    if parts.len() > 2 || !(step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid oracle takes at most two coded sub-libraries and a positive step, got {} and {step}",
            parts.len()
        )));
    }
    let scale = cfg.delay_scale();
    let room = cfg.budget() - seg.broadcast_files() as f64;
    let upper: Vec<f64> = parts.iter().map(|p| cfg.upper_redundancy(p.mass)).collect();
    let fill = |i: usize, left: f64| (left / parts[i].width as f64).min(upper[i]);
    let mut best = f64::INFINITY;
    if parts.len() == 1 {
        let l = fill(0, room);
        if l >= 1.0 {
            best = seg.broadcast_files() as f64 + scale * parts[0].mass / l;
        }
        return Ok(best);
    }
    let steps = ((upper[0] - 1.0) / step).floor().max(0.0) as usize;
    let grid = (0..=steps).map(|i| 1.0 + i as f64 * step).chain([upper[0]]);
    for l0 in grid.filter(|&l| l >= 1.0) {
        let l1 = fill(1, room - l0 * parts[0].width as f64);
        if l1 < 1.0 {
            continue;
        }
        let d = seg.broadcast_files() as f64
            + scale * (parts[0].mass / l0 + parts[1].mass / l1);
        best = best.min(d);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_oracle_agrees_with_kkt() {
        let cfg = SystemConfig::scenario_one(500).unwrap();
        let m = PopularityModel::zipf(6000, 0.4).unwrap();
        for b in [vec![6000], vec![0, 6000], vec![0, 1923, 6000], vec![12, 400, 6000]] {
            let seg = Segmentation::new(6000, b.clone()).unwrap();
            let exact = kkt::optimized_delay(&cfg, &m, &seg).unwrap();
            let grid = grid_delay(&cfg, &m, &seg, 1e-3).unwrap();
            assert!(grid >= exact * (1.0 - 1e-12), "{b:?}");
            assert!((grid - exact) / exact < 1e-4, "{b:?}: {grid} vs {exact}");
        }
    }

    #[test]
    fn consecutive_counts() {
        assert_eq!(enumerate_consecutive(4, 1, true).collect::<Vec<_>>(), vec![vec![4]]);
        assert_eq!(
            enumerate_consecutive(4, 2, false).collect::<Vec<_>>(),
            vec![vec![1, 4], vec![2, 4], vec![3, 4]]
        );
        assert_eq!(enumerate_consecutive(6, 3, false).count(), 10);
        for n in 1..9 {
            for q in 1..=n {
                for empty in [false, true] {
                    let c = enumerate_consecutive(n, q, empty).count();
                    assert_eq!(c as u128, consecutive_count(n, q, empty), "{n} {q} {empty}");
                }
            }
        }
    }

    #[test]
    fn general_count_is_q_to_n() {
        for (n, q) in [(1, 1), (3, 2), (4, 3), (5, 2), (6, 3)] {
            assert_eq!(enumerate_general(n, q).count(), q.pow(n as u32));
        }
    }

    #[test]
    fn scale_guard() {
        let cfg = SystemConfig::scenario_one(300).unwrap();
        let m = PopularityModel::zipf(6000, 1.0).unwrap();
        assert!(matches!(
            brute_optimal(&cfg, &m, 2),
            Err(Error::OracleScale { limit: 20, .. })
        ));
    }

    #[test]
    fn general_matches_consecutive_delay() {
        let cfg = SystemConfig::new(8, 40, 4, 0.25, 0.5, 4, 100).unwrap();
        let m = PopularityModel::zipf(8, 1.0).unwrap();
        let seg = Segmentation::new(8, vec![1, 3, 8]).unwrap();
        let g = GeneralSegmentation::from_consecutive(&seg);
        assert_eq!(g.labels, vec![0, 1, 1, 2, 2, 2, 2, 2]);
        let d = segment_delay(&cfg, &m, seg.boundaries(), UpperBound::Enforced);
        assert!((g.delay(&cfg, &m) - d).abs() <= 1e-12 * d);
    }
}
