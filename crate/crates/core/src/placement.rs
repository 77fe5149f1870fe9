//! Concrete cache contents for a solved allocation.
//!
//! Transmitters: files are laid one after another on a circle of
//! circumference `K_T`, file `f` of sub-library `q` taking an arc of length
//! `L_q`. Transmitter `j` owns the unit cells `[j, j + 1) + m K_T`. Byte `u`
//! of a file (as a fraction in `[0, 1)`) is stored at arc offsets
//! `u, u + 1, u + 2, ...` below `L_q`, which lands the first `frac(L_q)` of
//! the file on `ceil(L_q)` distinct transmitters and the rest on
//! `floor(L_q)`. For integer levels this is the plain cyclic placement.
//!
//! Receivers: each file is split into `binom(Lambda, Lambda gamma)` subfiles
//! indexed by `(Lambda gamma)`-subsets `tau`; cache `l` keeps the subfiles
//! with `l` in `tau`, and users are dealt to caches round-robin.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{binomial, RedundancyAllocation, Segmentation, SystemConfig, FEASIBILITY_TOL};

/// Part of one file held by one transmitter: bytes
/// `[offset, offset + fraction)` of `file`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Piece {
    pub file: usize,
    pub offset: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmitterPlacement {
    pub transmitters: usize,
    pub per_tx: Vec<Vec<Piece>>,
    /// Arc position where each sub-library starts; its integer part modulo
    /// `K_T` is the first transmitter used.
    pub cursor_trace: Vec<f64>,
}

impl TransmitterPlacement {
    /// Stored file units per transmitter.
    pub fn loads(&self) -> Vec<f64> {
        self.per_tx
            .iter()
            .map(|ps| ps.iter().map(|p| p.fraction).sum())
            .collect()
    }

    /// Files with any part on transmitter `tx`, ascending.
    pub fn files_on(&self, tx: usize) -> Vec<usize> {
        let mut files: Vec<usize> = self.per_tx[tx].iter().map(|p| p.file).collect();
        files.sort_unstable();
        files.dedup();
        files
    }
}

pub fn place_transmitters(
    cfg: &SystemConfig,
    seg: &Segmentation,
    alloc: &RedundancyAllocation,
) -> Result<TransmitterPlacement> {
    if alloc.levels.len() != seg.len() {
        return Err(Error::InvalidParameter(format!(
            "allocation has {} levels for {} sub-libraries",
            alloc.levels.len(),
            seg.len()
        )));
    }
    if seg.files() != cfg.files {
        return Err(Error::InvalidParameter(format!(
            "segmentation covers {} files, config {}",
            seg.files(),
            cfg.files
        )));
    }
    let kt = cfg.transmitters;
    for (q, &l) in alloc.levels.iter().enumerate() {
        if !(l >= 1.0 - FEASIBILITY_TOL) || l > kt as f64 * (1.0 + FEASIBILITY_TOL) {
            return Err(Error::InvalidParameter(format!(
                "sub-library {q} redundancy {l} outside [1, K_T = {kt}]"
            )));
        }
    }

    let mut per_tx = vec![Vec::new(); kt];
    let mut cursor_trace = Vec::with_capacity(seg.len());
    let mut base = 0.0;
    let mut cuts = Vec::new();
    for q in 0..seg.len() {
        let (lo, hi) = seg.range(q);
        let level = alloc.levels[q].clamp(1.0, kt as f64);
        cursor_trace.push(base);
        for (i, file) in (lo..hi).enumerate() {
            let start = base + i as f64 * level;
            lay_file(&mut per_tx, &mut cuts, file, start, level);
        }
        base += (hi - lo) as f64 * level;
    }

    let placement = TransmitterPlacement {
        transmitters: kt,
        per_tx,
        cursor_trace,
    };
    let capacity = cfg.transmitter_capacity();
    for (tx, load) in placement.loads().into_iter().enumerate() {
        if load > capacity * (1.0 + FEASIBILITY_TOL) + FEASIBILITY_TOL {
            return Err(Error::Capacity {
                transmitter: tx,
                load,
                capacity,
            });
        }
    }
    Ok(placement)
}

/// Cuts the arc `[start, start + level)` at unit cells and at file copies.
fn lay_file(per_tx: &mut [Vec<Piece>], cuts: &mut Vec<f64>, file: usize, start: f64, level: f64) {
    let kt = per_tx.len();
    let end = start + level;
    cuts.clear();
    cuts.push(start);
    cuts.push(end);
    let mut cell = start.floor() + 1.0;
    while cell < end {
        cuts.push(cell);
        cell += 1.0;
    }
    let mut copy = 1.0;
    while copy < level {
        cuts.push(start + copy);
        copy += 1.0;
    }
    cuts.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        // slivers from rounding between nearly equal cuts
        if b - a <= 1e-12 {
            continue;
        }
        let mid = 0.5 * (a + b);
        let tx = (mid.floor() as usize) % kt;
        let copy = (mid - start).floor();
        let offset = (a - start - copy).max(0.0);
        let fraction = (b - a).min(1.0 - offset);
        per_tx[tx].push(Piece {
            file,
            offset,
            fraction,
        });
    }
}

/// Result of [`verify_transmitters`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementCheck {
    pub files_checked: usize,
    pub max_load: f64,
    pub min_load: f64,
    pub capacity: f64,
    /// Whether every transmitter is filled to capacity.
    pub loads_equal_capacity: bool,
}

/// Checks that every byte of every file in sub-library `q` is held by
/// `ceil(L_q)` (first `frac(L_q)` of the file) or `floor(L_q)` distinct
/// transmitters, and that no transmitter exceeds `gamma_T N`.
pub fn verify_transmitters(
    cfg: &SystemConfig,
    seg: &Segmentation,
    alloc: &RedundancyAllocation,
    placement: &TransmitterPlacement,
) -> Result<PlacementCheck> {
    let mut by_file: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); cfg.files];
    for (tx, pieces) in placement.per_tx.iter().enumerate() {
        for p in pieces {
            by_file[p.file].push((tx, p.offset, p.offset + p.fraction));
        }
    }
    let tol = 1e-9;
    for q in 0..seg.len() {
        let (lo, hi) = seg.range(q);
        let level = alloc.levels[q];
        let split = level - level.floor();
        let (floor, ceil) = (level.floor() as usize, level.floor() as usize + 1);
        for file in lo..hi {
            let pieces = &by_file[file];
            // elementary byte intervals between all piece endpoints
            let mut marks: Vec<f64> = vec![0.0, 1.0];
            if split > tol && split < 1.0 - tol {
                marks.push(split);
            }
            for &(_, a, b) in pieces {
                marks.push(a);
                marks.push(b);
            }
            marks.sort_by(f64::total_cmp);
            marks.dedup_by(|a, b| (*a - *b).abs() <= tol);
            for w in marks.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b - a <= tol {
                    continue;
                }
                let mid = 0.5 * (a + b);
                let mut holders: Vec<usize> = pieces
                    .iter()
                    .filter(|&&(_, s, e)| s <= mid && mid < e)
                    .map(|&(tx, _, _)| tx)
                    .collect();
                let count = holders.len();
                holders.sort_unstable();
                holders.dedup();
                let want = if mid < split { ceil } else { floor };
                if holders.len() != count || count != want {
                    return Err(Error::ConstraintViolation {
                        constraint: crate::error::Constraint::Dimension,
                        sublibrary: Some(q),
                        detail: format!(
                            "file {file} bytes [{a:.6}, {b:.6}) held {count} times on {} \
                             transmitters, expected {want}",
                            holders.len()
                        ),
                    });
                }
            }
        }
    }
    let loads = placement.loads();
    let capacity = cfg.transmitter_capacity();
    let max_load = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_load = loads.iter().copied().fold(f64::INFINITY, f64::min);
    if let Some((tx, &load)) = loads
        .iter()
        .enumerate()
        .find(|(_, &l)| l > capacity * (1.0 + FEASIBILITY_TOL) + FEASIBILITY_TOL)
    {
        return Err(Error::Capacity {
            transmitter: tx,
            load,
            capacity,
        });
    }
    let eq_tol = 1e-9 * capacity.max(1.0);
    Ok(PlacementCheck {
        files_checked: cfg.files,
        max_load,
        min_load,
        capacity,
        loads_equal_capacity: (max_load - capacity).abs() <= eq_tol
            && (min_load - capacity).abs() <= eq_tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceiverPlacement {
    pub groups: usize,
    pub cached_groups: usize,
    /// Subfile labels `tau`, 0-based cache indices in increasing order.
    pub subfiles: Vec<Vec<usize>>,
    /// Indices into `subfiles` stored by each cache.
    pub cache_contents: Vec<Vec<usize>>,
    /// Cache used by each user.
    pub user_to_cache: Vec<usize>,
}

impl ReceiverPlacement {
    pub fn num_subfiles(&self) -> usize {
        self.subfiles.len()
    }

    /// Users sharing cache `group`.
    pub fn group_members(&self, group: usize) -> Vec<usize> {
        (0..self.user_to_cache.len())
            .filter(|&u| self.user_to_cache[u] == group)
            .collect()
    }
}

pub fn place_receivers(cfg: &SystemConfig) -> Result<ReceiverPlacement> {
    let groups = cfg.lambda;
    let lg = groups as f64 * cfg.gamma;
    if (lg - lg.round()).abs() > 1e-9 || groups == 0 {
        return Err(Error::Infeasible(format!(
            "Lambda gamma = {lg} is not an integer"
        )));
    }
    let t = lg.round() as usize;
    let count = binomial(groups as u64, t as u64).unwrap_or(u128::MAX);
    if count > cfg.subpacketization as u128 {
        return Err(Error::Infeasible(format!(
            "binom({groups}, {t}) = {count} subfiles exceed F = {}",
            cfg.subpacketization
        )));
    }
    let mut subfiles = Vec::with_capacity(count as usize);
    let mut tau: Vec<usize> = (0..t).collect();
    loop {
        subfiles.push(tau.clone());
        // next t-subset of 0..groups in lexicographic order
        let mut i = t;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if tau[i] < groups - (t - i) {
                tau[i] += 1;
                for j in i + 1..t {
                    tau[j] = tau[j - 1] + 1;
                }
                break true;
            }
        };
        if !advanced {
            break;
        }
    }
    let mut cache_contents = vec![Vec::new(); groups];
    for (idx, tau) in subfiles.iter().enumerate() {
        for &l in tau {
            cache_contents[l].push(idx);
        }
    }
    let user_to_cache = (0..cfg.users).map(|u| u % groups).collect();
    Ok(ReceiverPlacement {
        groups,
        cached_groups: t,
        subfiles,
        cache_contents,
        user_to_cache,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PopularityModel;

    #[test]
    fn hand_executed_cyclic_example() {
        let cfg = SystemConfig::new(6, 4, 3, 0.5, 0.5, 2, 10).unwrap();
        let m = PopularityModel::zipf(6, 1.0).unwrap();
        let seg = Segmentation::new(6, vec![3, 6]).unwrap();
        let alloc = RedundancyAllocation::from_levels(&cfg, &m, &seg, vec![1.0, 2.0]).unwrap();
        let p = place_transmitters(&cfg, &seg, &alloc).unwrap();
        assert_eq!(p.files_on(0), vec![0, 3, 4]);
        assert_eq!(p.files_on(1), vec![1, 3, 5]);
        assert_eq!(p.files_on(2), vec![2, 4, 5]);
        assert_eq!(p.loads(), vec![3.0, 3.0, 3.0]);
        let check = verify_transmitters(&cfg, &seg, &alloc, &p).unwrap();
        assert!(check.loads_equal_capacity);
    }

    #[test]
    fn diagonal_placement() {
        let cfg = SystemConfig::new(4, 4, 4, 0.5, 0.25, 2, 10).unwrap();
        let seg = Segmentation::uniform(4);
        let m = PopularityModel::zipf(4, 0.0).unwrap();
        let alloc = RedundancyAllocation::from_levels(&cfg, &m, &seg, vec![1.0]).unwrap();
        let p = place_transmitters(&cfg, &seg, &alloc).unwrap();
        for tx in 0..4 {
            assert_eq!(p.files_on(tx), vec![tx]);
        }
    }

    #[test]
    fn full_replication() {
        let cfg = SystemConfig::new(3, 4, 3, 0.5, 1.0, 2, 10).unwrap();
        let seg = Segmentation::uniform(3);
        let m = PopularityModel::zipf(3, 0.5).unwrap();
        let alloc = RedundancyAllocation::from_levels(&cfg, &m, &seg, vec![3.0]).unwrap();
        let p = place_transmitters(&cfg, &seg, &alloc).unwrap();
        for tx in 0..3 {
            assert_eq!(p.files_on(tx), vec![0, 1, 2]);
        }
    }

    #[test]
    fn fractional_levels_split_copies() {
        let cfg = SystemConfig::new(4, 4, 4, 0.5, 0.5, 2, 10).unwrap();
        let m = PopularityModel::zipf(4, 1.0).unwrap();
        let seg = Segmentation::new(4, vec![0, 1, 4]).unwrap();
        let alloc = RedundancyAllocation::from_levels(&cfg, &m, &seg, vec![1.0, 2.5, 11.0 / 6.0]).unwrap();
        let p = place_transmitters(&cfg, &seg, &alloc).unwrap();
        let check = verify_transmitters(&cfg, &seg, &alloc, &p).unwrap();
        assert!(check.loads_equal_capacity, "{check:?}");
    }

    #[test]
    fn overflow_is_reported() {
        let cfg = SystemConfig::new(4, 4, 2, 0.5, 0.5, 2, 10).unwrap();
        let m = PopularityModel::zipf(4, 1.0).unwrap();
        let seg = Segmentation::uniform(4);
        let alloc = RedundancyAllocation::from_levels(&cfg, &m, &seg, vec![2.0]).unwrap();
        assert!(matches!(
            place_transmitters(&cfg, &seg, &alloc),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn receiver_example() {
        let cfg = SystemConfig::new(10, 50, 2, 0.1, 0.5, 10, 10).unwrap();
        let r = place_receivers(&cfg).unwrap();
        assert_eq!(r.num_subfiles(), 10);
        assert_eq!(r.cache_contents[0], vec![0]);
        assert_eq!(r.group_members(0), vec![0, 10, 20, 30, 40]);

        let cfg = SystemConfig::new(10, 2, 2, 0.5, 0.5, 2, 10).unwrap();
        let r = place_receivers(&cfg).unwrap();
        assert_eq!(r.subfiles, vec![vec![0], vec![1]]);
        assert_eq!(r.cache_contents[0], vec![0]);
    }

    #[test]
    fn receiver_fraction_scenario_one() {
        let cfg = SystemConfig::scenario_one(300).unwrap();
        let r = place_receivers(&cfg).unwrap();
        assert_eq!(r.num_subfiles(), 91_390);
        for c in &r.cache_contents {
            assert_eq!(c.len(), 9139);
        }
        let sizes: Vec<usize> = (0..40).map(|g| r.group_members(g).len()).collect();
        assert!(sizes.iter().all(|&s| s == 7 || s == 8));
    }
}
