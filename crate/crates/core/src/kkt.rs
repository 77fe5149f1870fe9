//! Optimal redundancy allocation for a fixed segmentation.
//!
//! For fixed sub-libraries the objective is separable and convex in the
//! redundancies, so the KKT point has the water-filling form
//! `L_q = clamp(t * sqrt(pi_q / w_q), 1, U_q)` for a single water level `t`
//! set by the memory budget. The level is located exactly on the piecewise
//! linear budget curve; the active sets then follow from which clamp binds,
//! and the interior redundancies are recomputed from the closed form so the
//! budget holds with equality.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    memory_sharing_split, uniform_delay, ActiveLabel, PopularityModel, RedundancyAllocation,
    Segmentation, SystemConfig,
};

/// Relative slack used to label a redundancy sitting exactly on a clamp as
/// interior.
const LABEL_TOL: f64 = 1e-12;

/// Demand mass and size of one coded sub-library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Part {
    pub mass: f64,
    pub width: usize,
}

/// Active-set partition at the optimum. Indices refer to sub-libraries
/// (0-based, index 0 being the broadcast sub-library, which belongs to no set).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveSetState {
    pub phi: Vec<usize>,
    pub psi: Vec<usize>,
    pub chi: Vec<usize>,
    /// Files held at unit redundancy by the lower-clamped sub-libraries.
    pub phi_mass: f64,
    /// Memory taken by the upper-clamped sub-libraries.
    pub psi_mass: f64,
    /// `L N - n_1 - phi_mass - psi_mass`, left for the interior set.
    pub residual_budget: f64,
}

/// Result of the allocation step on raw sub-library statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PartsSolution {
    /// One level per coded part (the broadcast level is implicit).
    pub levels: Vec<f64>,
    pub labels: Vec<ActiveLabel>,
    pub uppers: Vec<f64>,
    pub state: ActiveSetState,
}

/// Coded-part statistics of a consecutive segmentation (`Q >= 2`).
pub fn parts_of(model: &PopularityModel, seg: &Segmentation) -> Vec<Part> {
    (1..seg.len())
        .map(|q| {
            let (lo, hi) = seg.range(q);
            Part {
                mass: model.mass(lo, hi),
                width: hi - lo,
            }
        })
        .collect()
}

/// Solves the allocation for a broadcast block of `broadcast_files` files
/// followed by arbitrary coded parts. Part `i` is reported as sub-library
/// `i + 1`.
pub fn solve_parts(cfg: &SystemConfig, broadcast_files: usize, parts: &[Part]) -> Result<PartsSolution> {
    solve_parts_with(cfg, broadcast_files, parts, true)
}

/// [`solve_parts`] with the cap `L_q <= U_q` optionally dropped
/// (`enforce_upper = false` sets every `U_q` to `+inf`).
pub fn solve_parts_with(
    cfg: &SystemConfig,
    broadcast_files: usize,
    parts: &[Part],
    enforce_upper: bool,
) -> Result<PartsSolution> {
    let mut slopes = Vec::with_capacity(parts.len());
    let mut uppers = Vec::with_capacity(parts.len());
    for (i, part) in parts.iter().enumerate() {
        if part.width == 0 {
            return Err(Error::InvalidSegmentation(format!(
                "sub-library {} is empty",
                i + 1
            )));
        }
        let upper = if enforce_upper {
            cfg.upper_redundancy(part.mass)
        } else {
            f64::INFINITY
        };
        if !(upper >= 1.0) {
            return Err(Error::InfeasibleSegment {
                sublibrary: i + 1,
                upper,
            });
        }
        slopes.push((part.mass / part.width as f64).sqrt());
        uppers.push(upper);
    }
    let budget = cfg.budget() - broadcast_files as f64;
    let level = water_level(parts, &slopes, &uppers, budget, &mut Vec::new());

    let mut labels = Vec::with_capacity(parts.len());
    let (mut phi, mut psi, mut chi) = (Vec::new(), Vec::new(), Vec::new());
    let (mut phi_mass, mut psi_mass) = (0.0, 0.0);
    for (i, part) in parts.iter().enumerate() {
        let label = label_of(level, slopes[i], uppers[i]);
        let w = part.width as f64;
        match label {
            ActiveLabel::Lower => {
                phi.push(i + 1);
                phi_mass += w;
            }
            ActiveLabel::Upper => {
                psi.push(i + 1);
                psi_mass += uppers[i] * w;
            }
            _ => chi.push(i + 1),
        }
        labels.push(label);
    }
    let residual_budget = budget - phi_mass - psi_mass;
    let spread: f64 = chi
        .iter()
        .map(|&q| {
            let p = parts[q - 1];
            (p.mass * p.width as f64).sqrt()
        })
        .sum();
    let levels = parts
        .iter()
        .enumerate()
        .map(|(i, p)| match labels[i] {
            ActiveLabel::Lower => 1.0,
            ActiveLabel::Upper => uppers[i],
            _ => (p.mass / p.width as f64).sqrt() * residual_budget / spread,
        })
        .collect();
    Ok(PartsSolution {
        levels,
        labels,
        uppers,
        state: ActiveSetState {
            phi,
            psi,
            chi,
            phi_mass,
            psi_mass,
            residual_budget,
        },
    })
}

fn label_of(level: Option<f64>, slope: f64, upper: f64) -> ActiveLabel {
    let free = level.map_or(f64::INFINITY, |t| slope * t);
    if free < 1.0 - LABEL_TOL {
        ActiveLabel::Lower
    } else if free > upper * (1.0 + LABEL_TOL) {
        ActiveLabel::Upper
    } else {
        ActiveLabel::Interior
    }
}

/// Water level `t` at which `sum_q w_q clamp(a_q t, 1, U_q)` meets the
/// budget, or `None` when every part fits at its upper bound.
fn water_level(
    parts: &[Part],
    slopes: &[f64],
    uppers: &[f64],
    budget: f64,
    events: &mut Vec<(f64, f64)>,
) -> Option<f64> {
    let saturated: f64 = parts
        .iter()
        .zip(uppers)
        .map(|(p, &u)| p.width as f64 * u)
        .sum();
    if saturated <= budget {
        return None;
    }
    // usage(t) = base + rate * t between consecutive breakpoints; part i
    // starts growing at 1/a_i and stops at U_i/a_i
    events.clear();
    let mut base = 0.0;
    for ((p, &a), &u) in parts.iter().zip(slopes).zip(uppers) {
        let w = p.width as f64;
        base += w;
        events.push((1.0 / a, w * a));
        if u.is_finite() {
            events.push((u / a, -w * a));
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));

    let (mut rate, mut t0) = (0.0f64, 0.0f64);
    let mut g0 = base;
    let mut i = 0;
    while i < events.len() {
        let t1 = events[i].0;
        let g1 = g0 + rate * (t1 - t0);
        if g1 >= budget {
            if rate == 0.0 {
                return Some(t1);
            }
            return Some(t0 + (budget - g0) / rate);
        }
        // apply every event at t1; a part that stops contributes its cap
        while i < events.len() && events[i].0 == t1 {
            let (_, d) = events[i];
            rate += d;
            i += 1;
        }
        t0 = t1;
        g0 = g1;
    }
    if rate > 0.0 {
        Some(t0 + (budget - g0) / rate)
    } else {
        Some(t0)
    }
}

/// Optimal redundancy vector for a fixed segmentation.
pub fn solve_allocation(
    cfg: &SystemConfig,
    model: &PopularityModel,
    seg: &Segmentation,
) -> Result<RedundancyAllocation> {
    Ok(solve_with_state(cfg, model, seg)?.0)
}

/// [`solve_allocation`] together with its active-set partition.
pub fn solve_with_state(
    cfg: &SystemConfig,
    model: &PopularityModel,
    seg: &Segmentation,
) -> Result<(RedundancyAllocation, ActiveSetState)> {
    check_sizes(cfg, model, seg)?;
    if seg.is_uniform() {
        let l = cfg.redundancy();
        let alloc = RedundancyAllocation {
            levels: vec![l],
            labels: vec![ActiveLabel::Interior],
            splits: vec![memory_sharing_split(l)?],
        };
        let state = ActiveSetState {
            phi: vec![],
            psi: vec![],
            chi: vec![0],
            phi_mass: 0.0,
            psi_mass: 0.0,
            residual_budget: cfg.budget(),
        };
        return Ok((alloc, state));
    }
    let sol = solve_parts(cfg, seg.broadcast_files(), &parts_of(model, seg))?;
    let mut levels = Vec::with_capacity(seg.len());
    levels.push(1.0);
    levels.extend(&sol.levels);
    let mut labels = Vec::with_capacity(seg.len());
    labels.push(ActiveLabel::Broadcast);
    labels.extend(&sol.labels);
    let splits = levels
        .iter()
        .map(|&l| memory_sharing_split(l.max(1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        RedundancyAllocation {
            levels,
            labels,
            splits,
        },
        sol.state,
    ))
}

fn check_sizes(cfg: &SystemConfig, model: &PopularityModel, seg: &Segmentation) -> Result<()> {
    if model.len() != cfg.files || seg.files() != cfg.files {
        return Err(Error::InvalidParameter(format!(
            "library sizes disagree: config {}, model {}, segmentation {}",
            cfg.files,
            model.len(),
            seg.files()
        )));
    }
    Ok(())
}

/// Delay optimized over the redundancies, evaluated from the active sets
/// alone:
/// `n_1 + C sum_phi pi_q + C sum_psi pi_q / U_q + C (sum_chi sqrt(pi_q w_q))^2 / residual`
/// with `C = K (1 - gamma) / (1 + Lambda gamma)`.
pub fn optimized_delay(cfg: &SystemConfig, model: &PopularityModel, seg: &Segmentation) -> Result<f64> {
    check_sizes(cfg, model, seg)?;
    if seg.is_uniform() {
        return Ok(uniform_delay(cfg));
    }
    optimized_delay_parts(cfg, seg.broadcast_files(), &parts_of(model, seg))
}

/// [`optimized_delay`] on raw part statistics.
pub fn optimized_delay_parts(cfg: &SystemConfig, broadcast_files: usize, parts: &[Part]) -> Result<f64> {
    optimized_delay_parts_with(cfg, broadcast_files, parts, true)
}

pub fn optimized_delay_parts_with(
    cfg: &SystemConfig,
    broadcast_files: usize,
    parts: &[Part],
    enforce_upper: bool,
) -> Result<f64> {
    delay_in(&mut Workspace::default(), cfg, broadcast_files, parts, enforce_upper)
}

/// Scratch buffers for repeated delay evaluations.
#[derive(Debug, Default)]
pub struct Workspace {
    slopes: Vec<f64>,
    uppers: Vec<f64>,
    breaks: Vec<(f64, f64)>,
}

/// [`optimized_delay_parts_with`] reusing the buffers of `ws`.
pub fn delay_in(
    ws: &mut Workspace,
    cfg: &SystemConfig,
    broadcast_files: usize,
    parts: &[Part],
    enforce_upper: bool,
) -> Result<f64> {
    ws.slopes.clear();
    ws.uppers.clear();
    for (i, part) in parts.iter().enumerate() {
        if part.width == 0 {
            return Err(Error::InvalidSegmentation(format!(
                "sub-library {} is empty",
                i + 1
            )));
        }
        let upper = if enforce_upper {
            cfg.upper_redundancy(part.mass)
        } else {
            f64::INFINITY
        };
        if !(upper >= 1.0) {
            return Err(Error::InfeasibleSegment {
                sublibrary: i + 1,
                upper,
            });
        }
        ws.slopes.push((part.mass / part.width as f64).sqrt());
        ws.uppers.push(upper);
    }
    let budget = cfg.budget() - broadcast_files as f64;
    let level = water_level(parts, &ws.slopes, &ws.uppers, budget, &mut ws.breaks);
    let (mut lower, mut upper, mut spread) = (0.0, 0.0, 0.0);
    let (mut phi_mass, mut psi_mass, mut any_interior) = (0.0, 0.0, false);
    for (i, p) in parts.iter().enumerate() {
        match label_of(level, ws.slopes[i], ws.uppers[i]) {
            ActiveLabel::Lower => {
                lower += p.mass;
                phi_mass += p.width as f64;
            }
            ActiveLabel::Upper => {
                upper += p.mass / ws.uppers[i];
                psi_mass += ws.uppers[i] * p.width as f64;
            }
            _ => {
                spread += (p.mass * p.width as f64).sqrt();
                any_interior = true;
            }
        }
    }
    let interior = if any_interior {
        spread * spread / (budget - phi_mass - psi_mass)
    } else {
        0.0
    };
    Ok(broadcast_files as f64 + cfg.delay_scale() * (lower + upper + interior))
}

/// Delay with the redundancy bounds dropped,
/// `n_1 + C (sum_{q>=2} sqrt(pi_q w_q))^2 / (L N - n_1)`. Coincides with
/// [`optimized_delay`] whenever no bound is active.
pub fn unconstrained_delay(cfg: &SystemConfig, model: &PopularityModel, seg: &Segmentation) -> f64 {
    if seg.is_uniform() {
        return uniform_delay(cfg);
    }
    let s: f64 = parts_of(model, seg)
        .iter()
        .map(|p| (p.mass * p.width as f64).sqrt())
        .sum();
    let n1 = seg.broadcast_files() as f64;
    n1 + cfg.delay_scale() * s * s / (cfg.budget() - n1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expected_delay;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn single_coded_sublibrary_takes_full_redundancy() {
        let cfg = SystemConfig::scenario_one(500).unwrap();
        let m = PopularityModel::zipf(6000, 0.7).unwrap();
        let seg = Segmentation::new(6000, vec![0, 6000]).unwrap();
        let a = solve_allocation(&cfg, &m, &seg).unwrap();
        assert_eq!(a.levels[0], 1.0);
        assert!(rel(a.levels[1], 5.0) < 1e-14);
        let d = optimized_delay(&cfg, &m, &seg).unwrap();
        assert!(rel(d, uniform_delay(&cfg)) < 1e-12);
    }

    #[test]
    fn uniform_popularity_halves_get_equal_levels() {
        let cfg = SystemConfig::scenario_one(2000).unwrap();
        let m = PopularityModel::zipf(6000, 0.0).unwrap();
        let seg = Segmentation::new(6000, vec![0, 3000, 6000]).unwrap();
        let a = solve_allocation(&cfg, &m, &seg).unwrap();
        assert!(rel(a.levels[1], 5.0) < 1e-12 && rel(a.levels[2], 5.0) < 1e-12);
    }

    #[test]
    fn reproduces_table_allocation() {
        let cfg = SystemConfig::scenario_one(500).unwrap();
        let m = PopularityModel::zipf(6000, 0.4).unwrap();
        let seg = Segmentation::new(6000, vec![0, 1923, 6000]).unwrap();
        let a = solve_allocation(&cfg, &m, &seg).unwrap();
        assert!(rel(a.levels[1], 6.2933) < 1e-2, "{:?}", a.levels);
        assert!(rel(a.levels[2], 4.3900) < 1e-2, "{:?}", a.levels);
        let used = a.levels[1] * 1923.0 + a.levels[2] * 4077.0;
        assert!(rel(used, 30_000.0) < 1e-9);
    }

    #[test]
    fn closed_form_matches_composition() {
        let cfg = SystemConfig::scenario_one(1000).unwrap();
        for alpha in [0.0, 0.5, 1.1, 1.9] {
            let m = PopularityModel::zipf(6000, alpha).unwrap();
            for b in [vec![0, 700, 6000], vec![3, 900, 2500, 6000], vec![0, 6000]] {
                let seg = Segmentation::new(6000, b).unwrap();
                let Ok(a) = solve_allocation(&cfg, &m, &seg) else { continue };
                let via_levels = expected_delay(&cfg, &m, &seg, &a).unwrap();
                let closed = optimized_delay(&cfg, &m, &seg).unwrap();
                assert!(rel(via_levels, closed) < 1e-9, "{alpha} {seg:?}");
            }
        }
    }

    #[test]
    fn simplified_form_without_active_bounds() {
        let cfg = SystemConfig::scenario_one(2000).unwrap();
        let m = PopularityModel::zipf(6000, 0.4).unwrap();
        let seg = Segmentation::new(6000, vec![0, 1000, 3000, 6000]).unwrap();
        let (a, st) = solve_with_state(&cfg, &m, &seg).unwrap();
        assert!(st.phi.is_empty() && st.psi.is_empty(), "{a:?}");
        let d = optimized_delay(&cfg, &m, &seg).unwrap();
        assert!(rel(d, unconstrained_delay(&cfg, &m, &seg)) < 1e-12);
    }

    #[test]
    fn upper_clamp_binds_for_small_user_counts() {
        // K = 300: one broadcast file at alpha = 1.6 leaves the coded block
        // capped at U = 7.5 (1 - p_1)
        let cfg = SystemConfig::scenario_one(300).unwrap();
        let m = PopularityModel::zipf(6000, 1.6).unwrap();
        let seg = Segmentation::new(6000, vec![1, 6000]).unwrap();
        let (a, st) = solve_with_state(&cfg, &m, &seg).unwrap();
        assert_eq!(st.psi, vec![1]);
        assert!(rel(a.levels[1], 4.2058) < 1e-3, "{:?}", a.levels);
        assert_eq!(a.labels[1], ActiveLabel::Upper);
    }

    #[test]
    fn lower_clamp_binds_for_light_tail() {
        // a tiny tail block gets the lower bound
        let cfg = SystemConfig::new(10, 400, 10, 0.25, 0.5, 4, 100).unwrap();
        let m = PopularityModel::zipf(10, 2.0).unwrap();
        let seg = Segmentation::new(10, vec![0, 2, 10]).unwrap();
        let (a, st) = solve_with_state(&cfg, &m, &seg).unwrap();
        assert!(st.phi.contains(&2) || st.psi.contains(&1), "{a:?} {st:?}");
        let d = optimized_delay(&cfg, &m, &seg).unwrap();
        assert!(rel(d, expected_delay(&cfg, &m, &seg, &a).unwrap()) < 1e-9);
    }

    #[test]
    fn rejects_infeasible_segments() {
        let cfg = SystemConfig::scenario_one(300).unwrap();
        let m = PopularityModel::zipf(6000, 0.2).unwrap();
        // the last ten files carry almost no demand: U < 1
        let seg = Segmentation::new(6000, vec![0, 5990, 6000]).unwrap();
        assert!(matches!(
            solve_allocation(&cfg, &m, &seg),
            Err(Error::InfeasibleSegment { sublibrary: 2, .. })
        ));
        let empty = [Part { mass: 0.5, width: 0 }];
        assert!(matches!(
            solve_parts(&cfg, 0, &empty),
            Err(Error::InvalidSegmentation(_))
        ));
    }
}
