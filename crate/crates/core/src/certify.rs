//! Numerical certificate that an allocation satisfies the KKT conditions of
//! the fixed-segmentation problem.

use serde::Serialize;

use crate::model::{
    ActiveLabel, PopularityModel, RedundancyAllocation, Segmentation, SystemConfig,
    FEASIBILITY_TOL,
};

pub const STATIONARITY_TOL: f64 = 1e-8;
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktCertificate {
    /// `max / min - 1` of `pi_q / (L_q^2 w_q)` over interior sub-libraries.
    pub stationarity_spread: f64,
    /// `(L N - used) / (L N)`.
    pub budget_slack: f64,
    pub has_interior: bool,
    /// Every clamped sub-library would cross its clamp if freed.
    pub complementarity: bool,
    /// Coded sub-libraries with more popular files (higher `pi_q / w_q`)
    /// never get less redundancy, unless capped at `U_q`.
    pub ordering: bool,
    /// Levels inside `[1, U_q]` and budget respected.
    pub feasible: bool,
}

impl KktCertificate {
    pub fn holds(&self) -> bool {
        self.feasible
            && self.complementarity
            && self.ordering
            && self.stationarity_spread <= STATIONARITY_TOL
            && (!self.has_interior || self.budget_slack.abs() <= BUDGET_TOL)
    }
}

pub fn certify(
    cfg: &SystemConfig,
    model: &PopularityModel,
    seg: &Segmentation,
    alloc: &RedundancyAllocation,
) -> KktCertificate {
    let budget = cfg.budget();
    let coded: Vec<usize> = if seg.is_uniform() {
        vec![0]
    } else {
        (1..seg.len()).collect()
    };
    let mut used = seg.broadcast_files() as f64;
    let mut feasible = alloc.levels.len() == seg.len();
    let mut interior_ratio = Vec::new();
    let mut water = Vec::new();
    for &q in &coded {
        let (lo, hi) = seg.range(q);
        let (w, pi) = ((hi - lo) as f64, model.mass(lo, hi));
        let l = alloc.levels[q];
        used += l * w;
        let upper = if seg.is_uniform() {
            cfg.redundancy()
        } else {
            cfg.upper_redundancy(pi)
        };
        if l < 1.0 - FEASIBILITY_TOL || l > upper * (1.0 + FEASIBILITY_TOL) {
            feasible = false;
        }
        if alloc.labels[q] == ActiveLabel::Interior {
            interior_ratio.push(pi / (l * l * w));
            water.push(l / (pi / w).sqrt());
        }
    }
    if used > budget * (1.0 + BUDGET_TOL) {
        feasible = false;
    }
    let stationarity_spread = match (
        interior_ratio.iter().copied().reduce(f64::max),
        interior_ratio.iter().copied().reduce(f64::min),
    ) {
        (Some(hi), Some(lo)) => hi / lo - 1.0,
        _ => 0.0,
    };
    let level = water.first().copied();
    let budget_slack = (budget - used) / budget;

    let mut complementarity = true;
    for &q in &coded {
        let (lo, hi) = seg.range(q);
        let (w, pi) = ((hi - lo) as f64, model.mass(lo, hi));
        let upper = cfg.upper_redundancy(pi);
        let slope = (pi / w).sqrt();
        match (alloc.labels[q], level) {
            (ActiveLabel::Lower, Some(t)) => complementarity &= slope * t <= 1.0 + 1e-9,
            (ActiveLabel::Upper, Some(t)) => complementarity &= slope * t >= upper * (1.0 - 1e-9),
            // without an interior set the budget multiplier is zero unless
            // the budget binds, so every part must sit at its cap
            (ActiveLabel::Lower, None) => {
                complementarity &= budget_slack <= BUDGET_TOL || upper <= 1.0 + FEASIBILITY_TOL
            }
            _ => {}
        }
    }

    let mut ordering = true;
    for &a in &coded {
        for &b in &coded {
            let capped = alloc.labels[a] == ActiveLabel::Upper;
            if !capped
                && density(model, seg, a) > density(model, seg, b)
                && alloc.levels[a] < alloc.levels[b] * (1.0 - 1e-12)
            {
                ordering = false;
            }
        }
    }

    KktCertificate {
        stationarity_spread,
        budget_slack,
        has_interior: !interior_ratio.is_empty(),
        complementarity,
        ordering,
        feasible,
    }
}

fn density(model: &PopularityModel, seg: &Segmentation, q: usize) -> f64 {
    let (lo, hi) = seg.range(q);
    model.mass(lo, hi) / (hi - lo) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::solve_allocation;

    fn cert(k: usize, alpha: f64, b: Vec<usize>) -> KktCertificate {
        let cfg = SystemConfig::scenario_one(k).unwrap();
        let m = PopularityModel::zipf(6000, alpha).unwrap();
        let seg = Segmentation::new(6000, b).unwrap();
        let alloc = solve_allocation(&cfg, &m, &seg).unwrap();
        certify(&cfg, &m, &seg, &alloc)
    }

    #[test]
    fn optimum_certifies() {
        for (k, a, b) in [
            (500, 0.4, vec![0, 1923, 6000]),
            (2000, 1.0, vec![0, 157, 1278, 6000]),
            (300, 0.0, vec![6000]),
            (1000, 1.6, vec![5, 6000]),
        ] {
            let c = cert(k, a, b.clone());
            assert!(c.holds(), "{b:?}: {c:?}");
        }
    }

    #[test]
    fn perturbed_levels_fail() {
        let cfg = SystemConfig::scenario_one(500).unwrap();
        let m = PopularityModel::zipf(6000, 0.4).unwrap();
        let seg = Segmentation::new(6000, vec![0, 1923, 6000]).unwrap();
        let mut alloc = solve_allocation(&cfg, &m, &seg).unwrap();
        alloc.levels[1] *= 1.01;
        let c = certify(&cfg, &m, &seg, &alloc);
        assert!(!c.holds(), "{c:?} {alloc:?}");
        alloc.levels[1] /= 1.01;
        alloc.levels[2] *= 0.99;
        let c = certify(&cfg, &m, &seg, &alloc);
        assert!(c.budget_slack > BUDGET_TOL && !c.holds());
    }
}
