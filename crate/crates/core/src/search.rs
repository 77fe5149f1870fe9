//! Boundary search for a fixed number of sub-libraries and the outer scan
//! over that number.
//!
//! Boundaries are optimized one coordinate at a time, outermost first. Every
//! candidate value of `n_q` is scored by the best delay reachable with the
//! remaining boundaries optimized recursively, and the candidate range is
//! narrowed by a discrete unimodal search (see [`SearchRule`]). Each coordinate's range is first narrowed to
//! the values that leave every coded sub-library (the current one and all
//! later ones) enough demand to satisfy `U_q >= 1`. Without that step the
//! objective is infinite on both flanks of the feasible window and the
//! search has no slope to follow.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kkt::{self, Part};
use crate::model::{uniform_delay, PopularityModel, Segmentation, Solution, SystemConfig};

/// Default cap on the number of sub-libraries tried by [`optimize_all`].
pub const DEFAULT_MAX_SUBLIBRARIES: usize = 8;

/// Relative slack under which two delays count as equal.
pub const DELAY_TIE_TOL: f64 = 1e-12;

/// How a coordinate's candidate interval is shrunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchRule {
    /// Fibonacci bracketing: one new evaluation per step, exact on
    /// discrete-unimodal functions.
    Fibonacci,
    /// Start from the coordinate's previous optimum, walk downhill with
    /// doubling steps and finish with Fibonacci bracketing. Exact on
    /// discrete-unimodal functions and much cheaper when neighbouring
    /// prefixes have nearby optima.
    #[default]
    Warm,
    /// Compare the objective at the midpoint and its right neighbour and keep
    /// the half that holds the minimum of a discrete-convex function.
    Bisection,
    /// Score both interval endpoints, then keep the better endpoint together
    /// with the rounded midpoint.
    Endpoint,
}

/// Fibonacci numbers `F_1 = F_2 = 1, ...` up to well past any library size.
const FIBONACCI: [usize; 64] = {
    let mut f = [1usize; 64];
    let mut i = 2;
    while i < 64 {
        f[i] = f[i - 1].saturating_add(f[i - 2]);
        i += 1;
    }
    f
};

/// Whether the demand-driven cap `L_q <= U_q` takes part in the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperBound {
    #[default]
    Enforced,
    /// Drop `U_q` entirely (redundancy only bounded below by 1).
    Relaxed,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SearchOptions {
    pub rule: SearchRule,
    pub upper: UpperBound,
}

/// Best boundaries for one sub-library count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySearch {
    pub segmentation: Segmentation,
    pub delay: f64,
    /// Distinct objective evaluations spent.
    pub evaluations: usize,
}

/// Per-`Q` record of the outer scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QRecord {
    pub sublibraries: usize,
    pub boundaries: Option<Vec<usize>>,
    pub delay: Option<f64>,
    pub evaluations: usize,
}

/// Diagnostics of a full optimization run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchTrace {
    pub evaluations: usize,
    pub best_per_q: Vec<QRecord>,
    pub q_star: usize,
}

/// Delay of the boundary vector `n` (with `n_Q = N`) optimized over the
/// redundancies, `+inf` when no allocation is feasible.
pub fn segment_delay(
    cfg: &SystemConfig,
    model: &PopularityModel,
    boundaries: &[usize],
    upper: UpperBound,
) -> f64 {
    Evaluator::default().delay(cfg, model, boundaries, upper)
}

#[derive(Debug, Default)]
struct Evaluator {
    parts: Vec<Part>,
    ws: kkt::Workspace,
}

impl Evaluator {
    fn delay(
        &mut self,
        cfg: &SystemConfig,
        model: &PopularityModel,
        boundaries: &[usize],
        upper: UpperBound,
    ) -> f64 {
        if boundaries.len() == 1 {
            return uniform_delay(cfg);
        }
        self.parts.clear();
        self.parts.extend(boundaries.windows(2).map(|w| Part {
            mass: model.mass(w[0], w[1]),
            width: w[1] - w[0],
        }));
        let enforce = upper == UpperBound::Enforced;
        kkt::delay_in(&mut self.ws, cfg, boundaries[0], &self.parts, enforce)
            .unwrap_or(f64::INFINITY)
    }
}

/// Feasibility windows for the coordinates of `n`.
struct Windows {
    n: usize,
    /// `suffix_start[k]`: largest `s` such that files `s+1..=N` split into
    /// `k` feasible coded sub-libraries.
    suffix_start: Vec<Option<usize>>,
}

impl Windows {
    fn new(cfg: &SystemConfig, model: &PopularityModel, q: usize, upper: UpperBound) -> Self {
        let n = model.len();
        let mut suffix_start = vec![Some(n)];
        for k in 1..q {
            let next = suffix_start[k - 1].and_then(|end| {
                // feasible(s, end) holds for small s; find the last such s
                let count = (0..end).len();
                let first_bad = partition_point(count, |s| feasible(cfg, model, upper, s, end));
                first_bad.checked_sub(1)
            });
            suffix_start.push(next);
        }
        Windows { n, suffix_start }
    }

    /// Smallest end `e > start` with the block `(start, e]` feasible.
    fn min_end(
        &self,
        cfg: &SystemConfig,
        model: &PopularityModel,
        upper: UpperBound,
        start: usize,
    ) -> Option<usize> {
        let span = self.n - start;
        // feasible(start, start + 1 + i) is monotone in i
        let first_ok = partition_point(span, |i| !feasible(cfg, model, upper, start, start + 1 + i));
        (first_ok < span).then_some(start + 1 + first_ok)
    }
}

fn feasible(cfg: &SystemConfig, model: &PopularityModel, upper: UpperBound, lo: usize, hi: usize) -> bool {
    match upper {
        UpperBound::Relaxed => hi > lo,
        UpperBound::Enforced => hi > lo && cfg.upper_redundancy(model.mass(lo, hi)) >= 1.0,
    }
}

/// First index in `0..len` where `pred` turns false.
fn partition_point(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

struct Engine<'a> {
    cfg: &'a SystemConfig,
    model: &'a PopularityModel,
    q: usize,
    options: SearchOptions,
    windows: Windows,
    evaluator: Evaluator,
    evaluations: usize,
    /// Last optimum of each coordinate, the starting point of [`SearchRule::Warm`].
    hints: Vec<Option<usize>>,
}

impl Engine<'_> {
    fn window(&self, prefix: &[usize]) -> Option<(usize, usize)> {
        let c = prefix.len();
        let n = self.windows.n;
        let remaining = self.q - 1 - c;
        let mut hi = (n + c + 1).checked_sub(self.q)?;
        hi = hi.min(self.windows.suffix_start[remaining]?);
        let lo = if c == 0 {
            0
        } else {
            let start = prefix[c - 1];
            self.windows
                .min_end(self.cfg, self.model, self.options.upper, start)?
        };
        (lo <= hi).then_some((lo, hi))
    }

    /// Objective at `n_c = x` with the later boundaries optimized; memoized
    /// in `seen`, which belongs to one coordinate search.
    fn score(&mut self, prefix: &mut Vec<usize>, seen: &mut Seen, hi: usize, x: usize) -> f64 {
        if x > hi {
            return f64::INFINITY;
        }
        if let Some(hit) = seen.iter().find(|e| e.0 == x) {
            return hit.1;
        }
        prefix.push(x);
        let (d, tail) = self.complete(prefix);
        prefix.pop();
        seen.push((x, d, tail));
        d
    }

    /// Fibonacci bracketing of `[lo, hi]`: bracket `[a, a + F_k]` with probes
    /// at `a + F_{k-2}` and `a + F_{k-1}`; points past `hi` score `+inf`.
    fn fibonacci(&mut self, prefix: &mut Vec<usize>, seen: &mut Seen, lo: usize, hi: usize) -> usize {
        let fib = &FIBONACCI;
        let mut a = lo;
        let mut k = fib.partition_point(|&f| f < hi - lo + 1);
        while k >= 3 {
            let (x1, x2) = (a + fib[k - 2], a + fib[k - 1]);
            let f1 = self.score(prefix, seen, hi, x1);
            let f2 = self.score(prefix, seen, hi, x2);
            if f1 > f2 {
                a = x1;
            }
            k -= 1;
        }
        let mut best = (self.score(prefix, seen, hi, a), a);
        for x in a + 1..=(a + fib[k]).min(hi) {
            let f = self.score(prefix, seen, hi, x);
            if f < best.0 {
                best = (f, x);
            }
        }
        best.1
    }

    /// Walks downhill from `start` with doubling steps, then brackets.
    fn warm(&mut self, prefix: &mut Vec<usize>, seen: &mut Seen, lo: usize, hi: usize, start: usize) -> usize {
        let f0 = self.score(prefix, seen, hi, start);
        let right = start < hi && self.score(prefix, seen, hi, start + 1) < f0;
        let left = !right && start > lo && self.score(prefix, seen, hi, start - 1) < f0;
        if !right && !left {
            return start;
        }
        // (behind, here): last two points of a strictly decreasing run
        let (mut behind, mut here, mut step) = (start, if right { start + 1 } else { start - 1 }, 2);
        let mut f_here = self.score(prefix, seen, hi, here);
        loop {
            let next = if right {
                (here + step).min(hi)
            } else {
                here.saturating_sub(step).max(lo)
            };
            if next == here {
                break;
            }
            let f_next = self.score(prefix, seen, hi, next);
            if f_next >= f_here {
                let (a, b) = if right { (behind, next) } else { (next, behind) };
                return self.fibonacci(prefix, seen, a, b);
            }
            (behind, here, f_here) = (here, next, f_next);
            step *= 2;
        }
        let (a, b) = if right { (behind, here) } else { (here, behind) };
        self.fibonacci(prefix, seen, a, b)
    }

    /// Best delay reachable from `prefix` and the optimal remaining boundaries.
    fn complete(&mut self, prefix: &mut Vec<usize>) -> (f64, Vec<usize>) {
        let depth = prefix.len();
        if depth == self.q - 1 {
            self.evaluations += 1;
            prefix.push(self.windows.n);
            let d = self
                .evaluator
                .delay(self.cfg, self.model, prefix, self.options.upper);
            prefix.pop();
            return (d, Vec::new());
        }
        let Some((lo, hi)) = self.window(prefix) else {
            return (f64::INFINITY, Vec::new());
        };
        // completions depend on the whole prefix, so results are only reused
        // within this coordinate's search
        let mut seen = Seen::new();
        let best = match self.options.rule {
            SearchRule::Warm => {
                let start = self.hints[depth].unwrap_or(lo + (hi - lo) / 2).clamp(lo, hi);
                self.warm(prefix, &mut seen, lo, hi, start)
            }
            SearchRule::Fibonacci => self.fibonacci(prefix, &mut seen, lo, hi),
            SearchRule::Bisection => {
                let (mut l, mut h) = (lo, hi);
                while l < h {
                    let m = l + (h - l) / 2;
                    if self.score(prefix, &mut seen, hi, m) <= self.score(prefix, &mut seen, hi, m + 1) {
                        h = m;
                    } else {
                        l = m + 1;
                    }
                }
                l
            }
            SearchRule::Endpoint => {
                let (mut a, mut b) = (lo, hi);
                loop {
                    if a == b {
                        break a;
                    }
                    let ta = self.score(prefix, &mut seen, hi, a);
                    let tb = self.score(prefix, &mut seen, hi, b);
                    let better = if ta <= tb { a } else { b };
                    if b - a == 1 {
                        break better;
                    }
                    let mid = (a + b).div_ceil(2);
                    (a, b) = (mid.min(better), mid.max(better));
                }
            }
        };
        self.score(prefix, &mut seen, hi, best);
        self.hints[depth] = Some(best);
        let at = seen.iter().position(|e| e.0 == best).expect("scored above");
        let (_, d, rest) = seen.swap_remove(at);
        let mut tail = Vec::with_capacity(rest.len() + 1);
        tail.push(best);
        tail.extend(rest);
        (d, tail)
    }
}

type Seen = Vec<(usize, f64, Vec<usize>)>;

/// Optimal boundaries for exactly `q` sub-libraries.
pub fn optimize_boundaries(
    cfg: &SystemConfig,
    model: &PopularityModel,
    q: usize,
) -> Result<BoundarySearch> {
    optimize_boundaries_with(cfg, model, q, SearchOptions::default())
}

pub fn optimize_boundaries_with(
    cfg: &SystemConfig,
    model: &PopularityModel,
    q: usize,
    options: SearchOptions,
) -> Result<BoundarySearch> {
    let n = model.len();
    if n != cfg.files {
        return Err(Error::InvalidParameter(format!(
            "model has {n} files, config {}",
            cfg.files
        )));
    }
    if q == 0 || q > n {
        return Err(Error::InvalidParameter(format!(
            "sub-library count must lie in [1, N = {n}], got {q}"
        )));
    }
    if q == 1 {
        return Ok(BoundarySearch {
            segmentation: Segmentation::uniform(n),
            delay: uniform_delay(cfg),
            evaluations: 1,
        });
    }
    let mut engine = Engine {
        cfg,
        model,
        q,
        options,
        windows: Windows::new(cfg, model, q, options.upper),
        evaluator: Evaluator::default(),
        evaluations: 0,
        hints: vec![None; q],
    };
    let (delay, mut boundaries) = engine.complete(&mut Vec::new());
    if !delay.is_finite() {
        return Err(Error::Infeasible(format!(
            "no segmentation into {q} sub-libraries satisfies U_q >= 1"
        )));
    }
    boundaries.push(n);
    Ok(BoundarySearch {
        segmentation: Segmentation::new(n, boundaries)?,
        delay,
        evaluations: engine.evaluations,
    })
}

/// `true` when `a` is smaller than `b` by more than rounding noise.
pub fn strictly_less(a: f64, b: f64) -> bool {
    a < b - DELAY_TIE_TOL * b.abs().max(a.abs())
}

/// Full optimization: scans `Q = 1, 2, ...` up to `max_sublibraries`,
/// stopping once the per-`Q` optimum increases (for `Q >= 3`: stops
/// decreasing).
pub fn optimize_all(
    cfg: &SystemConfig,
    model: &PopularityModel,
    max_sublibraries: usize,
) -> Result<(Solution, SearchTrace)> {
    optimize_all_with(cfg, model, max_sublibraries, SearchOptions::default())
}

pub fn optimize_all_with(
    cfg: &SystemConfig,
    model: &PopularityModel,
    max_sublibraries: usize,
    options: SearchOptions,
) -> Result<(Solution, SearchTrace)> {
    cfg.validate()?;
    let cap = max_sublibraries.clamp(1, model.len());
    let mut records = Vec::new();
    let mut best: Option<BoundarySearch> = None;
    let mut previous = f64::INFINITY;
    let mut evaluations = 0;
    for q in 1..=cap {
        let found = match optimize_boundaries_with(cfg, model, q, options) {
            Ok(found) => Some(found),
            Err(Error::Infeasible(_)) => None,
            Err(e) => return Err(e),
        };
        let delay = found.as_ref().map_or(f64::INFINITY, |f| f.delay);
        let spent = found.as_ref().map_or(0, |f| f.evaluations);
        evaluations += spent;
        records.push(QRecord {
            sublibraries: q,
            boundaries: found.as_ref().map(|f| f.segmentation.boundaries().to_vec()),
            delay: found.as_ref().map(|f| f.delay),
            evaluations: spent,
        });
        if let Some(found) = found {
            if best.as_ref().is_none_or(|b| strictly_less(found.delay, b.delay)) {
                best = Some(found);
            }
        }
        // [0, N] reproduces the uniform placement, so Q = 2 may tie Q = 1;
        // from Q = 3 on a tie is already the flat end of the curve
        let stalled = if q >= 3 {
            !strictly_less(delay, previous)
        } else {
            q == 2 && strictly_less(previous, delay)
        };
        if stalled {
            break;
        }
        previous = delay;
    }
    let best = best.expect("Q = 1 is always feasible");
    let allocation = match options.upper {
        UpperBound::Enforced => kkt::solve_allocation(cfg, model, &best.segmentation)?,
        UpperBound::Relaxed => {
            return Err(Error::InvalidParameter(
                "a full solution needs the upper redundancy bound".into(),
            ))
        }
    };
    let q_star = best.segmentation.len();
    let solution = Solution::new(cfg, model, best.segmentation, allocation)?;
    Ok((
        solution,
        SearchTrace {
            evaluations,
            best_per_q: records,
            q_star,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (SystemConfig, PopularityModel) {
        let cfg = SystemConfig::new(8, 40, 4, 0.25, 0.5, 4, 100).unwrap();
        (cfg, PopularityModel::zipf(8, 1.0).unwrap())
    }

    #[test]
    fn single_sublibrary_is_uniform() {
        let (cfg, m) = toy();
        let r = optimize_boundaries(&cfg, &m, 1).unwrap();
        assert_eq!(r.segmentation.boundaries(), &[8]);
        assert_eq!(r.delay, uniform_delay(&cfg));
    }

    #[test]
    fn rejects_bad_counts() {
        let (cfg, m) = toy();
        assert!(optimize_boundaries(&cfg, &m, 0).is_err());
        assert!(matches!(
            optimize_boundaries(&cfg, &m, 9),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn toy_matches_enumeration() {
        let (cfg, m) = toy();
        let r = optimize_boundaries(&cfg, &m, 2).unwrap();
        let mut best = (f64::INFINITY, 0);
        for n1 in 0..8 {
            let d = segment_delay(&cfg, &m, &[n1, 8], UpperBound::Enforced);
            if d < best.0 {
                best = (d, n1);
            }
        }
        assert_eq!(r.segmentation.boundaries(), &[best.1, 8]);
        assert_eq!(r.delay, best.0);
    }

    #[test]
    fn windows_exclude_starved_blocks() {
        let cfg = SystemConfig::scenario_one(300).unwrap();
        let m = PopularityModel::zipf(6000, 1.0).unwrap();
        let w = Windows::new(&cfg, &m, 3, UpperBound::Enforced);
        let s1 = w.suffix_start[1].unwrap();
        assert!(cfg.upper_redundancy(m.mass(s1, 6000)) >= 1.0);
        assert!(cfg.upper_redundancy(m.mass(s1 + 1, 6000)) < 1.0);
        let e = w.min_end(&cfg, &m, UpperBound::Enforced, 0).unwrap();
        assert!(cfg.upper_redundancy(m.mass(0, e)) >= 1.0);
        assert!(e == 1 || cfg.upper_redundancy(m.mass(0, e - 1)) < 1.0);
    }

    #[test]
    fn uniform_popularity_keeps_one_sublibrary() {
        let cfg = SystemConfig::scenario_one(300).unwrap();
        let m = PopularityModel::zipf(6000, 0.0).unwrap();
        let (sol, trace) = optimize_all(&cfg, &m, DEFAULT_MAX_SUBLIBRARIES).unwrap();
        assert_eq!(trace.q_star, 1);
        assert_eq!(sol.gain, 1.0);
    }
}
