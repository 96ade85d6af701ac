//! Certified approximate Moreau–Yosida evaluation
//! Y_τf(u) = inf_v { f(v) + d²(v,u)/(2τ) } and the relaxed minimization step.
//!
//! The inner solver is a coarse uniform grid over the certified search ball
//! followed by golden-section refinement of the best brackets. Oscillatory
//! functionals have O(R/ε) local minima in the ball, so a descent method alone
//! would be trapped; the scheme needs near-global minimization. When the
//! requested feature scale is finer than the coarse grid can afford over the
//! whole ball, a second grid at the feature scale is laid over the empirical
//! sublevel hull of the coarse pass (any near-optimal point must lie there, up
//! to the coarse sampling error).

use crate::types::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Result of an approximate proximal evaluation. `value` is the achieved
/// objective f(v) + d²(v,u)/(2τ), an upper bound on the true infimum;
/// `certified_gap` bounds the suboptimality value − Y_τf(u).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxResult {
    pub minimizer: Point,
    pub value: f64,
    pub certified_gap: f64,
}

/// Tuning of the inner grid solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerSolverConfig {
    /// Sample budget for a single uniform grid stage.
    pub coarse_grid_points: usize,
    /// Golden-section iterations per refined bracket.
    pub refine_iterations: usize,
    /// Coordinate-descent sweeps for dimension > 1.
    pub refine_sweeps: usize,
    /// Finest oscillation scale of the objective; for a wavelength-ε
    /// oscillation set ≤ ε/4 so every well is sampled.
    pub min_feature_scale: Option<f64>,
}

impl Default for InnerSolverConfig {
    fn default() -> InnerSolverConfig {
        InnerSolverConfig {
            coarse_grid_points: 4096,
            refine_iterations: 60,
            refine_sweeps: 8,
            min_feature_scale: None,
        }
    }
}

/// Outcome of validating one relaxed step against a proximal oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepVerdict {
    Holds,
    Fails,
    /// The step exceeds the oracle value by more than the budget but stays
    /// within the oracle's certified gap; the reported number is the
    /// indeterminacy lhs − (oracle value + budget).
    Uncertain { gap: f64 },
}

// Grid evaluation goes parallel above this size.
const PAR_GRID_THRESHOLD: usize = 16_384;
// Number of best brackets refined by golden section.
const REFINE_TOP_BRACKETS: usize = 8;
// Grid size of one axis pass in coordinate descent (dimension > 1).
const SWEEP_GRID_POINTS: usize = 1024;
// Phase-1 cap when a feature-scale zoom stage follows; the configured budget
// is then spent on the zoom grid.
const ZOOM_PHASE1_POINTS: usize = 4096;

struct Objective1d<'a> {
    f: &'a Functional,
    u: f64,
    inv_two_tau: f64,
}

impl Objective1d<'_> {
    #[inline]
    fn eval(&self, x: f64, scratch: &mut Point) -> f64 {
        scratch.set(0, x);
        let fx = self.f.evaluate(scratch).as_f64();
        fx + (x - self.u) * (x - self.u) * self.inv_two_tau
    }

    fn slope_bound(&self, x: f64) -> Option<f64> {
        let p = Point::scalar(x);
        self.f
            .derivative(&p)
            .map(|g| g.coords()[0].abs() + (x - self.u).abs() * 2.0 * self.inv_two_tau)
    }
}

fn scratch_point(dim: usize) -> Point {
    Point::new(vec![0.0; dim]).expect("zero point")
}

/// Evaluates the 1d objective on the uniform grid lo + i·h, i = 0..n.
fn grid_values(obj: &Objective1d, lo: f64, h: f64, n: usize) -> Vec<f64> {
    if n >= PAR_GRID_THRESHOLD {
        let mut values = vec![0.0f64; n];
        let chunk = 4096;
        values
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(ci, slice)| {
                let mut scratch = scratch_point(1);
                for (k, v) in slice.iter_mut().enumerate() {
                    let i = ci * chunk + k;
                    *v = obj.eval(lo + i as f64 * h, &mut scratch);
                }
            });
        values
    } else {
        let mut scratch = scratch_point(1);
        (0..n).map(|i| obj.eval(lo + i as f64 * h, &mut scratch)).collect()
    }
}

fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

struct GoldenOutcome {
    x: f64,
    value: f64,
    bracket: (f64, f64),
}

fn golden_refine(obj: &Objective1d, mut a: f64, mut b: f64, iters: usize) -> GoldenOutcome {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut scratch = scratch_point(1);
    let mut best = (a, obj.eval(a, &mut scratch));
    let vb = obj.eval(b, &mut scratch);
    if vb < best.1 {
        best = (b, vb);
    }
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = obj.eval(c, &mut scratch);
    let mut fd = obj.eval(d, &mut scratch);
    for _ in 0..iters {
        if b - a <= f64::EPSILON * (a.abs() + b.abs() + 1.0) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = obj.eval(c, &mut scratch);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = obj.eval(d, &mut scratch);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v.is_finite() && (v < best.1 || (v == best.1 && x < best.0)) {
            best = (x, v);
        }
    }
    GoldenOutcome { x: best.0, value: best.1, bracket: (a, b) }
}

/// Indices of up to `k` best local minima of the grid values (endpoints
/// included), mutually non-adjacent, ordered deterministically by value then
/// index.
fn best_bracket_centers(values: &[f64], k: usize) -> Vec<usize> {
    let n = values.len();
    let mut centers: Vec<usize> = (0..n)
        .filter(|&i| {
            values[i].is_finite()
                && (i == 0 || values[i] <= values[i - 1])
                && (i + 1 == n || values[i] <= values[i + 1])
        })
        .collect();
    centers.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap().then(i.cmp(&j)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in centers {
        if chosen.len() >= k {
            break;
        }
        if chosen.iter().all(|&c| c.abs_diff(i) > 2) {
            chosen.push(i);
        }
    }
    chosen
}

fn solve_lattice(
    f: &Functional,
    lattice: &Lattice,
    tau: f64,
    u: &Point,
    lo: f64,
    hi: f64,
    fu: f64,
) -> Result<ProxResult> {
    let ux = u.x();
    let obj = Objective1d { f, u: ux, inv_two_tau: 1.0 / (2.0 * tau) };
    let mut scratch = scratch_point(1);
    let lo = lo.max(-lattice.box_radius);
    let hi = hi.min(lattice.box_radius);
    let k_lo = ((lo - lattice.offset) / lattice.spacing).ceil() as i64;
    let k_hi = ((hi - lattice.offset) / lattice.spacing).floor() as i64;
    // The previous iterate is always admissible (it may itself be a lattice
    // point, but even off-lattice callers get the value-vs-f(u) guarantee).
    let mut best = (ux, fu);
    for k in k_lo..=k_hi {
        let x = lattice.offset + k as f64 * lattice.spacing;
        let v = obj.eval(x, &mut scratch);
        if v.is_finite() && (v < best.1 || (v == best.1 && x < best.0)) {
            best = (x, v);
        }
    }
    // The feasible set inside the ball was enumerated exhaustively.
    Ok(ProxResult {
        minimizer: Point::scalar(best.0),
        value: best.1,
        certified_gap: 0.0,
    })
}

fn solve_1d(
    f: &Functional,
    cert: &CoercivityCertificate,
    tau: f64,
    u: &Point,
    cfg: &InnerSolverConfig,
) -> Result<ProxResult> {
    let fu = f.value(u)?;
    let r = prox_search_radius(f, cert, tau, u)?;
    let ux = u.x();
    let (hint, _) = f.domain_hint_or_default(1);
    let lo = (ux - r).max(hint.lower[0]);
    let hi = (ux + r).min(hint.upper[0]);

    if let Some(lattice) = &f.lattice {
        return solve_lattice(f, lattice, tau, u, lo, hi, fu);
    }

    let obj = Objective1d { f, u: ux, inv_two_tau: 1.0 / (2.0 * tau) };

    if !(hi > lo) {
        return Ok(ProxResult { minimizer: u.clone(), value: fu, certified_gap: 0.0 });
    }

    let budget = cfg.coarse_grid_points.max(2);
    let full_spacing = (hi - lo) / (budget - 1) as f64;
    let zoom = matches!(cfg.min_feature_scale, Some(s) if full_spacing > s);

    let n1 = if zoom { budget.min(ZOOM_PHASE1_POINTS) } else { budget };
    let h1 = (hi - lo) / (n1 - 1) as f64;
    let v1 = grid_values(&obj, lo, h1, n1);

    let (grid_lo, grid_h, values) = if zoom {
        let s = cfg.min_feature_scale.unwrap();
        let Some(best1) = argmin(&v1) else {
            // Nothing finite on the coarse grid; fall back to the previous
            // iterate, which is always admissible.
            return Ok(ProxResult { minimizer: u.clone(), value: fu, certified_gap: 0.0 });
        };
        let min1 = v1[best1];
        let slack = v1
            .windows(2)
            .filter(|w| w[0].is_finite() && w[1].is_finite())
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f64, f64::max);
        let thr = min1 + slack;
        let mut first = best1;
        let mut last = best1;
        for (i, &v) in v1.iter().enumerate() {
            if v.is_finite() && v <= thr {
                first = first.min(i);
                last = last.max(i);
            }
        }
        let lo2 = (lo + first as f64 * h1 - h1).max(lo);
        let hi2 = (lo + last as f64 * h1 + h1).min(hi);
        let n2 = ((hi2 - lo2) / s).ceil() as usize + 2;
        if n2 > budget {
            return Err(Error::GridTooCoarse {
                feature_scale: s,
                width: hi2 - lo2,
                needed: n2,
                budget,
            });
        }
        let n2 = n2.max(33);
        let h2 = (hi2 - lo2) / (n2 - 1) as f64;
        (lo2, h2, grid_values(&obj, lo2, h2, n2))
    } else {
        (lo, h1, v1)
    };

    // Golden-section refinement of the best brackets of the final grid.
    let centers = best_bracket_centers(&values, REFINE_TOP_BRACKETS);
    let n = values.len();
    let mut best: Option<(f64, f64, (f64, f64))> = None; // (x, value, bracket)
    for &i in &centers {
        let a = if i == 0 { grid_lo } else { grid_lo + (i - 1) as f64 * grid_h };
        let b = if i + 1 >= n { grid_lo + (n - 1) as f64 * grid_h } else { grid_lo + (i + 1) as f64 * grid_h };
        let out = golden_refine(&obj, a, b, cfg.refine_iterations);
        let better = match &best {
            None => true,
            Some((bx, bv, _)) => out.value < *bv || (out.value == *bv && out.x < *bx),
        };
        if better {
            best = Some((out.x, out.value, out.bracket));
        }
    }

    let (mut x_best, mut v_best, bracket) = match best {
        Some(b) => b,
        None => (ux, fu, (ux, ux)),
    };
    // The previous iterate is always an admissible candidate; this guarantees
    // value ≤ f(u) exactly and, downstream, exact energy quasi-monotonicity.
    if fu < v_best || (fu == v_best && ux < x_best) {
        x_best = ux;
        v_best = fu;
    }

    let (ba, bb) = bracket;
    let w = (bb - ba).max(0.0);
    let gap = match obj.slope_bound(x_best) {
        Some(_) => {
            let l = [ba, bb, x_best]
                .iter()
                .filter_map(|&x| obj.slope_bound(x))
                .fold(0.0f64, f64::max);
            // Factor 2 absorbs slope variation inside the final bracket.
            2.0 * l * w + w * w * obj.inv_two_tau
        }
        None => {
            let mut scratch = scratch_point(1);
            let va = obj.eval(ba, &mut scratch);
            let vb = obj.eval(bb, &mut scratch);
            va.max(vb).min(f64::MAX) - v_best
        }
    };
    let gap = gap.max(0.0) + 1e-14 * (1.0 + v_best.abs());

    Ok(ProxResult {
        minimizer: Point::scalar(x_best),
        value: v_best,
        certified_gap: gap,
    })
}

fn solve_nd(
    f: &Functional,
    cert: &CoercivityCertificate,
    tau: f64,
    u: &Point,
    cfg: &InnerSolverConfig,
) -> Result<ProxResult> {
    let fu = f.value(u)?;
    let r = prox_search_radius(f, cert, tau, u)?;
    let dim = u.dim();
    let (hint, _) = f.domain_hint_or_default(dim);
    let inv_two_tau = 1.0 / (2.0 * tau);

    let mut current: Vec<f64> = u.coords().to_vec();
    let mut scratch = scratch_point(dim);
    let eval_at = |coords: &[f64], scratch: &mut Point| {
        for (i, &c) in coords.iter().enumerate() {
            scratch.set(i, c);
        }
        let fx = f.evaluate(scratch).as_f64();
        let d2: f64 = coords
            .iter()
            .zip(u.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        fx + d2 * inv_two_tau
    };
    let mut value = fu;
    let mut last_spread = 0.0f64;
    for _ in 0..cfg.refine_sweeps {
        for axis in 0..dim {
            let lo = (u.coords()[axis] - r).max(hint.lower[axis]);
            let hi = (u.coords()[axis] + r).min(hint.upper[axis]);
            if !(hi > lo) {
                continue;
            }
            let n = SWEEP_GRID_POINTS;
            let h = (hi - lo) / (n - 1) as f64;
            let mut best = (current[axis], value);
            let mut coords = current.clone();
            for i in 0..n {
                let x = lo + i as f64 * h;
                coords[axis] = x;
                let v = eval_at(&coords, &mut scratch);
                if v.is_finite() && (v < best.1 || (v == best.1 && x < best.0)) {
                    best = (x, v);
                }
            }
            // Golden refinement along the axis around the best sample.
            let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
            const INVPHI: f64 = 0.618_033_988_749_894_9;
            let mut c = b - INVPHI * (b - a);
            let mut d = a + INVPHI * (b - a);
            coords[axis] = c;
            let mut fc = eval_at(&coords, &mut scratch);
            coords[axis] = d;
            let mut fd = eval_at(&coords, &mut scratch);
            for _ in 0..cfg.refine_iterations {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - INVPHI * (b - a);
                    coords[axis] = c;
                    fc = eval_at(&coords, &mut scratch);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + INVPHI * (b - a);
                    coords[axis] = d;
                    fd = eval_at(&coords, &mut scratch);
                }
            }
            for (x, v) in [(c, fc), (d, fd)] {
                if v.is_finite() && (v < best.1 || (v == best.1 && x < best.0)) {
                    best = (x, v);
                }
            }
            current[axis] = best.0;
            last_spread = (value - best.1).abs();
            value = best.1;
        }
    }
    let gap = last_spread.max(0.0) + 1e-12 * (1.0 + value.abs());
    Ok(ProxResult {
        minimizer: Point::new(current)?,
        value,
        certified_gap: gap,
    })
}

/// Approximate Moreau–Yosida evaluation at u: returns an achieved objective
/// value (≥ the true infimum, ≤ f(u)), the achieving point and a certified
/// suboptimality gap. Ties are broken toward lexicographically smallest
/// coordinates; repeated calls are bit-identical.
pub fn moreau_yosida(
    f: &Functional,
    cert: &CoercivityCertificate,
    tau: f64,
    u: &Point,
    cfg: &InnerSolverConfig,
) -> Result<ProxResult> {
    if u.dim() == 1 {
        solve_1d(f, cert, tau, u, cfg)
    } else {
        solve_nd(f, cert, tau, u, cfg)
    }
}

/// One relaxed minimization step from `u_prev`, with full solver output. The
/// returned result's certified gap is guaranteed ≤ `error_budget`, so the
/// relaxed step inequality with right side Y_τf(u_prev) + error_budget holds
/// for the returned minimizer.
pub fn relaxed_step_result(
    f: &Functional,
    cert: &CoercivityCertificate,
    tau: f64,
    u_prev: &Point,
    error_budget: f64,
    cfg: &InnerSolverConfig,
) -> Result<ProxResult> {
    assert!(error_budget > 0.0, "error budget must be positive");
    let res = moreau_yosida(f, cert, tau, u_prev, cfg)?;
    if res.certified_gap > error_budget {
        return Err(Error::BudgetTooTight { gap: res.certified_gap, budget: error_budget });
    }
    Ok(res)
}

/// One relaxed minimization step from `u_prev`.
pub fn relaxed_step(
    f: &Functional,
    cert: &CoercivityCertificate,
    tau: f64,
    u_prev: &Point,
    error_budget: f64,
    cfg: &InnerSolverConfig,
) -> Result<Point> {
    relaxed_step_result(f, cert, tau, u_prev, error_budget, cfg).map(|r| r.minimizer)
}

/// Validates a proposed step v against a proximal oracle at u_prev:
/// `Holds` if f(v) + d²(v,u_prev)/(2τ) ≤ oracle value + budget, `Fails` if it
/// exceeds even oracle value + certified gap + budget, `Uncertain` in between.
pub fn check_relaxed_inequality(
    f: &Functional,
    tau: f64,
    u_prev: &Point,
    v: &Point,
    error_budget: f64,
    oracle: &ProxResult,
) -> Result<StepVerdict> {
    let fv = f.value(v)?;
    let d = v.distance(u_prev);
    let lhs = fv + d * d / (2.0 * tau);
    if lhs <= oracle.value + error_budget {
        Ok(StepVerdict::Holds)
    } else if lhs > oracle.value + oracle.certified_gap + error_budget {
        Ok(StepVerdict::Fails)
    } else {
        Ok(StepVerdict::Uncertain { gap: lhs - oracle.value - error_budget })
    }
}

/// Exhaustive uniform-grid oracle over the certified search ball (no
/// refinement). `resolution_bound` is an estimate of the oracle's own error,
/// spacing × max sampled slope bound.
pub struct OracleResult {
    pub result: ProxResult,
    pub spacing: f64,
    pub resolution_bound: f64,
}

pub fn exhaustive_prox_oracle(
    f: &Functional,
    cert: &CoercivityCertificate,
    tau: f64,
    u: &Point,
    points: usize,
) -> Result<OracleResult> {
    assert_eq!(u.dim(), 1, "oracle is one-dimensional");
    let fu = f.value(u)?;
    let r = prox_search_radius(f, cert, tau, u)?;
    let ux = u.x();
    let (hint, _) = f.domain_hint_or_default(1);
    let lo = (ux - r).max(hint.lower[0]);
    let hi = (ux + r).min(hint.upper[0]);
    let obj = Objective1d { f, u: ux, inv_two_tau: 1.0 / (2.0 * tau) };
    if !(hi > lo) {
        return Ok(OracleResult {
            result: ProxResult { minimizer: u.clone(), value: fu, certified_gap: 0.0 },
            spacing: 0.0,
            resolution_bound: 0.0,
        });
    }
    let n = points.max(2);
    let h = (hi - lo) / (n - 1) as f64;
    let values = grid_values(&obj, lo, h, n);
    let mut best = (ux, fu);
    let mut max_slope = 0.0f64;
    for (i, &v) in values.iter().enumerate() {
        let x = lo + i as f64 * h;
        if v.is_finite() && (v < best.1 || (v == best.1 && x < best.0)) {
            best = (x, v);
        }
        if let Some(s) = obj.slope_bound(x) {
            max_slope = max_slope.max(s);
        }
    }
    let resolution = if max_slope > 0.0 {
        max_slope * h
    } else {
        // No derivative available: fall back to the largest adjacent spread.
        values
            .windows(2)
            .filter(|w| w[0].is_finite() && w[1].is_finite())
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f64, f64::max)
    };
    Ok(OracleResult {
        result: ProxResult {
            minimizer: Point::scalar(best.0),
            value: best.1,
            certified_gap: resolution,
        },
        spacing: h,
        resolution_bound: resolution,
    })
}
