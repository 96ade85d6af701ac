//! The relaxed minimizing-movement driver: recovery of initial data, the step
//! loop, piecewise-constant interpolation, a-priori bounds and refinement over
//! a decreasing sequence of time steps.

use crate::prox::{relaxed_step_result, InnerSolverConfig};
use crate::types::*;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Discrete evolution at one time step τ with its coupled parameter ε(τ).
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub tau: f64,
    pub epsilon: f64,
    /// u⁰, the recovered initial point for this τ.
    pub initial: Point,
    /// uⁿ for n = 1..N with N = ceil(horizon/τ).
    pub values: Vec<Point>,
    pub horizon: f64,
    /// d(uⁿ, uⁿ⁻¹)/τ per step.
    pub step_speeds: Vec<f64>,
    /// Member energy φ_{ε(τ)}(uⁿ) per step.
    pub energies: Vec<f64>,
    /// φ_{ε(τ)}(u⁰).
    pub initial_energy: f64,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.values.len()
    }

    /// Index n with the interpolant equal to uⁿ at time t: 0 at t = 0, and n
    /// for t in ((n−1)τ, nτ], clamped to the last step.
    pub fn index_at(&self, t: f64) -> usize {
        assert!(t >= 0.0);
        if t == 0.0 {
            return 0;
        }
        ((t / self.tau).ceil() as usize).min(self.values.len())
    }

    /// Piecewise-constant interpolant.
    pub fn eval(&self, t: f64) -> &Point {
        match self.index_at(t) {
            0 => &self.initial,
            n => &self.values[n - 1],
        }
    }

    pub fn point(&self, n: usize) -> &Point {
        if n == 0 {
            &self.initial
        } else {
            &self.values[n - 1]
        }
    }

    pub fn final_point(&self) -> &Point {
        self.values.last().unwrap_or(&self.initial)
    }

    /// Σ d²(uʲ, uʲ⁻¹)/(2τ) over the whole trajectory.
    pub fn displacement_sum(&self) -> f64 {
        self.step_speeds
            .iter()
            .map(|&s| s * s * self.tau / 2.0)
            .sum()
    }

    /// Σ τ·|speed| over steps j with n_from < j ≤ n_to; dominates
    /// d(u^{n_from}, u^{n_to}) by the triangle inequality.
    pub fn path_length(&self, n_from: usize, n_to: usize) -> f64 {
        assert!(n_from <= n_to && n_to <= self.values.len());
        self.step_speeds[n_from..n_to]
            .iter()
            .map(|&s| s * self.tau)
            .sum()
    }
}

type InitialFn = dyn Fn(f64) -> Point + Send + Sync;

/// Well-prepared initial data: a map τ → u_τ⁰ approximating a limit point u⁰
/// with member energies converging to the limit energy.
#[derive(Clone)]
pub struct RecoveryData {
    initial_for: Arc<InitialFn>,
    pub limit_point: Point,
}

impl RecoveryData {
    pub fn new(limit_point: Point, initial_for: impl Fn(f64) -> Point + Send + Sync + 'static) -> RecoveryData {
        RecoveryData { initial_for: Arc::new(initial_for), limit_point }
    }

    /// u_τ⁰ = u⁰ for every τ; valid whenever member energies converge at u⁰.
    pub fn constant(u0: Point) -> RecoveryData {
        let point = u0.clone();
        RecoveryData::new(u0, move |_| point.clone())
    }

    pub fn initial_for(&self, tau: f64) -> Point {
        (self.initial_for)(tau)
    }
}

impl std::fmt::Debug for RecoveryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecoveryData")
            .field("limit_point", &self.limit_point)
            .finish()
    }
}

/// Explicit constant C with d²(u_τⁿ, u⋆) ≤ C for nτ ≤ horizon, from the
/// certificate constants, the recovered initial energy and the total error
/// budget. B = 0 uses the telescoped energy estimate; B > 0 the discrete
/// Gronwall chain with m = Bτ/2.
pub fn gronwall_bound(
    family: &FunctionalFamily,
    coupling: &CouplingSchedule,
    errors: &ErrorSchedule,
    recovery: &RecoveryData,
    tau: f64,
    horizon: f64,
) -> Result<f64> {
    let epsilon = coupling.epsilon(tau)?;
    let f = family.member(epsilon);
    let cert = &family.certificate;
    let u0 = recovery.initial_for(tau);
    let phi0 = f.value(&u0)?;
    let d0 = u0.distance(&cert.u_star);
    let n = (horizon / tau).ceil() as usize;
    let total_budget = errors.total_budget(tau, n);
    if cert.b == 0.0 {
        Ok(d0 * d0 + 2.0 * (phi0 + cert.a + total_budget).max(0.0))
    } else {
        if tau > 1.0 / cert.b {
            return Err(Error::TauTooLarge { tau, b: cert.b });
        }
        let m = cert.b * tau / 2.0;
        let a1 = 2.0 * d0 * d0 + (phi0 + cert.a + total_budget).max(0.0) / cert.b;
        let alpha = cert.b / 2.0;
        let beta = alpha / (1.0 - m);
        Ok(a1 / (1.0 - m) * (beta * horizon).exp())
    }
}

/// Runs the relaxed scheme at one time step. Every consecutive pair satisfies
/// the relaxed step inequality within the schedule's budget by construction
/// (the inner solver certifies its gap against the budget before a step is
/// accepted).
pub fn run_single(
    family: &FunctionalFamily,
    coupling: &CouplingSchedule,
    errors: &ErrorSchedule,
    recovery: &RecoveryData,
    tau: f64,
    horizon: f64,
    cfg: &InnerSolverConfig,
) -> Result<Trajectory> {
    assert!(tau > 0.0 && horizon > 0.0);
    let epsilon = coupling.epsilon(tau)?;
    let f = family.member(epsilon);
    let cert = &family.certificate;
    if 2.0 * tau * cert.b >= 1.0 {
        return Err(Error::TauTooLarge { tau, b: cert.b });
    }
    let initial = recovery.initial_for(tau);
    let initial_energy = f.value(&initial)?;
    let bound = gronwall_bound(family, coupling, errors, recovery, tau, horizon)?;

    let n_steps = (horizon / tau).ceil() as usize;
    let mut values = Vec::with_capacity(n_steps);
    let mut step_speeds = Vec::with_capacity(n_steps);
    let mut energies = Vec::with_capacity(n_steps);
    let mut prev = initial.clone();
    for step in 1..=n_steps {
        let budget = errors.budget(tau, step);
        let res = relaxed_step_result(&f, cert, tau, &prev, budget, cfg)?;
        let v = res.minimizer;
        let d = v.distance(&prev);
        let d_star = v.distance(&cert.u_star);
        if d_star * d_star > 1e3 * bound.max(f64::MIN_POSITIVE) {
            return Err(Error::DivergedTrajectory {
                step,
                observed: d_star * d_star,
                bound,
            });
        }
        step_speeds.push(d / tau);
        energies.push(f.value(&v)?);
        values.push(v.clone());
        prev = v;
    }
    Ok(Trajectory {
        tau,
        epsilon,
        initial,
        values,
        horizon,
        step_speeds,
        energies,
        initial_energy,
    })
}

/// Interpolant values across the refinement at one probe time.
#[derive(Debug, Clone, Serialize)]
pub struct ProbePoint {
    pub time: f64,
    /// ū_τ(time) per τ, in tau_list order.
    pub values: Vec<Point>,
    /// d(value_k, value_{k+1}) for consecutive τ.
    pub successive_distances: Vec<f64>,
    /// Interpolant at the smallest τ; the numerical stand-in for the limit.
    pub limit_estimate: Point,
}

/// Cauchy behavior across a refinement plus per-trajectory dissipation sums.
/// Convergence is reported, never asserted: only subsequential convergence is
/// guaranteed in general.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceSummary {
    pub probes: Vec<ProbePoint>,
    /// Σ d²/(2τ) per trajectory, in tau_list order.
    pub displacement_sums: Vec<f64>,
}

/// Runs the scheme for every τ in a strictly decreasing list (concurrently)
/// and summarizes the Cauchy behavior of the interpolants at the probe times.
pub fn run_refinement(
    family: &FunctionalFamily,
    coupling: &CouplingSchedule,
    errors: &ErrorSchedule,
    recovery: &RecoveryData,
    tau_list: &[f64],
    horizon: f64,
    cfg: &InnerSolverConfig,
    probe_times: &[f64],
) -> Result<(Vec<Trajectory>, ConvergenceSummary)> {
    if tau_list.is_empty() {
        return Err(Error::Invalid("tau_list must be nonempty".into()));
    }
    if !tau_list.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Invalid("tau_list must be strictly decreasing".into()));
    }
    let trajectories: Vec<Trajectory> = tau_list
        .par_iter()
        .map(|&tau| run_single(family, coupling, errors, recovery, tau, horizon, cfg))
        .collect::<Result<_>>()?;
    let summary = summarize(&trajectories, probe_times);
    Ok((trajectories, summary))
}

pub fn summarize(trajectories: &[Trajectory], probe_times: &[f64]) -> ConvergenceSummary {
    let probes = probe_times
        .iter()
        .map(|&t| {
            let values: Vec<Point> = trajectories.iter().map(|tr| tr.eval(t).clone()).collect();
            let successive_distances = values
                .windows(2)
                .map(|w| w[0].distance(&w[1]))
                .collect();
            let limit_estimate = values.last().expect("nonempty refinement").clone();
            ProbePoint { time: t, values, successive_distances, limit_estimate }
        })
        .collect();
    ConvergenceSummary {
        probes,
        displacement_sums: trajectories.iter().map(Trajectory::displacement_sum).collect(),
    }
}
