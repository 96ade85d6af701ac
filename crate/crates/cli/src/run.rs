//! Validation and execution of one experiment: recovery, the refinement runs
//! (parallel over τ), optional probes and expectation checks.

use crate::config::{Expectation, ExperimentConfig, ProbesConfig};
use mmlab_core::diagnostics::{
    crucial_assumption_probe, slope_liminf_probe, ProbeReport, ProbeVerdict, SlopeLiminfReport,
};
use mmlab_core::prox::InnerSolverConfig;
use mmlab_core::scheme::{
    gronwall_bound, run_single, summarize, ConvergenceSummary, RecoveryData, Trajectory,
};
use mmlab_core::zoo::{self, FamilySpec};
use mmlab_core::{CouplingSchedule, ErrorSchedule, Point};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent configuration (exit code 2).
    Config(String),
    /// The run itself failed (exit code 3).
    Run(mmlab_core::Error),
    /// I/O failure while reading configs or writing reports (exit code 3).
    Io(String),
    /// The run finished but an expectation did not hold (exit code 4).
    Expectation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) | CliError::Io(_) => 3,
            CliError::Expectation(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CliError::Run(e) => write!(f, "run failed: {e}"),
            CliError::Io(msg) => write!(f, "{msg}"),
            CliError::Expectation(msg) => write!(f, "expectation failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mmlab_core::Error> for CliError {
    fn from(e: mmlab_core::Error) -> CliError {
        CliError::Run(e)
    }
}

/// A validated configuration, ready to run.
#[derive(Debug)]
pub struct PreparedExperiment {
    pub spec: FamilySpec,
    pub coupling: CouplingSchedule,
    pub errors: ErrorSchedule,
    pub recovery: RecoveryData,
    pub initial: Point,
    pub base_solver: InnerSolverConfig,
}

pub fn validate_config(cfg: &ExperimentConfig) -> Result<PreparedExperiment, CliError> {
    let bad = |msg: String| CliError::Config(msg);
    let spec = zoo::build(&cfg.family, &cfg.parameters)
        .map_err(|e| bad(e.to_string()))?;
    let initial = Point::new(cfg.initial_point.clone()).map_err(|e| bad(e.to_string()))?;
    if !(cfg.horizon > 0.0) {
        return Err(bad(format!("horizon must be positive, got {}", cfg.horizon)));
    }
    if cfg.tau_list.is_empty() {
        return Err(bad("tau_list must be nonempty".into()));
    }
    if !cfg.tau_list.iter().all(|&t| t > 0.0 && t.is_finite()) {
        return Err(bad("every tau must be positive and finite".into()));
    }
    if !cfg.tau_list.windows(2).all(|w| w[0] > w[1]) {
        return Err(bad("tau_list must be strictly decreasing".into()));
    }
    let coupling = cfg.coupling.schedule();
    let mut eps_list = Vec::with_capacity(cfg.tau_list.len());
    for &tau in &cfg.tau_list {
        eps_list.push(coupling.epsilon(tau).map_err(|e| bad(e.to_string()))?);
    }
    for &t in &cfg.probe_times {
        if !(0.0..=cfg.horizon).contains(&t) {
            return Err(bad(format!("probe time {t} outside [0, {}]", cfg.horizon)));
        }
    }
    if (cfg.probes.ratio || cfg.probes.slope) && !spec.family.has_limit_slope() {
        return Err(bad(format!(
            "family {:?} has no analytic limit slope; probes need one",
            cfg.family
        )));
    }
    if cfg.probes.slope && !eps_list.windows(2).all(|w| w[0] > w[1]) {
        return Err(bad(
            "slope probe requires a strictly decreasing epsilon(tau) along tau_list".into(),
        ));
    }
    for e in &cfg.expectations {
        let (time, point, threshold) = match e {
            Expectation::FinalNear { time, point, tolerance } => (*time, point, *tolerance),
            Expectation::FinalFar { time, point, min_distance } => (*time, point, *min_distance),
        };
        if !(0.0..=cfg.horizon).contains(&time) {
            return Err(bad(format!("expectation time {time} outside [0, {}]", cfg.horizon)));
        }
        if point.len() != initial.dim() {
            return Err(bad("expectation point dimension mismatch".into()));
        }
        if !(threshold > 0.0) {
            return Err(bad("expectation threshold must be positive".into()));
        }
    }
    let recovery = spec.recovery(&initial, &coupling);
    Ok(PreparedExperiment {
        spec,
        coupling,
        errors: cfg.error_schedule.schedule(),
        recovery,
        initial,
        base_solver: cfg.solver.apply(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub tau: f64,
    pub epsilon: f64,
    pub n_steps: usize,
    pub initial_point: Point,
    pub final_point: Point,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub displacement_sum: f64,
    /// Gronwall containment constant: d²(uⁿ, u⋆) ≤ this for every step.
    pub a_priori_bound: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ProbeOutputs {
    pub ratio: Option<ProbeReport>,
    pub slope: Option<SlopeLiminfReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpectationResult {
    pub kind: String,
    pub time: f64,
    pub target: Vec<f64>,
    pub threshold: f64,
    pub observed_distance: f64,
    pub passed: bool,
}

#[derive(Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub convergence: ConvergenceSummary,
    pub probes: ProbeOutputs,
    pub expectations: Vec<ExpectationResult>,
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub trajectories: Vec<Trajectory>,
}

impl ExperimentOutcome {
    /// The error to surface after reports are written, if any expectation
    /// failed.
    pub fn expectation_failure(&self) -> Option<CliError> {
        let failed: Vec<&ExpectationResult> = self
            .report
            .expectations
            .iter()
            .filter(|r| !r.passed)
            .collect();
        if failed.is_empty() {
            None
        } else {
            Some(CliError::Expectation(
                failed
                    .iter()
                    .map(|r| {
                        format!(
                            "{} at t = {}: observed distance {:.6e} vs threshold {:.6e}",
                            r.kind, r.time, r.observed_distance, r.threshold
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, CliError> {
    let prepared = validate_config(cfg)?;
    let PreparedExperiment { spec, coupling, errors, recovery, base_solver, .. } = &prepared;

    // Per-τ solver configs differ (feature scale follows ε(τ)), so drive the
    // refinement here instead of with a single shared config.
    let trajectories: Vec<Trajectory> = cfg
        .tau_list
        .par_iter()
        .map(|&tau| {
            let solver = spec.solver_config(base_solver, coupling, tau)?;
            run_single(&spec.family, coupling, errors, recovery, tau, cfg.horizon, &solver)
        })
        .collect::<mmlab_core::Result<_>>()?;

    let mut runs = Vec::with_capacity(trajectories.len());
    for tr in &trajectories {
        runs.push(RunSummary {
            tau: tr.tau,
            epsilon: tr.epsilon,
            n_steps: tr.n_steps(),
            initial_point: tr.initial.clone(),
            final_point: tr.final_point().clone(),
            initial_energy: tr.initial_energy,
            final_energy: *tr.energies.last().unwrap_or(&tr.initial_energy),
            displacement_sum: tr.displacement_sum(),
            a_priori_bound: gronwall_bound(
                &spec.family,
                coupling,
                errors,
                recovery,
                tr.tau,
                cfg.horizon,
            )?,
        });
    }

    let convergence = summarize(&trajectories, &cfg.probe_times);
    let probes = run_probes(&cfg.probes, &prepared, &cfg.tau_list)?;

    let finest = trajectories.last().expect("tau_list validated nonempty");
    let expectations = cfg
        .expectations
        .iter()
        .map(|e| evaluate_expectation(e, finest))
        .collect::<Result<Vec<_>, CliError>>()?;

    Ok(ExperimentOutcome {
        report: ExperimentReport {
            config: cfg.clone(),
            runs,
            convergence,
            probes,
            expectations,
        },
        trajectories,
    })
}

fn run_probes(
    probes: &ProbesConfig,
    prepared: &PreparedExperiment,
    taus: &[f64],
) -> Result<ProbeOutputs, CliError> {
    let mut out = ProbeOutputs::default();
    if !probes.ratio && !probes.slope {
        return Ok(out);
    }
    let points: Vec<Point> = taus.iter().map(|&t| prepared.recovery.initial_for(t)).collect();
    if probes.ratio {
        out.ratio = Some(crucial_assumption_probe(
            &prepared.spec,
            &prepared.coupling,
            taus,
            &points,
            &prepared.initial,
            &prepared.base_solver,
        )?);
    }
    if probes.slope {
        let epsilons: mmlab_core::Result<Vec<f64>> =
            taus.iter().map(|&t| prepared.coupling.epsilon(t)).collect();
        out.slope = Some(slope_liminf_probe(
            &prepared.spec.family,
            &epsilons?,
            &points,
            &prepared.initial,
        )?);
    }
    Ok(out)
}

fn evaluate_expectation(
    e: &Expectation,
    finest: &Trajectory,
) -> Result<ExpectationResult, CliError> {
    let (kind, time, target, threshold) = match e {
        Expectation::FinalNear { time, point, tolerance } => {
            ("final_near", *time, point.clone(), *tolerance)
        }
        Expectation::FinalFar { time, point, min_distance } => {
            ("final_far", *time, point.clone(), *min_distance)
        }
    };
    let target_point = Point::new(target.clone()).map_err(CliError::Run)?;
    let observed = finest.eval(time).distance(&target_point);
    let passed = match e {
        Expectation::FinalNear { .. } => observed <= threshold,
        Expectation::FinalFar { .. } => observed >= threshold,
    };
    Ok(ExpectationResult {
        kind: kind.into(),
        time,
        target,
        threshold,
        observed_distance: observed,
        passed,
    })
}

/// One-line human rendering of a probe verdict.
pub fn verdict_label(v: ProbeVerdict) -> &'static str {
    match v {
        ProbeVerdict::Satisfied => "satisfied",
        ProbeVerdict::Violated => "violated",
        ProbeVerdict::Inconclusive => "inconclusive",
    }
}
