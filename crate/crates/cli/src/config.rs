//! Experiment configuration: a JSON document describing one refinement run.
//! Unknown fields are rejected so typos fail loudly.

use mmlab_core::prox::InnerSolverConfig;
use mmlab_core::{CouplingSchedule, ErrorSchedule};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Family name from the registry (`mmlab list-families`).
    pub family: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    /// Limit initial point u⁰; per-τ data is recovered from it.
    pub initial_point: Vec<f64>,
    pub horizon: f64,
    /// Strictly decreasing time steps.
    pub tau_list: Vec<f64>,
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub error_schedule: ErrorScheduleConfig,
    /// Times at which the interpolants are compared across the refinement.
    #[serde(default)]
    pub probe_times: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub probes: ProbesConfig,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    /// ε(τ) = c·τ^β
    Power { c: f64, beta: f64 },
    /// ε(τ) = ε₀
    Constant { epsilon: f64 },
}

impl CouplingConfig {
    pub fn schedule(&self) -> CouplingSchedule {
        match *self {
            CouplingConfig::Power { c, beta } => CouplingSchedule::power(c, beta),
            CouplingConfig::Constant { epsilon } => CouplingSchedule::constant(epsilon),
        }
    }
}

/// Per-step relaxation budgets. `gamma_tau` is the vanishing default
/// γ(τ) = τ (budget τ² per step); `gamma_constant` keeps γ fixed, which is
/// exactly the regime where convergence to the flow can fail.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorScheduleConfig {
    #[default]
    GammaTau,
    GammaConstant { gamma: f64 },
}

impl ErrorScheduleConfig {
    pub fn schedule(&self) -> ErrorSchedule {
        match *self {
            ErrorScheduleConfig::GammaTau => ErrorSchedule::default_uniform(),
            ErrorScheduleConfig::GammaConstant { gamma } => {
                ErrorSchedule::uniform(move |_| gamma)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub coarse_grid_points: Option<usize>,
    pub refine_iterations: Option<usize>,
}

impl SolverOverrides {
    pub fn apply(&self) -> InnerSolverConfig {
        let mut cfg = InnerSolverConfig::default();
        if let Some(n) = self.coarse_grid_points {
            cfg.coarse_grid_points = n;
        }
        if let Some(n) = self.refine_iterations {
            cfg.refine_iterations = n;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProbesConfig {
    /// De Giorgi ratio probe at the recovered points along the coupling.
    #[serde(default)]
    pub ratio: bool,
    /// Member-slope liminf probe; requires a strictly decreasing ε(τ).
    #[serde(default)]
    pub slope: bool,
}

/// Post-run checks against the finest-τ interpolant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    FinalNear { time: f64, point: Vec<f64>, tolerance: f64 },
    FinalFar { time: f64, point: Vec<f64>, min_distance: f64 },
}
