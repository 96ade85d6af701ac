//! Concrete functional families with analytic metadata: limits, slopes, exact
//! flows, coercivity certificates, well-prepared recoveries and the feature
//! scales the inner solver needs. Also the explicit selector counterexample —
//! a discrete run that obeys the relaxed step inequality with a non-vanishing
//! slack yet converges to the wrong curve.

use crate::prox::InnerSolverConfig;
use crate::scheme::{RecoveryData, Trajectory};
use crate::types::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

type RecoveryBuilder = dyn Fn(&Point, &CouplingSchedule) -> RecoveryData + Send + Sync;
type ScaleFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A named family plus everything a driver needs to run it: how to prepare
/// initial data for a given coupling and how fine the solver grid must be.
#[derive(Clone)]
pub struct FamilySpec {
    pub name: String,
    pub summary: String,
    /// Construction parameters, for reports.
    pub parameters: BTreeMap<String, f64>,
    pub family: FunctionalFamily,
    recovery: Arc<RecoveryBuilder>,
    /// Finest oscillation scale of the member at parameter ε, if any.
    feature_scale: Option<Arc<ScaleFn>>,
}

impl FamilySpec {
    /// Well-prepared initial data approximating `u0` under the given coupling.
    pub fn recovery(&self, u0: &Point, coupling: &CouplingSchedule) -> RecoveryData {
        (self.recovery)(u0, coupling)
    }

    pub fn feature_scale(&self, epsilon: f64) -> Option<f64> {
        self.feature_scale.as_ref().map(|s| s(epsilon))
    }

    /// Solver configuration for one run: the base config with
    /// `min_feature_scale` set from this family at ε(τ).
    pub fn solver_config(
        &self,
        base: &InnerSolverConfig,
        coupling: &CouplingSchedule,
        tau: f64,
    ) -> Result<InnerSolverConfig> {
        let mut cfg = base.clone();
        cfg.min_feature_scale = self.feature_scale(coupling.epsilon(tau)?);
        Ok(cfg)
    }
}

impl std::fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FamilySpec")
            .field("name", &self.name)
            .field("parameters", &self.parameters)
            .finish()
    }
}

/// φ_ε(x) = x² + ε^p · cos²(x/ε), Γ-converging to x². The oscillation floor
/// pins coarse couplings (wells of depth ε^p every πε) while fine couplings
/// recover the flow of the limit, x·e^{−2t}. `rho_exponent` is p; p = 1/2 is
/// the usual choice, p = 1 gives the shallower variant.
pub fn oscillatory_family(rho_exponent: f64) -> FamilySpec {
    assert!(rho_exponent > 0.0, "amplitude exponent must be positive");
    let member = move |eps: f64| {
        let rho = eps.powf(rho_exponent);
        Functional::smooth_1d(
            move |x| x * x + rho * (x / eps).cos().powi(2),
            move |x| 2.0 * x - (rho / eps) * (2.0 * x / eps).sin(),
        )
    };
    let limit = Functional::smooth_1d(|x| x * x, |x| 2.0 * x);
    // Members dominate the limit: x² + ρ·cos² ≥ x² ≥ 0.
    let certificate = CoercivityCertificate::new(0.0, 0.0, Point::scalar(0.0)).unwrap();
    let family = FunctionalFamily::new(member, limit, certificate)
        .with_limit_slope(|p| 2.0 * p.x().abs())
        .with_exact_flow(|p, t| Point::scalar(p.x() * (-2.0 * t).exp()));
    FamilySpec {
        name: "oscillatory".into(),
        summary: format!(
            "x^2 + eps^{rho_exponent} cos^2(x/eps); limit x^2, flow x e^(-2t); \
             coarse couplings pin in the cosine wells"
        ),
        parameters: BTreeMap::from([("rho_exponent".to_string(), rho_exponent)]),
        family,
        // Snap to the nearest zero of cos²(x/eps): x = eps(pi/2 + k pi). There
        // the member equals the limit exactly, so the data is well prepared.
        recovery: Arc::new(|u0: &Point, coupling: &CouplingSchedule| {
            let target = u0.x();
            let coupling = coupling.clone();
            RecoveryData::new(u0.clone(), move |tau| {
                let eps = coupling.epsilon(tau).expect("coupling validated by the driver");
                let k = ((target / eps - PI / 2.0) / PI).round();
                Point::scalar(eps * (PI / 2.0 + k * PI))
            })
        }),
        // cos² has period pi·eps; a quarter of eps oversamples every well.
        feature_scale: Some(Arc::new(|eps| eps / 4.0)),
    }
}

/// φ_ε(x) = x²/2 + ε·sin(x/√ε): a uniformly convergent perturbation of the
/// quadratic. The wiggle amplitude ε beats its wavelength √ε, so nothing pins
/// and every coupling recovers the flow x·e^{−t}.
pub fn perturbation_family() -> FamilySpec {
    let member = |eps: f64| {
        let s = eps.sqrt();
        Functional::smooth_1d(
            move |x| 0.5 * x * x + eps * (x / s).sin(),
            move |x| x + s * (x / s).cos(),
        )
    };
    let limit = Functional::smooth_1d(|x| 0.5 * x * x, |x| x);
    // x²/2 + eps·sin ≥ −eps ≥ −1 for eps ≤ 1.
    let certificate = CoercivityCertificate::new(1.0, 0.0, Point::scalar(0.0)).unwrap();
    let family = FunctionalFamily::new(member, limit, certificate)
        .with_limit_slope(|p| p.x().abs())
        .with_exact_flow(|p, t| Point::scalar(p.x() * (-t).exp()));
    FamilySpec {
        name: "perturbation".into(),
        summary: "x^2/2 + eps sin(x/sqrt(eps)); uniformly convergent, flow x e^(-t)".into(),
        parameters: BTreeMap::new(),
        family,
        recovery: Arc::new(|u0: &Point, _| RecoveryData::constant(u0.clone())),
        feature_scale: Some(Arc::new(|eps| eps.sqrt() / 4.0)),
    }
}

/// ψ(x) = x² except ψ(0) = 1: not lower semicontinuous at the origin. Every
/// member equals ψ; the limit is the lsc envelope x². Starting the scheme at
/// the raw point 0 is ill prepared (energy 1, envelope value 0); the recovery
/// u_τ⁰ = τ restores well-preparedness without moving the limit point.
pub fn lsc_envelope_pair() -> FamilySpec {
    let psi = |x: f64| if x == 0.0 { 1.0 } else { x * x };
    let member = move |_eps: f64| Functional::new(move |p: &Point| ExtReal::Finite(psi(p.x())));
    let limit = Functional::smooth_1d(|x| x * x, |x| 2.0 * x);
    let certificate = CoercivityCertificate::new(0.0, 0.0, Point::scalar(0.0)).unwrap();
    let family = FunctionalFamily::new(member, limit, certificate)
        .with_limit_slope(|p| 2.0 * p.x().abs())
        .with_exact_flow(|p, t| Point::scalar(p.x() * (-2.0 * t).exp()));
    FamilySpec {
        name: "lsc-envelope".into(),
        summary: "x^2 with the single value psi(0) = 1; limit is the lsc envelope x^2".into(),
        parameters: BTreeMap::new(),
        family,
        recovery: Arc::new(|u0: &Point, _| {
            if u0.x() == 0.0 {
                RecoveryData::new(u0.clone(), |tau| Point::scalar(tau))
            } else {
                RecoveryData::constant(u0.clone())
            }
        }),
        feature_scale: None,
    }
}

/// φ_ε = x²/2 restricted to the lattice εZ ∩ [−1/√ε, 1/√ε] (+∞ elsewhere).
/// The Γ-limit is the unrestricted quadratic; each proximal step is an exact
/// enumeration of the feasible lattice.
pub fn grid_restricted_family() -> FamilySpec {
    let member = |eps: f64| {
        let lattice = Lattice {
            offset: 0.0,
            spacing: eps,
            box_radius: 1.0 / eps.sqrt(),
        };
        let check = lattice.clone();
        Functional::new(move |p: &Point| {
            if check.contains(p.x()) {
                ExtReal::Finite(0.5 * p.x() * p.x())
            } else {
                ExtReal::PosInf
            }
        })
        .with_lattice(lattice)
    };
    let limit = Functional::smooth_1d(|x| 0.5 * x * x, |x| x);
    let certificate = CoercivityCertificate::new(0.0, 0.0, Point::scalar(0.0)).unwrap();
    let family = FunctionalFamily::new(member, limit, certificate)
        .with_limit_slope(|p| p.x().abs())
        .with_exact_flow(|p, t| Point::scalar(p.x() * (-t).exp()));
    FamilySpec {
        name: "grid".into(),
        summary: "x^2/2 on the lattice eps*Z inside [-1/sqrt(eps), 1/sqrt(eps)]".into(),
        parameters: BTreeMap::new(),
        family,
        recovery: Arc::new(|u0: &Point, coupling: &CouplingSchedule| {
            let target = u0.x();
            let coupling = coupling.clone();
            RecoveryData::new(u0.clone(), move |tau| {
                let eps = coupling.epsilon(tau).expect("coupling validated by the driver");
                let lattice = Lattice {
                    offset: 0.0,
                    spacing: eps,
                    box_radius: 1.0 / eps.sqrt(),
                };
                Point::scalar(lattice.snap(target))
            })
        }),
        feature_scale: None,
    }
}

/// The plain quadratic x²/2 with itself as limit; exact flow x·e^{−t}.
pub fn quadratic_reference() -> FamilySpec {
    let member = |_eps: f64| Functional::smooth_1d(|x| 0.5 * x * x, |x| x);
    let limit = Functional::smooth_1d(|x| 0.5 * x * x, |x| x);
    let certificate = CoercivityCertificate::new(0.0, 0.0, Point::scalar(0.0)).unwrap();
    let family = FunctionalFamily::new(member, limit, certificate)
        .with_limit_slope(|p| p.x().abs())
        .with_exact_flow(|p, t| Point::scalar(p.x() * (-t).exp()));
    FamilySpec {
        name: "quadratic".into(),
        summary: "x^2/2, its own limit; flow x e^(-t)".into(),
        parameters: BTreeMap::new(),
        family,
        recovery: Arc::new(|u0: &Point, _| RecoveryData::constant(u0.clone())),
        feature_scale: None,
    }
}

/// The slack schedule γ(τ) = (1+τ)/2 under which the counterexample below is
/// admissible step by step. The point is that γ does not vanish with τ.
pub fn selector_counterexample_budget() -> ErrorSchedule {
    // The first step attains gamma*tau with equality; the relative headroom
    // keeps the validation robust to rounding in the two computations.
    ErrorSchedule::uniform(|tau| (1.0 + tau) / 2.0 * (1.0 + 1e-9))
}

/// Where the counterexample's interpolants converge: t·e^{−t}. The exact flow
/// of x²/2 from 0 is the constant 0, so the limit curve is wrong everywhere
/// past t = 0.
pub fn selector_counterexample_limit(t: f64) -> f64 {
    t * (-t).exp()
}

/// Explicit discrete run for φ = x²/2 from u⁰ = 0 with uⁿ = nτ/(1+τ)^{n−1}.
/// Each step overshoots the proximal minimum by τ(1+τ)/2·(1+τ)^{−2(n−1)},
/// within the non-vanishing budget γ(τ)·τ of
/// [`selector_counterexample_budget`] — yet the interpolants converge to
/// t·e^{−t} instead of the constant flow 0.
pub fn selector_counterexample(tau: f64, horizon: f64) -> Result<Trajectory> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::TauOutOfRange(tau));
    }
    assert!(horizon > 0.0);
    let n_steps = (horizon / tau).ceil() as usize;
    let mut values = Vec::with_capacity(n_steps);
    let mut step_speeds = Vec::with_capacity(n_steps);
    let mut energies = Vec::with_capacity(n_steps);
    let mut prev = 0.0f64;
    for n in 1..=n_steps {
        let x = n as f64 * tau / (1.0 + tau).powi(n as i32 - 1);
        values.push(Point::scalar(x));
        step_speeds.push((x - prev).abs() / tau);
        energies.push(0.5 * x * x);
        prev = x;
    }
    Ok(Trajectory {
        tau,
        epsilon: 1.0,
        initial: Point::scalar(0.0),
        values,
        horizon,
        step_speeds,
        energies,
        initial_energy: 0.0,
    })
}

/// Names accepted by [`build`], in presentation order.
pub fn family_names() -> Vec<&'static str> {
    vec!["quadratic", "perturbation", "oscillatory", "lsc-envelope", "grid"]
}

/// All specs with their default parameters.
pub fn registry() -> Vec<FamilySpec> {
    family_names()
        .iter()
        .map(|name| build(name, &BTreeMap::new()).expect("defaults are valid"))
        .collect()
}

/// Constructs a family by name. Unknown names and unknown parameter keys are
/// rejected so configuration typos fail loudly.
pub fn build(name: &str, parameters: &BTreeMap<String, f64>) -> Result<FamilySpec> {
    let allowed: &[&str] = match name {
        "oscillatory" => &["rho_exponent"],
        "quadratic" | "perturbation" | "lsc-envelope" | "grid" => &[],
        _ => {
            return Err(Error::Invalid(format!(
                "unknown family {name:?}; known families: {}",
                family_names().join(", ")
            )))
        }
    };
    for key in parameters.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Invalid(format!(
                "unknown parameter {key:?} for family {name:?}"
            )));
        }
    }
    Ok(match name {
        "oscillatory" => {
            let p = parameters.get("rho_exponent").copied().unwrap_or(0.5);
            if p <= 0.0 {
                return Err(Error::Invalid(format!(
                    "rho_exponent must be positive, got {p}"
                )));
            }
            oscillatory_family(p)
        }
        "quadratic" => quadratic_reference(),
        "perturbation" => perturbation_family(),
        "lsc-envelope" => lsc_envelope_pair(),
        "grid" => grid_restricted_family(),
        _ => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivative(f: &Functional, xs: &[f64]) {
        let h = 1e-6;
        for &x in xs {
            let analytic = f.derivative(&Point::scalar(x)).expect("derivative declared").x();
            let num = (f.value(&Point::scalar(x + h)).unwrap()
                - f.value(&Point::scalar(x - h)).unwrap())
                / (2.0 * h);
            let tol = 1e-4 * (1.0 + analytic.abs());
            assert!(
                (analytic - num).abs() < tol,
                "derivative mismatch at {x}: analytic {analytic}, numeric {num}"
            );
        }
    }

    fn probe_xs() -> Vec<f64> {
        (-50..=50).map(|i| i as f64 * 0.07).collect()
    }

    #[test]
    fn oscillatory_derivative_matches_differences() {
        let spec = oscillatory_family(0.5);
        check_derivative(&spec.family.member(0.05), &probe_xs());
        check_derivative(&spec.family.member(0.01), &probe_xs());
    }

    #[test]
    fn perturbation_derivative_matches_differences() {
        let spec = perturbation_family();
        check_derivative(&spec.family.member(0.1), &probe_xs());
        check_derivative(&spec.family.member(1e-3), &probe_xs());
    }

    #[test]
    fn members_dominate_limits_pointwise() {
        // Γ-liminf spot check: both families satisfy member ≥ limit − o(1)
        // pointwise; the oscillatory one dominates exactly.
        let osc = oscillatory_family(0.5);
        let pert = perturbation_family();
        for eps in [0.1, 1e-3] {
            let mo = osc.family.member(eps);
            let mp = pert.family.member(eps);
            for x in probe_xs() {
                let p = Point::scalar(x);
                assert!(mo.value(&p).unwrap() >= osc.family.limit.value(&p).unwrap() - 1e-15);
                assert!(mp.value(&p).unwrap() >= pert.family.limit.value(&p).unwrap() - eps - 1e-15);
            }
        }
    }

    #[test]
    fn exact_flows_solve_the_flow_equation() {
        // d/dt f(u(t)) = -|slope|²(u(t)) along a gradient flow.
        for spec in registry() {
            let fam = &spec.family;
            let x0 = Point::scalar(0.8);
            let h = 1e-5;
            for t in [0.1, 0.5, 1.0] {
                let u = fam.exact_flow(&x0, t).unwrap();
                let e_plus = fam.limit.value(&fam.exact_flow(&x0, t + h).unwrap()).unwrap();
                let e_minus = fam.limit.value(&fam.exact_flow(&x0, t - h).unwrap()).unwrap();
                let de = (e_plus - e_minus) / (2.0 * h);
                let slope = fam.limit_slope(&u).unwrap();
                assert!(
                    (de + slope * slope).abs() < 1e-6 * (1.0 + slope * slope),
                    "{}: t = {t}, dE/dt = {de}, -slope² = {}",
                    spec.name,
                    -slope * slope
                );
            }
        }
    }

    #[test]
    fn oscillatory_recovery_is_well_prepared() {
        let spec = oscillatory_family(0.5);
        let coupling = CouplingSchedule::power(1.0, 1.0);
        let recovery = spec.recovery(&Point::scalar(1.0), &coupling);
        let limit_energy = spec.family.limit.value(&Point::scalar(1.0)).unwrap();
        let mut last_gap = f64::INFINITY;
        for tau in [1e-1, 1e-2, 1e-3, 1e-4] {
            let eps = coupling.epsilon(tau).unwrap();
            let u = recovery.initial_for(tau);
            // Snapped to a cosine zero: member energy = x², and x is within
            // half a wavelength of the target.
            let member_energy = spec.family.member(eps).value(&u).unwrap();
            assert!((member_energy - u.x() * u.x()).abs() < 1e-12);
            assert!((u.x() - 1.0).abs() <= PI * eps / 2.0 + 1e-12);
            let gap = (member_energy - limit_energy).abs();
            assert!(gap <= last_gap + 1e-12, "energy gap grew at tau = {tau}");
            last_gap = gap;
        }
        assert!(last_gap < 1e-3);
    }

    #[test]
    fn lsc_recovery_repairs_the_bad_point() {
        let spec = lsc_envelope_pair();
        let coupling = CouplingSchedule::constant(1.0);
        let recovery = spec.recovery(&Point::scalar(0.0), &coupling);
        let member = spec.family.member(1.0);
        // Raw point: energy stuck at psi(0) = 1 while the envelope says 0.
        assert_eq!(member.value(&Point::scalar(0.0)).unwrap(), 1.0);
        // Recovered point tau: energy tau² → 0, distance to the limit point tau → 0.
        for tau in [1e-1, 1e-3] {
            let u = recovery.initial_for(tau);
            assert_eq!(u.x(), tau);
            assert!((member.value(&u).unwrap() - tau * tau).abs() < 1e-18);
        }
    }

    #[test]
    fn grid_recovery_lands_on_the_lattice() {
        let spec = grid_restricted_family();
        let coupling = CouplingSchedule::power(1.0, 1.0);
        let recovery = spec.recovery(&Point::scalar(1.0), &coupling);
        for tau in [1e-1, 1e-2, 1e-3] {
            let eps = coupling.epsilon(tau).unwrap();
            let u = recovery.initial_for(tau);
            assert!(spec.family.member(eps).value(&u).is_ok(), "off-lattice recovery");
            assert!((u.x() - 1.0).abs() <= eps / 2.0 + 1e-12);
        }
    }

    #[test]
    fn certificates_hold_on_samples() {
        for spec in registry() {
            for eps in [0.5, 1e-2] {
                let member = spec.family.member(eps);
                let boxed = Functional::new(move |p: &Point| member.evaluate(p))
                    .with_domain_hint(BoundingBox::symmetric(1, 8.0));
                spec.family
                    .certificate
                    .spot_check(&boxed, 1, 500, 42)
                    .unwrap_or_else(|e| panic!("{} at eps = {eps}: {e}", spec.name));
            }
        }
    }

    #[test]
    fn counterexample_recursion_and_limit() {
        let tau = 0.01;
        let tr = selector_counterexample(tau, 1.0).unwrap();
        assert_eq!(tr.n_steps(), 100);
        assert_eq!(tr.point(1).x(), tau);
        // u^n relates to the exact prox of u^{n-1} by an extra tau/(1+tau)^{n-1}.
        for n in 2..=tr.n_steps() {
            let exact = tr.point(n - 1).x() / (1.0 + tau);
            let extra = tau / (1.0 + tau).powi(n as i32 - 1);
            assert!((tr.point(n).x() - exact - extra).abs() < 1e-15);
        }
        let end = tr.eval(1.0).x();
        assert!((end - selector_counterexample_limit(1.0)).abs() < 3.0 * tau);
        assert!(end > 0.3, "counterexample must escape the true flow at 0");
    }

    #[test]
    fn counterexample_rejects_bad_tau() {
        assert!(matches!(selector_counterexample(1.5, 1.0), Err(Error::TauOutOfRange(_))));
    }

    #[test]
    fn build_validates_names_and_parameters() {
        assert!(build("quadratic", &BTreeMap::new()).is_ok());
        assert!(build("nope", &BTreeMap::new()).is_err());
        let bad = BTreeMap::from([("wavelength".to_string(), 1.0)]);
        assert!(build("oscillatory", &bad).is_err());
        let good = BTreeMap::from([("rho_exponent".to_string(), 1.0)]);
        let spec = build("oscillatory", &good).unwrap();
        assert_eq!(spec.parameters["rho_exponent"], 1.0);
    }

    #[test]
    fn solver_config_injects_feature_scale() {
        let spec = oscillatory_family(0.5);
        let cfg = spec
            .solver_config(&InnerSolverConfig::default(), &CouplingSchedule::constant(0.02), 1e-3)
            .unwrap();
        assert_eq!(cfg.min_feature_scale, Some(0.005));
        let quad = quadratic_reference();
        let cfg = quad
            .solver_config(&InnerSolverConfig::default(), &CouplingSchedule::constant(0.02), 1e-3)
            .unwrap();
        assert_eq!(cfg.min_feature_scale, None);
    }
}
