//! Acceptance gate: one test per acceptance criterion, each reporting a
//! single PASS/FAIL line. The two τ = 1e-4 oscillatory refinement runs are
//! shared between criteria through lazy statics because they dominate the
//! suite's runtime.

use mmlab_core::diagnostics::{
    crucial_assumption_probe, de_giorgi_ratio, edi_residual, gamma_delta, GammaDistanceSpec,
    ProbeVerdict,
};
use mmlab_core::prox::{
    check_relaxed_inequality, exhaustive_prox_oracle, moreau_yosida, InnerSolverConfig,
    StepVerdict,
};
use mmlab_core::scheme::{gronwall_bound, run_single, Trajectory};
use mmlab_core::zoo;
use mmlab_core::*;
use once_cell::sync::Lazy;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

const E_INV: f64 = 0.36787944117144233; // e^-1
const E_INV2: f64 = 0.1353352832366127; // e^-2

fn criterion<F: FnOnce()>(n: usize, name: &str, body: F) {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    match &outcome {
        Ok(()) => println!("criterion {n} ({name}): PASS"),
        Err(_) => println!("criterion {n} ({name}): FAIL"),
    }
    if let Err(e) = outcome {
        resume_unwind(e);
    }
}

fn free_cert() -> CoercivityCertificate {
    CoercivityCertificate::new(0.0, 0.0, Point::scalar(0.0)).unwrap()
}

fn quadratic() -> Functional {
    Functional::smooth_1d(|x| 0.5 * x * x, |x| x)
}

/// τ = 1e-4 oscillatory refinement run for a given coupling exponent,
/// returning the trajectory and its wall time.
fn oscillatory_run(beta: f64) -> (Trajectory, Duration) {
    let spec = zoo::oscillatory_family(0.5);
    let coupling = CouplingSchedule::power(1.0, beta);
    let errors = ErrorSchedule::default_uniform();
    let recovery = spec.recovery(&Point::scalar(1.0), &coupling);
    let tau = 1e-4;
    let mut base = InnerSolverConfig::default();
    // The fine coupling eps = tau^2 = 1e-8 needs the zoom stage to cover the
    // sublevel window at spacing eps/4; half a million points suffice for the
    // widest window (the first step, where the search ball is largest).
    base.coarse_grid_points = 1 << 19;
    let cfg = spec.solver_config(&base, &coupling, tau).unwrap();
    let start = Instant::now();
    let tr = run_single(&spec.family, &coupling, &errors, &recovery, tau, 1.0, &cfg).unwrap();
    (tr, start.elapsed())
}

static FINE_RUN: Lazy<(Trajectory, Duration)> = Lazy::new(|| oscillatory_run(2.0));
static COARSE_RUN: Lazy<(Trajectory, Duration)> = Lazy::new(|| oscillatory_run(0.5));

#[test]
fn criterion_1_quadratic_closed_form() {
    criterion(1, "quadratic closed form", || {
        let f = quadratic();
        let cert = free_cert();
        let cfg = InnerSolverConfig::default();
        for &(tau, u) in &[(0.1, 1.0), (0.01, -2.0), (0.5, 3.0), (1e-3, 0.7)] {
            let res = moreau_yosida(&f, &cert, tau, &Point::scalar(u), &cfg).unwrap();
            let value = u * u / (2.0 * (1.0 + tau));
            let arg = u / (1.0 + tau);
            assert!(
                (res.value - value).abs() <= 1e-8,
                "tau = {tau}, u = {u}: value {} vs closed form {value}",
                res.value
            );
            assert!(
                (res.minimizer.x() - arg).abs() <= 1e-6,
                "tau = {tau}, u = {u}: minimizer {} vs closed form {arg}",
                res.minimizer.x()
            );
        }
    });
}

#[test]
fn criterion_2_de_giorgi_ratio_tail() {
    criterion(2, "De Giorgi ratio approaches half the squared slope", || {
        let f = quadratic();
        let cert = free_cert();
        let cfg = InnerSolverConfig::default();
        let u = Point::scalar(1.0);
        let mut last = 0.0;
        for &tau in &[1e-2, 1e-3, 1e-4] {
            let r = de_giorgi_ratio(&f, &cert, tau, &u, &cfg).unwrap();
            assert!(r.value > last, "ratio not increasing toward the limit");
            last = r.value;
        }
        // Half the squared slope at u = 1 is 1/2; at the smallest tau the
        // ratio is 1/(2(1 + tau)) = 0.49995.
        assert!(last >= 0.4999, "tail ratio {last} below 0.4999");
    });
}

#[test]
fn criterion_3_scheme_tracks_the_gradient_flow() {
    criterion(3, "quadratic flow accuracy at tau = 1e-3", || {
        let spec = zoo::quadratic_reference();
        let coupling = CouplingSchedule::constant(1.0);
        let recovery = spec.recovery(&Point::scalar(1.0), &coupling);
        let tr = run_single(
            &spec.family,
            &coupling,
            &ErrorSchedule::default_uniform(),
            &recovery,
            1e-3,
            1.0,
            &InnerSolverConfig::default(),
        )
        .unwrap();
        let end = tr.eval(1.0).x();
        assert!(
            (end - E_INV).abs() <= 5e-3,
            "interpolant at t = 1 is {end}, expected within 5e-3 of {E_INV}"
        );
    });
}

#[test]
fn criterion_4_non_vanishing_slack_counterexample() {
    criterion(4, "admissible steps with fixed slack escape the flow", || {
        let tau = 0.01;
        let horizon = 4.0;
        let tr = zoo::selector_counterexample(tau, horizon).unwrap();
        let budget = zoo::selector_counterexample_budget();
        let f = quadratic();
        let cert = free_cert();
        let cfg = InnerSolverConfig::default();
        // Every step up to n = 4/tau satisfies the relaxed inequality with
        // the (non-vanishing) slack gamma(tau) * tau.
        assert_eq!(tr.n_steps(), 400);
        for n in 1..=tr.n_steps() {
            let oracle = moreau_yosida(&f, &cert, tau, tr.point(n - 1), &cfg).unwrap();
            let verdict = check_relaxed_inequality(
                &f,
                tau,
                tr.point(n - 1),
                tr.point(n),
                budget.budget(tau, n),
                &oracle,
            )
            .unwrap();
            assert_eq!(verdict, StepVerdict::Holds, "step {n} not admissible");
        }
        // Yet the trajectory follows t e^{-t}, far from the true flow (the
        // constant 0 from the minimizer).
        let at_one = tr.eval(1.0).x();
        assert!(
            (at_one - E_INV).abs() <= 2e-2,
            "interpolant at t = 1 is {at_one}, expected near t e^-t = {E_INV}"
        );
        assert!(at_one >= 0.3, "interpolant {at_one} should be far from the true flow 0");
        // And the limit curve fails the energy-dissipation inequality.
        let res = edi_residual(
            &f,
            |p| p.x().abs(),
            |t| Point::scalar(zoo::selector_counterexample_limit(t)),
            1.0,
            2000,
        )
        .unwrap();
        assert!(res <= -0.1, "EDI residual {res} should be clearly negative");
    });
}

#[test]
fn criterion_5_pinning_dichotomy() {
    criterion(5, "coupling dichotomy: eps = tau^2 flows, eps = sqrt(tau) pins", || {
        let (fine, fine_time) = &*FINE_RUN;
        let (coarse, coarse_time) = &*COARSE_RUN;
        let fine_end = fine.eval(1.0).x();
        let coarse_end = coarse.eval(1.0).x();
        assert!(
            (fine_end - E_INV2).abs() <= 2e-2,
            "fine coupling ended at {fine_end}, expected within 2e-2 of e^-2 = {E_INV2}"
        );
        assert!(
            (coarse_end - E_INV2).abs() >= 0.1,
            "coarse coupling ended at {coarse_end}, expected pinned at least 0.1 from e^-2"
        );
        let total = *fine_time + *coarse_time;
        assert!(
            total < Duration::from_secs(600),
            "both runs took {total:?}, over the 10 minute budget"
        );
    });
}

#[test]
fn criterion_6_ratio_probe_verdicts() {
    criterion(6, "ratio probe verdicts match the dichotomy", || {
        let spec = zoo::oscillatory_family(0.5);
        let u = Point::scalar(1.0);
        let taus = [1e-2, 1e-3, 1e-4];
        let mut base = InnerSolverConfig::default();
        base.coarse_grid_points = 1 << 19;

        let fine = CouplingSchedule::power(1.0, 2.0);
        let recovery = spec.recovery(&u, &fine);
        let points: Vec<Point> = taus.iter().map(|&t| recovery.initial_for(t)).collect();
        let satisfied =
            crucial_assumption_probe(&spec, &fine, &taus, &points, &u, &base).unwrap();
        assert_eq!(
            satisfied.verdict,
            ProbeVerdict::Satisfied,
            "fine coupling: liminf {} vs target {} (tol {})",
            satisfied.liminf_estimate,
            satisfied.target,
            satisfied.tolerance
        );

        let coarse = CouplingSchedule::power(1.0, 0.5);
        let recovery = spec.recovery(&u, &coarse);
        let points: Vec<Point> = taus.iter().map(|&t| recovery.initial_for(t)).collect();
        let violated =
            crucial_assumption_probe(&spec, &coarse, &taus, &points, &u, &base).unwrap();
        assert_eq!(
            violated.verdict,
            ProbeVerdict::Violated,
            "coarse coupling: liminf {} vs target {} (tol {})",
            violated.liminf_estimate,
            violated.target,
            violated.tolerance
        );
    });
}

#[test]
fn criterion_7_gamma_distance_shrinks() {
    criterion(7, "computable distance tracks the converging family", || {
        let spec = zoo::oscillatory_family(1.0);
        let cert = &spec.family.certificate;
        let limit = &spec.family.limit;
        let gspec = GammaDistanceSpec::default();
        let cfg_limit = InnerSolverConfig::default();
        let mut deltas = Vec::new();
        for eps in [1e-1, 1e-2, 1e-3] {
            let member = spec.family.member(eps);
            let mut cfg = InnerSolverConfig::default();
            cfg.min_feature_scale = spec.feature_scale(eps);
            let d = gamma_delta(&member, cert, limit, cert, &gspec, &cfg, &cfg_limit).unwrap();
            deltas.push(d.value);
        }
        assert!(
            deltas.windows(2).all(|w| w[0] > w[1]),
            "distances {deltas:?} must decrease along eps -> 0"
        );
        assert!(
            deltas[2] < 1e-2,
            "distance {} at eps = 1e-3 should be below 1e-2",
            deltas[2]
        );
    });
}

#[test]
fn criterion_8_lattice_restricted_flow() {
    criterion(8, "lattice-restricted scheme reaches the limit flow", || {
        let spec = zoo::grid_restricted_family();
        let coupling = CouplingSchedule::power(1.0, 2.0);
        let recovery = spec.recovery(&Point::scalar(1.0), &coupling);
        let tr = run_single(
            &spec.family,
            &coupling,
            &ErrorSchedule::default_uniform(),
            &recovery,
            1e-3,
            1.0,
            &InnerSolverConfig::default(),
        )
        .unwrap();
        let end = tr.eval(1.0).x();
        assert!(
            (end - E_INV).abs() <= 1e-2,
            "lattice flow ended at {end}, expected within 1e-2 of {E_INV}"
        );
        // The whole trajectory is exactly lattice-feasible.
        for v in &tr.values {
            assert!(
                spec.family.member(tr.epsilon).value(v).is_ok(),
                "iterate {v:?} left the lattice"
            );
        }
    });
}

#[test]
fn criterion_9_invariant_sweep_has_zero_violations() {
    criterion(9, "deterministic invariant sweep", || {
        let violations = invariant_sweep();
        assert!(
            violations.is_empty(),
            "{} violations:\n{}",
            violations.len(),
            violations.join("\n")
        );
    });
}

/// Re-checks the structural invariants on a fixed deterministic grid of
/// functionals, steps and centers, collecting every violation.
fn invariant_sweep() -> Vec<String> {
    let mut violations = Vec::new();
    let mut check = |ok: bool, msg: String| {
        if !ok {
            violations.push(msg);
        }
    };

    // Certified prox bounds and oracle agreement.
    let palette: Vec<(&str, Functional, CoercivityCertificate, InnerSolverConfig)> = vec![
        ("quadratic", quadratic(), free_cert(), InnerSolverConfig::default()),
        (
            "oscillatory",
            Functional::smooth_1d(
                |x| x * x + 0.02f64.sqrt() * (x / 0.02).cos().powi(2),
                |x| 2.0 * x - (0.02f64.sqrt() / 0.02) * (2.0 * x / 0.02).sin(),
            ),
            free_cert(),
            {
                let mut cfg = InnerSolverConfig::default();
                cfg.min_feature_scale = Some(0.02 / 4.0);
                cfg
            },
        ),
        (
            "perturbation",
            Functional::smooth_1d(
                |x| 0.5 * x * x + 0.05 * (x / 0.05f64.sqrt()).sin(),
                |x| x + 0.05f64.sqrt() * (x / 0.05f64.sqrt()).cos(),
            ),
            CoercivityCertificate::new(1.0, 0.0, Point::scalar(0.0)).unwrap(),
            InnerSolverConfig::default(),
        ),
        (
            "absolute value",
            Functional::new(|p: &Point| ExtReal::Finite(p.x().abs())),
            free_cert(),
            InnerSolverConfig::default(),
        ),
    ];
    for (name, f, cert, cfg) in &palette {
        for &tau in &[0.01, 0.2] {
            for &u in &[-1.7, 0.0, 2.3] {
                let u = Point::scalar(u);
                let fu = f.value(&u).unwrap();
                let res = moreau_yosida(f, cert, tau, &u, cfg).unwrap();
                check(
                    res.value <= fu,
                    format!("{name}: prox value above center value at tau {tau}"),
                );
                check(
                    res.value >= -cert.a,
                    format!("{name}: prox value below certificate floor at tau {tau}"),
                );
                let r = prox_search_radius(f, cert, tau, &u).unwrap();
                check(
                    res.minimizer.distance(&u) <= r * (1.0 + 1e-12),
                    format!("{name}: minimizer escaped the certified ball at tau {tau}"),
                );
                let oracle = exhaustive_prox_oracle(f, cert, tau, &u, 40_000).unwrap();
                let tol = 10.0 * res.certified_gap + oracle.resolution_bound + 1e-9;
                check(
                    (res.value - oracle.result.value).abs() <= tol,
                    format!("{name}: solver disagrees with the exhaustive oracle at tau {tau}"),
                );
                let again = moreau_yosida(f, cert, tau, &u, cfg).unwrap();
                check(
                    again.value.to_bits() == res.value.to_bits()
                        && again.minimizer == res.minimizer,
                    format!("{name}: repeated prox call not bit-identical at tau {tau}"),
                );
            }
        }
    }

    // Scheme estimates across the whole family registry.
    for spec in zoo::registry() {
        let coupling = CouplingSchedule::constant(0.05);
        let errors = ErrorSchedule::default_uniform();
        let recovery = spec.recovery(&Point::scalar(1.3), &coupling);
        let tau = 0.05;
        let cfg = spec
            .solver_config(&InnerSolverConfig::default(), &coupling, tau)
            .unwrap();
        let tr = run_single(&spec.family, &coupling, &errors, &recovery, tau, 0.5, &cfg)
            .unwrap();
        let name = &spec.name;
        let mut prev = tr.initial_energy;
        for &e in &tr.energies {
            check(e <= prev, format!("{name}: member energy increased along the scheme"));
            prev = e;
        }
        let n = tr.n_steps();
        let drop = tr.initial_energy - tr.energies[n - 1];
        let slack = 1e-10 * n as f64 * (1.0 + tr.initial_energy.abs());
        check(
            tr.displacement_sum() <= drop + errors.total_budget(tau, n) + slack,
            format!("{name}: dissipation exceeds energy drop plus budget"),
        );
        let bound =
            gronwall_bound(&spec.family, &coupling, &errors, &recovery, tau, 0.5).unwrap();
        for v in &tr.values {
            let d = v.distance(&spec.family.certificate.u_star);
            check(d * d <= bound + 1e-12, format!("{name}: iterate escaped the a-priori ball"));
        }
        let (s, t) = (0.12, 0.43);
        check(
            tr.eval(s).distance(tr.eval(t))
                <= tr.path_length(tr.index_at(s), tr.index_at(t)) + 1e-12,
            format!("{name}: interpolant jump exceeds the path length"),
        );
    }

    // Pseudometric laws of the computable distance on fixed quadratics.
    let make = |scale: f64, shift: f64, offset: f64| {
        Functional::new(move |p: &Point| {
            ExtReal::Finite(scale * (p.x() - shift) * (p.x() - shift) + offset)
        })
    };
    let f = make(1.0, 0.0, 0.0);
    let g = make(0.7, 0.4, 0.1);
    let h = make(1.3, -0.6, -0.2);
    let cert = CoercivityCertificate::new(1.0, 0.0, Point::scalar(0.0)).unwrap();
    let gspec = GammaDistanceSpec::default();
    let cfg = InnerSolverConfig::default();
    let d = |x: &Functional, y: &Functional| {
        gamma_delta(x, &cert, y, &cert, &gspec, &cfg, &cfg).unwrap().value
    };
    check(d(&f, &f) == 0.0, "distance of a functional to itself is not zero".into());
    check(
        (d(&f, &g) - d(&g, &f)).abs() <= 1e-14,
        "distance is not symmetric".into(),
    );
    check(
        d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-12,
        "triangle inequality fails".into(),
    );

    violations
}
