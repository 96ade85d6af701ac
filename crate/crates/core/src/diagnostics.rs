//! Quantitative diagnostics: local slopes, the De Giorgi ratio
//! (f − Y_τf)/τ, liminf probes for the slope and ratio inequalities along a
//! coupling, the energy-dissipation residual of a candidate limit curve, a
//! computable Γ-convergence distance and a search for admissible ε(τ)
//! schedules.

use crate::prox::{moreau_yosida, InnerSolverConfig};
use crate::types::*;
use crate::zoo::FamilySpec;
use serde::{Deserialize, Serialize};

/// How to estimate the metric slope at a point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SlopeMethod {
    /// |∇f| from the declared derivative.
    Analytic,
    /// Central differences with step h per axis.
    FiniteDifference { h: f64 },
    /// max (f(u) − f(v))⁺ / d(u, v) over axis samples at radius ≤ r, with the
    /// radius halved `shrinks` times; the smallest-radius estimate is
    /// returned. Converges to the descending slope for smooth f.
    DescentProbe { radius: f64, points: usize, shrinks: usize },
}

pub fn local_slope(f: &Functional, p: &Point, method: &SlopeMethod) -> Result<f64> {
    match method {
        SlopeMethod::Analytic => f
            .derivative(p)
            .map(|g| g.coords().iter().map(|c| c * c).sum::<f64>().sqrt())
            .ok_or(Error::MissingAnalyticSlope),
        SlopeMethod::FiniteDifference { h } => {
            assert!(*h > 0.0, "difference step must be positive");
            let mut sq = 0.0;
            for axis in 0..p.dim() {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus.set(axis, p.coords()[axis] + h);
                minus.set(axis, p.coords()[axis] - h);
                let g = (f.value(&plus)? - f.value(&minus)?) / (2.0 * h);
                sq += g * g;
            }
            Ok(sq.sqrt())
        }
        SlopeMethod::DescentProbe { radius, points, shrinks } => {
            assert!(*radius > 0.0 && *points > 0);
            let fp = f.value(p)?;
            let mut r = *radius;
            let mut est = 0.0f64;
            for _ in 0..=*shrinks {
                est = 0.0;
                for axis in 0..p.dim() {
                    for i in 1..=*points {
                        let d = r * i as f64 / *points as f64;
                        for sign in [-1.0, 1.0] {
                            let mut v = p.clone();
                            v.set(axis, p.coords()[axis] + sign * d);
                            if let ExtReal::Finite(fv) = f.evaluate(&v) {
                                est = est.max((fp - fv).max(0.0) / d);
                            }
                        }
                    }
                }
                r /= 2.0;
            }
            Ok(est)
        }
    }
}

/// (f(u) − Y_τf(u))/τ computed from the certified inner solver. The solver
/// overestimates Y_τf, so `value` underestimates the true ratio by at most
/// `gap` = certified_gap/τ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeGiorgiRatio {
    pub tau: f64,
    pub value: f64,
    pub gap: f64,
}

pub fn de_giorgi_ratio(
    f: &Functional,
    cert: &CoercivityCertificate,
    tau: f64,
    u: &Point,
    cfg: &InnerSolverConfig,
) -> Result<DeGiorgiRatio> {
    let fu = f.value(u)?;
    let prox = moreau_yosida(f, cert, tau, u, cfg)?;
    Ok(DeGiorgiRatio {
        tau,
        value: (fu - prox.value) / tau,
        gap: prox.certified_gap / tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeVerdict {
    Satisfied,
    Violated,
    Inconclusive,
}

/// One (τ, ε(τ)) sample of the ratio probe.
#[derive(Debug, Clone, Serialize)]
pub struct RatioSample {
    pub tau: f64,
    pub epsilon: f64,
    pub point: Point,
    pub ratio: f64,
    pub gap: f64,
    pub member_energy: f64,
}

/// Outcome of probing liminf (φ_ε − Y_τφ_ε)/τ ≥ ½|∂φ|²(u) along a coupling.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    /// ½|∂φ|²(u).
    pub target: f64,
    pub samples: Vec<RatioSample>,
    /// Minimum ratio over the tail (the 3 smallest τ).
    pub liminf_estimate: f64,
    /// Resolution of the probe: solver gaps plus the O(τ) bias of the ratio
    /// itself at finite τ.
    pub tolerance: f64,
    pub verdict: ProbeVerdict,
    pub limit_energy: f64,
    /// max |φ_ε(point) − φ(u)| over the tail; small values indicate the probe
    /// points are energy-convergent, so the verdict speaks about u itself.
    pub energy_gap_tail: f64,
}

/// Probes the lower ratio bound at points approaching `u` along the coupling.
/// The probe points should be energy-convergent approximations of u (e.g.
/// recovered initial data or scheme iterates); probing at a raw point that the
/// members penalize reports on that point's own microstructure instead.
pub fn crucial_assumption_probe(
    spec: &FamilySpec,
    coupling: &CouplingSchedule,
    taus: &[f64],
    points: &[Point],
    u: &Point,
    base: &InnerSolverConfig,
) -> Result<ProbeReport> {
    if taus.len() != points.len() || taus.is_empty() {
        return Err(Error::Invalid("need one probe point per tau".into()));
    }
    if !taus.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Invalid("taus must be strictly decreasing".into()));
    }
    let s = spec.family.limit_slope(u).ok_or(Error::MissingAnalyticSlope)?;
    let target = 0.5 * s * s;
    let limit_energy = spec.family.limit.value(u)?;

    let mut samples = Vec::with_capacity(taus.len());
    for (&tau, point) in taus.iter().zip(points) {
        let epsilon = coupling.epsilon(tau)?;
        let member = spec.family.member(epsilon);
        let cfg = spec.solver_config(base, coupling, tau)?;
        let ratio = de_giorgi_ratio(&member, &spec.family.certificate, tau, point, &cfg)?;
        samples.push(RatioSample {
            tau,
            epsilon,
            point: point.clone(),
            ratio: ratio.value,
            gap: ratio.gap,
            member_energy: member.value(point)?,
        });
    }

    let tail_len = samples.len().min(3);
    let tail = &samples[samples.len() - tail_len..];
    let max_gap = tail.iter().map(|s| s.gap).fold(0.0f64, f64::max);
    let tau_tail_max = tail.iter().map(|s| s.tau).fold(0.0f64, f64::max);
    let tolerance = 10.0 * max_gap + 4.0 * target * tau_tail_max;
    let liminf_estimate = tail.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
    let energy_gap_tail = tail
        .iter()
        .map(|s| (s.member_energy - limit_energy).abs())
        .fold(0.0f64, f64::max);
    let verdict = if liminf_estimate >= target - tolerance {
        ProbeVerdict::Satisfied
    } else if liminf_estimate < target - 2.0 * tolerance {
        ProbeVerdict::Violated
    } else {
        ProbeVerdict::Inconclusive
    };
    Ok(ProbeReport {
        target,
        samples,
        liminf_estimate,
        tolerance,
        verdict,
        limit_energy,
        energy_gap_tail,
    })
}

/// φ(u(0)) − φ(u(T)) − ½∫|u'|² − ½∫|∂φ|²(u): nonnegative (up to quadrature
/// error) exactly when the curve satisfies the energy-dissipation inequality.
/// The metric speed is taken by symmetric differences; the integrals by the
/// trapezoid rule on `quad_points` intervals.
pub fn edi_residual(
    energy: &Functional,
    slope: impl Fn(&Point) -> f64,
    curve: impl Fn(f64) -> Point,
    horizon: f64,
    quad_points: usize,
) -> Result<f64> {
    assert!(horizon > 0.0 && quad_points >= 2);
    let dt = horizon / quad_points as f64;
    let h = dt * 1e-3;
    let speed = |t: f64| {
        let (a, b) = if t < h {
            (t, t + h)
        } else if t + h > horizon {
            (t - h, t)
        } else {
            (t - h, t + h)
        };
        curve(a).distance(&curve(b)) / (b - a)
    };
    let mut dissipation = 0.0;
    for i in 0..=quad_points {
        let t = i as f64 * dt;
        let p = curve(t);
        let s = slope(&p);
        let v = speed(t);
        let w = if i == 0 || i == quad_points { 0.5 } else { 1.0 };
        dissipation += w * 0.5 * (v * v + s * s);
    }
    dissipation *= dt;
    Ok(energy.value(&curve(0.0))? - energy.value(&curve(horizon))? - dissipation)
}

/// Outcome of probing liminf |∂φ_ε|(u_ε) ≥ |∂φ|(u) along ε → 0.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeLiminfReport {
    /// |∂φ|(u).
    pub target: f64,
    /// (ε, |∇φ_ε|(point)) pairs in the given ε order.
    pub estimates: Vec<(f64, f64)>,
    pub liminf_estimate: f64,
    pub tolerance: f64,
    pub verdict: ProbeVerdict,
}

/// Member slopes at points approaching u, for a strictly decreasing ε list.
/// Requires analytic derivatives on both the members and the limit.
pub fn slope_liminf_probe(
    family: &FunctionalFamily,
    epsilons: &[f64],
    points: &[Point],
    u: &Point,
) -> Result<SlopeLiminfReport> {
    if epsilons.len() != points.len() || epsilons.is_empty() {
        return Err(Error::Invalid("need one probe point per epsilon".into()));
    }
    if !epsilons.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Invalid("epsilons must be strictly decreasing".into()));
    }
    let target = family.limit_slope(u).ok_or(Error::MissingAnalyticSlope)?;
    let mut estimates = Vec::with_capacity(epsilons.len());
    for (&eps, point) in epsilons.iter().zip(points) {
        let member = family.member(eps);
        let slope = local_slope(&member, point, &SlopeMethod::Analytic)?;
        estimates.push((eps, slope));
    }
    let tail_len = estimates.len().min(3);
    let tail = &estimates[estimates.len() - tail_len..];
    let eps_tail_max = tail.iter().map(|e| e.0).fold(0.0f64, f64::max);
    // Member slopes may deviate from the limit slope at rate sqrt(eps) (an
    // eps-amplitude wiggle at wavelength sqrt(eps) does exactly that), so the
    // probe resolution uses that modulus.
    let tolerance = 1e-9 + 4.0 * (1.0 + target) * eps_tail_max.sqrt();
    let liminf_estimate = tail.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let verdict = if liminf_estimate >= target - tolerance {
        ProbeVerdict::Satisfied
    } else if liminf_estimate < target - 2.0 * tolerance {
        ProbeVerdict::Violated
    } else {
        ProbeVerdict::Inconclusive
    };
    Ok(SlopeLiminfReport { target, estimates, liminf_estimate, tolerance, verdict })
}

/// Truncation depth of the Γ-distance: `levels` probe points and `levels`
/// regularization scales κ_j = 2^{−j} on [−half_width, half_width].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaDistanceSpec {
    pub levels: usize,
    pub half_width: f64,
}

impl Default for GammaDistanceSpec {
    fn default() -> GammaDistanceSpec {
        GammaDistanceSpec { levels: 8, half_width: 4.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaDistance {
    pub value: f64,
    /// Weight of the discarded tail terms; distances below this are not
    /// resolved.
    pub truncation: f64,
}

/// Probe points in midpoint-refinement order: 0, then the dyadic midpoints of
/// [−half, half] level by level, ascending within each level.
fn dyadic_probes(levels: usize, half: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut denom: i64 = 2;
    while pts.len() < levels {
        let mut k = -denom + 1;
        while k < denom && pts.len() < levels {
            pts.push(half * k as f64 / denom as f64);
            k += 2;
        }
        denom *= 2;
    }
    pts
}

fn squash(t: f64) -> f64 {
    t / (1.0 + t.abs())
}

/// Weighted comparison of Moreau–Yosida regularizations,
///
/// ```text
/// δ(f, g) = Σ_{i,j ≤ levels} 2^{−i−j} |Φ(Y_{κ_j}f(x_i)) − Φ(Y_{κ_j}g(x_i))|
/// ```
///
/// with Φ(t) = t/(1+|t|). A pseudometric whose convergence to zero tracks
/// Γ-convergence for equi-coercive families on the probe window.
pub fn gamma_delta(
    f: &Functional,
    cert_f: &CoercivityCertificate,
    g: &Functional,
    cert_g: &CoercivityCertificate,
    spec: &GammaDistanceSpec,
    cfg_f: &InnerSolverConfig,
    cfg_g: &InnerSolverConfig,
) -> Result<GammaDistance> {
    assert!(spec.levels >= 1 && spec.half_width > 0.0);
    let xs = dyadic_probes(spec.levels, spec.half_width);
    let mut value = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let p = Point::scalar(x);
        let wi = 2.0f64.powi(-(i as i32) - 1);
        for j in 1..=spec.levels {
            let kappa = 2.0f64.powi(-(j as i32));
            let yf = moreau_yosida(f, cert_f, kappa, &p, cfg_f)?.value;
            let yg = moreau_yosida(g, cert_g, kappa, &p, cfg_g)?.value;
            value += wi * 2.0f64.powi(-(j as i32)) * (squash(yf) - squash(yg)).abs();
        }
    }
    Ok(GammaDistance {
        value,
        truncation: 2.0f64.powi(1 - spec.levels as i32),
    })
}

/// For each τ, the largest candidate ε whose recovered probe point is
/// energy-convergent and whose De Giorgi ratio reaches the limit target
/// ½|∂φ|²(u) within `margin`. The result is an explicit coupling table;
/// `NoAdmissibleEpsilon` reports the first τ with no admissible candidate.
pub fn epsilon_schedule_search(
    spec: &FamilySpec,
    u: &Point,
    taus: &[f64],
    candidates: &[f64],
    margin: f64,
    base: &InnerSolverConfig,
) -> Result<CouplingSchedule> {
    if candidates.is_empty() || !candidates.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Invalid("candidates must be nonempty and strictly decreasing".into()));
    }
    assert!(margin > 0.0);
    let s = spec.family.limit_slope(u).ok_or(Error::MissingAnalyticSlope)?;
    let target = 0.5 * s * s;
    let limit_energy = spec.family.limit.value(u)?;

    let mut table = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut found = None;
        for &eps in candidates {
            let coupling = CouplingSchedule::constant(eps);
            let point = spec.recovery(u, &coupling).initial_for(tau);
            let member = spec.family.member(eps);
            let energy = member.value(&point)?;
            if (energy - limit_energy).abs() > margin * (1.0 + limit_energy.abs()) {
                continue;
            }
            let cfg = spec.solver_config(base, &coupling, tau)?;
            let ratio = de_giorgi_ratio(&member, &spec.family.certificate, tau, &point, &cfg)?;
            if ratio.value + ratio.gap >= target - margin {
                found = Some(eps);
                break;
            }
        }
        match found {
            Some(eps) => table.push((tau, eps)),
            None => return Err(Error::NoAdmissibleEpsilon { tau }),
        }
    }
    Ok(CouplingSchedule::table(&table))
}
