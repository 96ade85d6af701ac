//! Shared domain types: points, extended-real functionals, coercivity
//! certificates, families and the two schedules (ε(τ) coupling and per-step
//! error budgets).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use thiserror::Error;

/// Half side length of the fallback bounding box used when a functional does
/// not declare a domain hint. Brute-force searches need a finite box; a warning
/// is attached to results obtained under the fallback.
pub const DEFAULT_DOMAIN_HALF_WIDTH: f64 = 1e10;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time step {tau} too large for certificate curvature B = {b}: need 2*tau*B < 1")]
    TauTooLarge { tau: f64, b: f64 },
    #[error("functional is infinite at the query point")]
    InfiniteValue,
    #[error("feature scale {feature_scale} needs {needed} grid points over a window of width {width}, budget is {budget}")]
    GridTooCoarse {
        feature_scale: f64,
        width: f64,
        needed: usize,
        budget: usize,
    },
    #[error("inner solver certified gap {gap} exceeds the error budget {budget}")]
    BudgetTooTight { gap: f64, budget: f64 },
    #[error("trajectory left the a-priori ball at step {step}: d^2 = {observed} > 1000 * bound {bound}")]
    DivergedTrajectory { step: usize, observed: f64, bound: f64 },
    #[error("probe requires an analytic slope on the family limit")]
    MissingAnalyticSlope,
    #[error("time step {0} outside the admissible range (0, 1)")]
    TauOutOfRange(f64),
    #[error("no sampled epsilon admissible for tau = {tau}")]
    NoAdmissibleEpsilon { tau: f64 },
    #[error("coercivity certificate violated at {point:?}: value {value} < bound {bound}")]
    CoercivityViolation { point: Vec<f64>, value: f64, bound: f64 },
    #[error("point coordinates must be finite, got {0}")]
    NonFiniteCoordinate(f64),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Extended real value in (-inf, +inf]: finite or positive infinity. Negative
/// infinity is unrepresentable by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::PosInf => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Collapses to f64 with +inf for the infinite tag (handy for comparisons).
    pub fn as_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn from_f64(x: f64) -> ExtReal {
        if x == f64::INFINITY {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(x)
        }
    }
}

/// A point of the state space: finitely many finite coordinates, Euclidean
/// metric. Equality, ordering and hashing are coordinate-wise and exact so that
/// tie-breaking downstream is deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Point> {
        for &c in &coords {
            if !c.is_finite() {
                return Err(Error::NonFiniteCoordinate(c));
            }
        }
        // Normalize -0.0 so equality and hashing agree.
        Ok(Point(coords.into_iter().map(|c| if c == 0.0 { 0.0 } else { c }).collect()))
    }

    pub fn scalar(x: f64) -> Point {
        Point::new(vec![x]).expect("scalar point requires a finite coordinate")
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Single coordinate of a one-dimensional point.
    pub fn x(&self) -> f64 {
        assert_eq!(self.0.len(), 1, "x() requires a one-dimensional point");
        self.0[0]
    }

    /// Overwrites one coordinate in place. Used by the inner solver to keep
    /// grid loops allocation-free; callers must pass finite values.
    pub(crate) fn set(&mut self, i: usize, x: f64) {
        debug_assert!(x.is_finite());
        self.0[i] = x;
    }

    pub fn distance(&self, other: &Point) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Point) -> bool {
        self.0 == other.0
    }
}

impl Eq for Point {}

impl Hash for Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for &c in &self.0 {
            c.to_bits().hash(state);
        }
    }
}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Point) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Point {
    /// Lexicographic coordinate order; total because coordinates are finite.
    fn cmp(&self, other: &Point) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.partial_cmp(b).expect("finite coordinates") {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// Axis-aligned box, used as a domain hint for search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn symmetric(dim: usize, half_width: f64) -> BoundingBox {
        BoundingBox {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }
}

/// Restriction of a functional to a one-dimensional lattice
/// {offset + k*spacing : k integer, |offset + k*spacing| <= box_radius}.
/// Declaring the lattice lets the inner solver enumerate the feasible set
/// exactly instead of sampling (almost every dense-grid sample would be +inf).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lattice {
    pub offset: f64,
    pub spacing: f64,
    pub box_radius: f64,
}

impl Lattice {
    /// Nearest lattice point to x, clamped into the box.
    pub fn snap(&self, x: f64) -> f64 {
        let k = ((x - self.offset) / self.spacing).round();
        let max_k = ((self.box_radius - self.offset) / self.spacing).floor();
        let min_k = ((-self.box_radius - self.offset) / self.spacing).ceil();
        let k = k.clamp(min_k, max_k);
        self.offset + k * self.spacing
    }

    pub fn contains(&self, x: f64) -> bool {
        if x.abs() > self.box_radius {
            return false;
        }
        let k = ((x - self.offset) / self.spacing).round();
        let rel = x - (self.offset + k * self.spacing);
        rel.abs() <= self.spacing * 1e-9
    }
}

type EvalFn = dyn Fn(&Point) -> ExtReal + Send + Sync;
type GradFn = dyn Fn(&Point) -> Point + Send + Sync;

/// An extended-real functional on the state space. Evaluation is deterministic
/// and never returns negative infinity.
#[derive(Clone)]
pub struct Functional {
    eval: Arc<EvalFn>,
    pub domain_hint: Option<BoundingBox>,
    derivative: Option<Arc<GradFn>>,
    pub lattice: Option<Lattice>,
}

impl std::fmt::Debug for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Functional")
            .field("domain_hint", &self.domain_hint)
            .field("has_derivative", &self.derivative.is_some())
            .field("lattice", &self.lattice)
            .finish()
    }
}

impl Functional {
    pub fn new(eval: impl Fn(&Point) -> ExtReal + Send + Sync + 'static) -> Functional {
        Functional {
            eval: Arc::new(eval),
            domain_hint: None,
            derivative: None,
            lattice: None,
        }
    }

    /// Convenience constructor for smooth scalar functionals with an analytic
    /// derivative.
    pub fn smooth_1d(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Functional {
        Functional::new(move |p: &Point| ExtReal::Finite(f(p.x())))
            .with_derivative(move |p: &Point| Point::scalar(df(p.x())))
    }

    pub fn with_domain_hint(mut self, hint: BoundingBox) -> Functional {
        self.domain_hint = Some(hint);
        self
    }

    pub fn with_derivative(
        mut self,
        grad: impl Fn(&Point) -> Point + Send + Sync + 'static,
    ) -> Functional {
        self.derivative = Some(Arc::new(grad));
        self
    }

    pub fn with_lattice(mut self, lattice: Lattice) -> Functional {
        self.lattice = Some(lattice);
        self
    }

    pub fn evaluate(&self, p: &Point) -> ExtReal {
        (self.eval)(p)
    }

    /// Finite value or `InfiniteValue`.
    pub fn value(&self, p: &Point) -> Result<f64> {
        self.evaluate(p).finite().ok_or(Error::InfiniteValue)
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn derivative(&self, p: &Point) -> Option<Point> {
        self.derivative.as_ref().map(|g| g(p))
    }

    /// Domain hint, falling back to the default box. The boolean is true when
    /// the fallback was used.
    pub fn domain_hint_or_default(&self, dim: usize) -> (BoundingBox, bool) {
        match &self.domain_hint {
            Some(h) => (h.clone(), false),
            None => (BoundingBox::symmetric(dim, DEFAULT_DOMAIN_HALF_WIDTH), true),
        }
    }
}

/// Constants (A, B, u_star) with f >= -A - B d(., u_star)^2, valid uniformly
/// over a family. They yield a-priori search radii for proximal steps and the
/// constants of the discrete Gronwall bound.
#[derive(Debug, Clone)]
pub struct CoercivityCertificate {
    pub a: f64,
    pub b: f64,
    pub u_star: Point,
}

impl CoercivityCertificate {
    pub fn new(a: f64, b: f64, u_star: Point) -> Result<CoercivityCertificate> {
        if !(a >= 0.0) || !(b >= 0.0) {
            return Err(Error::Invalid(format!(
                "certificate constants must be nonnegative, got A = {a}, B = {b}"
            )));
        }
        Ok(CoercivityCertificate { a, b, u_star })
    }

    pub fn lower_bound(&self, p: &Point) -> f64 {
        let d = p.distance(&self.u_star);
        -self.a - self.b * d * d
    }

    /// Samples `n` points uniformly in the hint box and checks the coercivity
    /// inequality at each (with a small floating-point slack).
    pub fn spot_check(&self, f: &Functional, dim: usize, n: usize, seed: u64) -> Result<()> {
        let (hint, _) = f.domain_hint_or_default(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let coords: Vec<f64> = hint
                .lower
                .iter()
                .zip(&hint.upper)
                .map(|(&lo, &hi)| rng.gen_range(lo..=hi))
                .collect();
            let p = Point::new(coords)?;
            if let ExtReal::Finite(v) = f.evaluate(&p) {
                let bound = self.lower_bound(&p);
                let slack = 1e-9 * (1.0 + v.abs() + bound.abs());
                if v < bound - slack {
                    return Err(Error::CoercivityViolation {
                        point: p.coords().to_vec(),
                        value: v,
                        bound,
                    });
                }
            }
        }
        Ok(())
    }
}

type MemberFn = dyn Fn(f64) -> Functional + Send + Sync;
type SlopeFn = dyn Fn(&Point) -> f64 + Send + Sync;
type FlowFn = dyn Fn(&Point, f64) -> Point + Send + Sync;

/// A parameterized family of functionals together with its limit, a shared
/// coercivity certificate and optional analytic metadata.
#[derive(Clone)]
pub struct FunctionalFamily {
    member: Arc<MemberFn>,
    pub limit: Functional,
    pub certificate: CoercivityCertificate,
    limit_slope: Option<Arc<SlopeFn>>,
    exact_flow: Option<Arc<FlowFn>>,
}

impl FunctionalFamily {
    pub fn new(
        member: impl Fn(f64) -> Functional + Send + Sync + 'static,
        limit: Functional,
        certificate: CoercivityCertificate,
    ) -> FunctionalFamily {
        FunctionalFamily {
            member: Arc::new(member),
            limit,
            certificate,
            limit_slope: None,
            exact_flow: None,
        }
    }

    pub fn with_limit_slope(
        mut self,
        slope: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> FunctionalFamily {
        self.limit_slope = Some(Arc::new(slope));
        self
    }

    pub fn with_exact_flow(
        mut self,
        flow: impl Fn(&Point, f64) -> Point + Send + Sync + 'static,
    ) -> FunctionalFamily {
        self.exact_flow = Some(Arc::new(flow));
        self
    }

    pub fn member(&self, epsilon: f64) -> Functional {
        assert!(epsilon > 0.0, "family parameter must be positive");
        (self.member)(epsilon)
    }

    pub fn limit_slope(&self, p: &Point) -> Option<f64> {
        self.limit_slope.as_ref().map(|s| s(p))
    }

    pub fn has_limit_slope(&self) -> bool {
        self.limit_slope.is_some()
    }

    pub fn exact_flow(&self, p: &Point, t: f64) -> Option<Point> {
        self.exact_flow.as_ref().map(|f| f(p, t))
    }

    pub fn has_exact_flow(&self) -> bool {
        self.exact_flow.is_some()
    }
}

/// The rule ε = ε(τ) tying the approximation parameter to the time step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CouplingSchedule {
    /// ε(τ) = c · τ^β
    Power { c: f64, beta: f64 },
    /// ε(τ) = ε₀ for every τ
    Constant { epsilon: f64 },
    /// Explicit (τ, ε) table; lookups require an exact τ match.
    Table { entries: BTreeMap<String, f64> },
}

impl CouplingSchedule {
    pub fn power(c: f64, beta: f64) -> CouplingSchedule {
        CouplingSchedule::Power { c, beta }
    }

    pub fn constant(epsilon: f64) -> CouplingSchedule {
        CouplingSchedule::Constant { epsilon }
    }

    pub fn table(entries: &[(f64, f64)]) -> CouplingSchedule {
        CouplingSchedule::Table {
            entries: entries
                .iter()
                .map(|&(tau, eps)| (format!("{tau:e}"), eps))
                .collect(),
        }
    }

    pub fn epsilon(&self, tau: f64) -> Result<f64> {
        assert!(tau > 0.0, "time step must be positive");
        let eps = match self {
            CouplingSchedule::Power { c, beta } => c * tau.powf(*beta),
            CouplingSchedule::Constant { epsilon } => *epsilon,
            CouplingSchedule::Table { entries } => *entries
                .get(&format!("{tau:e}"))
                .ok_or_else(|| Error::Invalid(format!("no table entry for tau = {tau:e}")))?,
        };
        if eps > 0.0 && eps.is_finite() {
            Ok(eps)
        } else {
            Err(Error::Invalid(format!("schedule produced epsilon = {eps} at tau = {tau}")))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CouplingSchedule::Power { c, beta } => format!("epsilon(tau) = {c} * tau^{beta}"),
            CouplingSchedule::Constant { epsilon } => format!("epsilon(tau) = {epsilon}"),
            CouplingSchedule::Table { entries } => format!("explicit table ({} entries)", entries.len()),
        }
    }
}

type GammaFn = dyn Fn(f64) -> f64 + Send + Sync;
type PerStepFn = dyn Fn(f64, usize) -> f64 + Send + Sync;

/// Per-step error budgets for the relaxed minimization. The uniform kind
/// allows each step an error of γ(τ)·τ with γ(τ) → 0; the per-step kind
/// allows γ^{(n)}(τ) with vanishing partial sums over n ≤ N_τ.
#[derive(Clone)]
pub enum ErrorSchedule {
    Uniform(Arc<GammaFn>),
    PerStep(Arc<PerStepFn>),
}

impl ErrorSchedule {
    /// The default schedule γ(τ) = τ, i.e. a per-step budget of τ².
    pub fn default_uniform() -> ErrorSchedule {
        ErrorSchedule::uniform(|tau| tau)
    }

    pub fn uniform(gamma: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ErrorSchedule {
        ErrorSchedule::Uniform(Arc::new(gamma))
    }

    pub fn per_step(gamma: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> ErrorSchedule {
        ErrorSchedule::PerStep(Arc::new(gamma))
    }

    /// Error budget allowed in step n (1-based) at time step τ.
    pub fn budget(&self, tau: f64, n: usize) -> f64 {
        match self {
            ErrorSchedule::Uniform(gamma) => gamma(tau) * tau,
            ErrorSchedule::PerStep(gamma) => gamma(tau, n),
        }
    }

    /// Total budget over the first n steps.
    pub fn total_budget(&self, tau: f64, n: usize) -> f64 {
        match self {
            ErrorSchedule::Uniform(gamma) => gamma(tau) * tau * n as f64,
            ErrorSchedule::PerStep(gamma) => (1..=n).map(|j| gamma(tau, j)).sum(),
        }
    }
}

impl std::fmt::Debug for ErrorSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErrorSchedule::Uniform(_) => write!(f, "ErrorSchedule::Uniform"),
            ErrorSchedule::PerStep(_) => write!(f, "ErrorSchedule::PerStep"),
        }
    }
}

/// Radius R such that every v with f(v) + d²(v,u)/(2τ) ≤ f(u) lies in the
/// closed ball of radius R around u. In particular the global minimizer of the
/// proximal objective does. Derived from the coercivity certificate: the
/// admissible displacements d satisfy
///
/// ```text
/// d²(1 − 2τB) − 4τB·d(u,u⋆)·d ≤ 2τ(f(u) + A + B·d(u,u⋆)²)
/// ```
///
/// and R is the positive root. With B = 0 this degenerates to
/// R = sqrt(2τ(f(u) + A)).
pub fn prox_search_radius(
    f: &Functional,
    cert: &CoercivityCertificate,
    tau: f64,
    u: &Point,
) -> Result<f64> {
    assert!(tau > 0.0, "time step must be positive");
    if 2.0 * tau * cert.b >= 1.0 {
        return Err(Error::TauTooLarge { tau, b: cert.b });
    }
    let fu = f.value(u)?;
    let ds = u.distance(&cert.u_star);
    let c = (2.0 * tau * (fu + cert.a + cert.b * ds * ds)).max(0.0);
    let p = 1.0 - 2.0 * tau * cert.b;
    let q = 4.0 * tau * cert.b * ds;
    Ok((q + (q * q + 4.0 * p * c).sqrt()) / (2.0 * p))
}
