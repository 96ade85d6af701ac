//! Shared fixtures for the criterion benches.

use mmlab_core::prox::InnerSolverConfig;
use mmlab_core::{CoercivityCertificate, Functional, Point};

pub fn quadratic() -> (Functional, CoercivityCertificate) {
    let f = Functional::smooth_1d(|x| 0.5 * x * x, |x| x);
    let cert = CoercivityCertificate::new(0.0, 0.0, Point::scalar(0.0))
        .expect("certificate constants are finite");
    (f, cert)
}

/// x² + √ε·cos²(x/ε): the stiff member that exercises the zoom stage.
pub fn oscillatory(eps: f64) -> (Functional, CoercivityCertificate, InnerSolverConfig) {
    let rho = eps.sqrt();
    let f = Functional::smooth_1d(
        move |x| x * x + rho * (x / eps).cos().powi(2),
        move |x| 2.0 * x - (rho / eps) * (2.0 * x / eps).sin(),
    );
    let cert = CoercivityCertificate::new(0.0, 0.0, Point::scalar(0.0))
        .expect("certificate constants are finite");
    let mut cfg = InnerSolverConfig::default();
    cfg.min_feature_scale = Some(eps / 4.0);
    (f, cert, cfg)
}
