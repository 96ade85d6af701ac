use criterion::{criterion_group, criterion_main, Criterion};
use mmlab_core::prox::InnerSolverConfig;
use mmlab_core::scheme::run_single;
use mmlab_core::zoo;
use mmlab_core::{CouplingSchedule, ErrorSchedule, Point};

fn bench_run_single(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_single");
    group.sample_size(20);
    for name in ["quadratic", "oscillatory"] {
        let spec = zoo::build(name, &Default::default()).unwrap();
        let coupling = CouplingSchedule::constant(1e-2);
        let errors = ErrorSchedule::default_uniform();
        let recovery = spec.recovery(&Point::scalar(1.0), &coupling);
        let tau = 1e-2;
        let cfg = spec
            .solver_config(&InnerSolverConfig::default(), &coupling, tau)
            .unwrap();
        group.bench_function(format!("{name} tau=1e-2 T=1"), |b| {
            b.iter(|| {
                run_single(&spec.family, &coupling, &errors, &recovery, tau, 1.0, &cfg).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_run_single);
criterion_main!(benches);
