use criterion::{criterion_group, criterion_main, Criterion};
use lqr_accel::lqr::care_oracle;
use lqr_accel::olqr::{a_olqr, AOlqrConfig};
use lqr_accel::slqr::{accel_solve, gd_solve, simulate_hybrid_flow, AccelConfig, GdConfig};
use lqr_accel::Matrix;
use lqr_accel_bench::{example1, example2, example4, olqr_chain, Scenario};
use std::hint::black_box;

const STEPS: u64 = 2_000;

fn fixed_budget(c: &mut Criterion, s: &Scenario) {
    let p = &s.problem;
    let gd_cfg = GdConfig { max_iters: STEPS, ..GdConfig::default_for(p, &s.k0).unwrap() };
    let accel_cfg = AccelConfig { max_iters: STEPS, ..AccelConfig::defaults(p, &s.k0, None).unwrap() };
    c.bench_function(&format!("{}/gd_{STEPS}", s.name), |b| b.iter(|| gd_solve(p, black_box(&s.k0), &gd_cfg).unwrap()));
    c.bench_function(&format!("{}/accel_{STEPS}", s.name), |b| b.iter(|| accel_solve(p, black_box(&s.k0), &accel_cfg).unwrap()));
}

fn slqr(c: &mut Criterion) {
    for s in [example1(), example2(), example4(10, 3, 0)] {
        fixed_budget(c, &s);
    }
    let s = example1();
    c.bench_function("example1/care_oracle", |b| b.iter(|| care_oracle(&s.problem, black_box(&s.k0)).unwrap()));
}

fn flow(c: &mut Criterion) {
    let s = example2();
    let cfg = AccelConfig::defaults(&s.problem, &s.k0, None).unwrap();
    let dt = 1e-3f64.min(cfg.t / 10.0);
    let v0 = Matrix::zeros(1, 3);
    c.bench_function("example2/hybrid_flow_500_steps", |b| {
        b.iter(|| simulate_hybrid_flow(&s.problem, black_box(&s.k0), &v0, &cfg, 500.0 * dt, dt).unwrap())
    });
}

fn olqr(c: &mut Criterion) {
    let s = olqr_chain();
    let mut group = c.benchmark_group("olqr_chain3/a_olqr");
    group.sample_size(10);
    for eps in [1e-2, 1e-3] {
        let cfg = AOlqrConfig { seed: 1, ..AOlqrConfig::from_problem(&s.problem, &s.k0, eps).unwrap() };
        group.bench_function(format!("eps_{eps:e}"), |b| b.iter(|| a_olqr(&s.problem, black_box(&s.k0), &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, slqr, flow, olqr);
criterion_main!(benches);
