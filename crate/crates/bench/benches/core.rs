use colombeau::forms::random_form;
use colombeau::ode::OdeOptions;
use colombeau::*;
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn jets(c: &mut Criterion) {
    let v = Jet::variables(&[0.3, -0.7], 6);
    c.bench_function("jet sin(xy) order 6", |b| b.iter(|| black_box(&v[0]).mul(&v[1]).sin()));
}

fn classification(c: &mut Criterion) {
    let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
    let delta = embed_rn(&DistributionSpec::delta(1), &rho).unwrap();
    let dom = BoxDomain::interval(-1.0, 1.0);
    let s = Settings::default();
    c.bench_function("classify ι(δ) on [-1, 1]", |b| b.iter(|| classify_net(&delta, &[0], &dom, &s, None).unwrap()));
}

fn exterior(c: &mut Criterion) {
    let a = random_form(3, 1, 7);
    let da = exterior_d(&a).unwrap();
    let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![0.01 * i as f64, -0.5, 0.25]).collect();
    c.bench_function("dA at 100 points in ℝ³", |b| b.iter(|| da.max_abs_at(0, 1e-2, &pts)));
}

fn oscillator(c: &mut Criterion) {
    let sys = HamiltonianSystem::singular_oscillator(StrictDeltaNet::bump(), 1.0, -1.0);
    let opts = OdeOptions::default();
    c.bench_function("singular oscillator ε = 1e-3", |b| {
        b.iter(|| solve_singular_oscillator(&sys, (0.0, 2.0), &[1e-3], &opts, 401).unwrap())
    });
}

criterion_group!(benches, jets, classification, exterior, oscillator);
criterion_main!(benches);
