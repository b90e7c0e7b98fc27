//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with the measured quantity, its tolerance and the runtime budget.
//!
//! Run with `cargo test -p colombeau --test acceptance -- --nocapture`.

use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use colombeau::forms::{
    evaluate_form, lie_derivative_form, random_field, random_form, random_polynomial_form, HOMOTOPY_NODES,
};
use colombeau::gfunc::{classify_on, embed_manifold, function_family};
use colombeau::gfunc::point_value;
use colombeau::gfunc::number_residual_fit;
use colombeau::mechanics::TrajectoryPoint;
use colombeau::ode::OdeOptions;
use colombeau::quad::{integrate, QuadOptions};
use colombeau::smooth::UNLIMITED;
use colombeau::tensor::apply_field;
use colombeau::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// pinned tolerances
const MOLLIFIER_MASS_TOL: f64 = 1e-8;
const MOLLIFIER_MOMENT_TOL: f64 = 1e-6;
const SLOPE_SLACK: f64 = 0.25;
const PAIRING_TOL: f64 = 1e-3;
const COMMUTATOR_SLOPE_TOL: f64 = 0.1;
const POINT_VALUE_TOL: f64 = 1e-3;
const IDENTITY_TOL: f64 = 1e-10;
const POINCARE_TOL: f64 = 1e-7;
const STOKES_TOL: f64 = 1e-6;
const ENERGY_DRIFT_FACTOR: f64 = 100.0;
const REFLECTION_TOL: f64 = 1e-6;
const LIMIT_TOL: f64 = 0.05;
const JACOBI_TOL: f64 = 1e-8;
/// Identities stated as exact are checked bitwise where the evaluation
/// order makes that possible, and to this relative level otherwise.
const ROUNDING_TOL: f64 = 1e-12;

static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: u32, name: &str, pass: bool, detail: &str, elapsed: Duration, limit: Duration) {
    let ok = pass && elapsed <= limit;
    // written to the process stdout directly so that the line shows up
    // without --nocapture
    let line = format!(
        "criterion {n:>2} [{}] {name}: {detail}; runtime {:.2}s (limit {}s)\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(elapsed <= limit, "criterion {n} exceeded its runtime limit");
}

fn x1() -> SmoothFn {
    SmoothFn::coordinate(1, 0)
}

fn m_max() -> f64 {
    Settings::default().order.m_max as f64
}

#[test]
fn c01_mollifier_certificates() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut worst_mass = 0.0f64;
    let mut worst_moment = 0.0f64;
    let mut kinds = vec![MollifierKind::FourierBump];
    kinds.extend((1..=4).map(|m| MollifierKind::GaussPoly { m }));
    for kind in kinds {
        let rho = build_mollifier(kind).unwrap();
        let c = rho.certificate();
        let orders = match kind {
            MollifierKind::GaussPoly { m } => m as usize,
            _ => 8,
        };
        worst_mass = worst_mass.max((c.integral - 1.0).abs());
        for k in 0..orders {
            worst_moment = worst_moment.max(c.moments[k].abs());
        }
    }
    report(
        1,
        "mollifier certificates",
        worst_mass < MOLLIFIER_MASS_TOL && worst_moment < MOLLIFIER_MOMENT_TOL,
        &format!("max |∫ρ − 1| = {worst_mass:.1e} (< {MOLLIFIER_MASS_TOL:e}), max moment = {worst_moment:.1e} (< {MOLLIFIER_MOMENT_TOL:e})"),
        start.elapsed(),
        Duration::from_secs(5),
    );
}

/// Worst fitted slope of `sup |ι(sin) − sin|` over the work boxes.
fn embedding_slope(atlas: Arc<Atlas>, rho: &Mollifier, lattice: usize) -> f64 {
    let f = x1().sin();
    let u = match atlas.spec {
        AtlasSpec::Euclidean { .. } => GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::smooth_on(f.clone(), -8.0, 8.0), rho).unwrap()),
        _ => embed_manifold(atlas.clone(), &function_family(&atlas, &f).unwrap(), rho).unwrap(),
    };
    let d = u.sub(&sigma_ambient(atlas.clone(), &f)).unwrap();
    let boxes: Vec<BoxDomain> = match atlas.spec {
        AtlasSpec::Euclidean { .. } => vec![BoxDomain::interval(-1.0, 1.0)],
        _ => (0..atlas.len()).map(|c| atlas.work_box(c)).collect(),
    };
    let s = Settings::default().with_lattice(lattice);
    let r = classify_on(&d, &[vec![0]], &boxes, &s, Some(1.0)).unwrap();
    r.rows.iter().map(|row| row.fit.fit.slope).fold(f64::INFINITY, f64::min)
}

#[test]
fn c02_embedding_matches_sigma_on_smooth_functions() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let fourier = build_mollifier(MollifierKind::FourierBump).unwrap();
    let m = 2;
    let gauss = build_mollifier(MollifierKind::GaussPoly { m }).unwrap();
    let line = Arc::new(Atlas::euclidean(1));
    let circle = Arc::new(Atlas::circle());
    let rows = [
        ("line, fourier", embedding_slope(line.clone(), &fourier, 101), m_max() - SLOPE_SLACK),
        ("circle, fourier", embedding_slope(circle.clone(), &fourier, 41), m_max() - SLOPE_SLACK),
        ("line, gausspoly:2", embedding_slope(line, &gauss, 101), m as f64 + 0.75),
        ("circle, gausspoly:2", embedding_slope(circle, &gauss, 41), m as f64 + 0.75),
    ];
    let pass = rows.iter().all(|(_, s, t)| s >= t);
    let detail = rows
        .iter()
        .map(|(n, s, t)| format!("{n} slope {s:.2} (≥ {t:.2})"))
        .collect::<Vec<_>>()
        .join(", ");
    report(2, "embedding of sin agrees with σ", pass, &detail, start.elapsed(), Duration::from_secs(30));
}

#[test]
fn c03_product_counterexample() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
    let s = Settings::default();
    let dens = TestDensity::suite(0, &BoxDomain::interval(-1.0, 1.0), 5, 31);
    let r2 = rho.clone();
    let sq = Net::new(1, move |e| {
        let sc = r2.scaled(e);
        // ρ(x/ε) · ρ(x/ε)/ε = ε ρ_ε²
        SmoothFn::new(1, UNLIMITED, move |x, k| {
            let j = Jet::from_univariate(1, k, 0, &sc.taylor(x[0], 0, k));
            j.mul(&j).scale(e)
        })
    })
    .with_focus(vec![vec![0.0]]);
    let l2 = integrate(|x| rho.value(x).powi(2), -12.0, 12.0, &[0.0], &QuadOptions::with_tol(1e-13, 1e-16)).unwrap().value;
    let target = DistributionSpec::dirac(vec![0.0], vec![0], l2);
    let v1 = associate_net(&sq, Some(&target), &dens, &s).unwrap();
    let dx = embed_rn(&DistributionSpec::delta(1), &rho).unwrap().mul(&Net::constant(x1()));
    let v2 = associate_net(&dx, None, &dens, &s).unwrap();
    let pass = v1.is_associated() && v2.is_associated() && v1.max_deviation() < PAIRING_TOL && v2.max_deviation() < PAIRING_TOL;
    report(
        3,
        "product counterexample",
        pass,
        &format!(
            "ρ(x/ε)ρ_ε vs (∫ρ²)δ: max deviation {:.1e}; ι(δ)σ(x) vs 0: max deviation {:.1e} (< {PAIRING_TOL:e})",
            v1.max_deviation(),
            v2.max_deviation()
        ),
        start.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn c04_pullback_commutator() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
    let b = BoxDomain::interval(-1.0, 1.0);
    let dens = TestDensity::suite(0, &b, 5, 11);
    let mu = Diffeo::Affine { scale: 2.0, shift: 0.0 };
    let (_, rep) = pullback_commutator_demo(&mu, &DistributionSpec::delta(1), &rho, &b, &dens, &Settings::default()).unwrap();
    let slope = rep.order0.fit.slope;
    let pass = rep.order0.fit.verdict == Verdict::Moderate { n: 1 }
        && (slope + 1.0).abs() < COMMUTATOR_SLOPE_TOL
        && rep.associated_to_zero
        && rep.association.max_deviation() < PAIRING_TOL;
    report(
        4,
        "pullback commutator",
        pass,
        &format!(
            "verdict {:?}, slope {slope:.3} (within {COMMUTATOR_SLOPE_TOL} of −1), max pairing {:.1e}",
            rep.order0.fit.verdict,
            rep.association.max_deviation()
        ),
        start.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn c05_point_values() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
    let s = Settings::default();
    let atlas = Arc::new(Atlas::euclidean(1));
    let ix = embed_rn(&DistributionSpec::smooth_on(x1(), -8.0, 8.0), &rho).unwrap();
    let id = embed_rn(&DistributionSpec::delta(1), &rho).unwrap();
    let u = GeneralizedFunction::on_rn(ix.mul(&id));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::INFINITY;
    for i in 0..10 {
        let p = if i == 0 { 0.0 } else { rng.gen_range(0.1..1.0) * if i % 2 == 0 { 1.0 } else { -1.0 } };
        let v = point_value(&u, &GeneralizedPoint::classical(&atlas, 0, vec![p]), &s).unwrap();
        worst = worst.min(number_residual_fit(&v, 0.0, 1.0, &s).unwrap().slope);
    }
    let drift = GeneralizedPoint::new(|e| vec![e], 0, BoxDomain::interval(-0.1, 0.1), 0.0625);
    let v = point_value(&u, &drift, &s).unwrap();
    let smallest = *s.grid.values().last().unwrap();
    let gap = (v.value(smallest).abs() - rho.value(1.0).abs()).abs();
    let pass = worst >= m_max() - SLOPE_SLACK && gap < POINT_VALUE_TOL && rho.value(1.0) != 0.0;
    report(
        5,
        "point values of ι(x)ι(δ)",
        pass,
        &format!(
            "worst classical slope {worst:.2} (≥ {:.2}); at cl[(ε)] ||u(p̃)| − |ρ(1)|| = {gap:.1e} (< {POINT_VALUE_TOL:e}), ρ(1) = {:.4}",
            m_max() - SLOPE_SLACK,
            rho.value(1.0)
        ),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

fn sample_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn rel(residual: &KForm, scale: &KForm, e: f64, pts: &[Vec<f64>]) -> f64 {
    residual.max_abs_at(0, e, pts) / (1.0 + scale.max_abs_at(0, e, pts))
}

#[test]
fn c06_exterior_calculus_identities() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let eps = [1e-1, 1e-2, 1e-3];
    let mut worst = [0.0f64; 4];
    for inst in 0..10u64 {
        let f = random_form(3, 0, 100 + inst);
        let a = random_form(3, 1, 200 + inst);
        let b = random_form(3, 1, 300 + inst);
        let xi = random_field(3, 400 + inst);
        let pts = sample_points(3, 100, 500 + inst);
        let ab = wedge(&a, &b).unwrap();
        let da = exterior_d(&a).unwrap();
        let dd0 = exterior_d(&exterior_d(&f).unwrap()).unwrap();
        let dd1 = exterior_d(&da).unwrap();
        let leib = exterior_d(&ab).unwrap().sub(&wedge(&da, &b).unwrap().sub(&wedge(&a, &exterior_d(&b).unwrap()).unwrap()).unwrap()).unwrap();
        let lie = lie_derivative_form(&ab, &xi).unwrap();
        let cartan = lie
            .sub(&exterior_d(&insert(&xi, &ab).unwrap()).unwrap().add(&insert(&xi, &exterior_d(&ab).unwrap()).unwrap()).unwrap())
            .unwrap();
        let ixi = insert(&xi, &ab).unwrap();
        let ii = insert(&xi, &ixi).unwrap();
        for &e in &eps {
            worst[0] = worst[0].max(rel(&dd0, &exterior_d(&f).unwrap(), e, &pts)).max(rel(&dd1, &da, e, &pts));
            worst[1] = worst[1].max(rel(&leib, &exterior_d(&ab).unwrap(), e, &pts));
            worst[2] = worst[2].max(rel(&cartan, &lie, e, &pts));
            worst[3] = worst[3].max(rel(&ii, &ixi, e, &pts));
        }
    }
    let pass = worst.iter().all(|w| *w < IDENTITY_TOL);
    report(
        6,
        "exterior calculus identities",
        pass,
        &format!(
            "max relative residual d² {:.1e}, Leibniz {:.1e}, Cartan {:.1e}, i_Ξ² {:.1e} (< {IDENTITY_TOL:e})",
            worst[0], worst[1], worst[2], worst[3]
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn c07_poincare_lemma() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dom = StarDomain::Ball { radius: 1.0 };
    let lattice = dom.lattice(3, 7);
    let mut worst = 0.0f64;
    for inst in 0..10u64 {
        let a = exterior_d(&random_polynomial_form(3, 1, 3, 700 + inst)).unwrap();
        let back = exterior_d(&homotopy_h(&a, &dom, HOMOTOPY_NODES).unwrap()).unwrap().sub(&a).unwrap();
        for &e in &[1e-1, 1e-2, 1e-3] {
            worst = worst.max(back.max_abs_at(0, e, &lattice));
        }
    }
    report(
        7,
        "Poincaré lemma",
        worst < POINCARE_TOL,
        &format!("sup |d(HA) − A| = {worst:.1e} over {} lattice points (< {POINCARE_TOL:e})", lattice.len()),
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn c08_stokes() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let opts = QuadOptions::with_tol(1e-11, 1e-15);
    let eps = [1e-1, 1e-2, 1e-3];
    let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
    let mut rows = Vec::new();

    let h = embed_rn(&DistributionSpec::heaviside(1.0), &rho).unwrap();
    let a = KForm::on_rn(1, 0, vec![h]).unwrap();
    rows.push(("interval, ι(H)", stokes_check(&a, &StokesDomain::Interval { a: -1.0, b: 0.5 }, &eps, &opts).unwrap()));

    let x = SmoothFn::coordinate(2, 0);
    let y = SmoothFn::coordinate(2, 1);
    let a = KForm::on_rn(2, 1, vec![Net::constant(y.mul(&y).scale(-1.0)), Net::constant(x.mul(&x).mul(&y))]).unwrap();
    let disk = StokesDomain::Disk {
        center: [0.2, -0.1],
        radius: 0.9,
    };
    rows.push(("disk, polynomial", stokes_check(&a, &disk, &eps, &opts).unwrap()));

    let a = random_polynomial_form(3, 2, 3, 801);
    rows.push((
        "box, polynomial 2-form in ℝ³",
        stokes_check(&a, &StokesDomain::Box { domain: BoxDomain::cube(3, -0.5, 1.0) }, &eps, &opts).unwrap(),
    ));

    let spike = embed_rn(&DistributionSpec::dirac(vec![0.3, -0.2], vec![0, 0], 1.0), &rho).unwrap();
    let a = KForm::on_rn(2, 1, vec![Net::constant(y.clone()), spike.mul(&Net::constant(x.add_scalar(2.0)))]).unwrap();
    rows.push((
        "box, embedded δ coefficient",
        stokes_check(&a, &StokesDomain::Box { domain: BoxDomain::cube(2, -1.0, 1.0) }, &eps, &opts).unwrap(),
    ));

    let pass = rows.iter().all(|(_, r)| r.max_relative < STOKES_TOL);
    let detail = rows
        .iter()
        .map(|(n, r)| format!("{n} {:.1e}", r.max_relative))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        8,
        "Stokes",
        pass,
        &format!("max relative residual: {detail} (< {STOKES_TOL:e})"),
        start.elapsed(),
        Duration::from_secs(60),
    );
}

/// Random generalized function on `ℝ²` with an ε-dependent term.
fn random_fn2(seed: u64) -> GeneralizedFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GeneralizedFunction::on_rn(Net::new(2, move |e| {
        let c = c.clone();
        SmoothFn::new(2, UNLIMITED, move |x, k| {
            let v = Jet::variables(x, k);
            let (q, p) = (&v[0], &v[1]);
            q.scale(c[0]).sin().mul(&p.scale(c[1]).cos())
                .add(&q.mul(p).mul(p).scale(c[2]))
                .add(&p.scale(c[3]).add(&q.scale(c[4])).scale(1.0 / e).sin().scale(e * c[5]))
        })
    }))
}

#[test]
fn c09_singular_oscillator_and_poisson() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let opts = OdeOptions::default();
    let eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let sys = HamiltonianSystem::singular_oscillator(StrictDeltaNet::bump(), 1.0, -1.0);
    let tr = solve_singular_oscillator(&sys, (0.0, 2.0), &eps, &opts, 4001).unwrap();
    let drift = tr.iter().map(|t| t.energy_drift).fold(0.0, f64::max);
    let speed = tr
        .iter()
        .map(|t| {
            let last: &TrajectoryPoint = t.points.last().unwrap();
            (last.p.abs() - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let limit = reflection_limit_check(&tr, 1.0, -1.0, 0.1, LIMIT_TOL).unwrap();
    let seq = limit.rows.iter().map(|r| format!("{:.1e}", r.sup_deviation)).collect::<Vec<_>>().join(" > ");

    let w = SymplecticForm::canonical(1);
    let mut anti = 0.0f64;
    let mut jacobi = 0.0f64;
    let mut field = 0.0f64;
    let pts = sample_points(2, 20, 90);
    for inst in 0..3u64 {
        let (f, g, h) = (random_fn2(10 + inst), random_fn2(20 + inst), random_fn2(30 + inst));
        let fg = poisson(&f, &g, &w).unwrap();
        let gf = poisson(&g, &f, &w).unwrap();
        let jac = poisson(&f, &poisson(&g, &h, &w).unwrap(), &w).unwrap();
        let jac2 = poisson(&g, &poisson(&h, &f, &w).unwrap(), &w).unwrap();
        let jac3 = poisson(&h, &fg, &w).unwrap();
        let xfg = hamiltonian_vf(&fg, &w).unwrap();
        let br = bracket(&hamiltonian_vf(&f, &w).unwrap(), &hamiltonian_vf(&g, &w).unwrap()).unwrap();
        for &e in &[1e-1, 1e-2, 1e-3] {
            let (a, b) = (fg.net(0).at(e), gf.net(0).at(e));
            let (j1, j2, j3) = (jac.net(0).at(e), jac2.net(0).at(e), jac3.net(0).at(e));
            for p in &pts {
                anti = anti.max((a.eval(p) + b.eval(p)).abs());
                let parts = [j1.eval(p), j2.eval(p), j3.eval(p)];
                let scale = 1.0 + parts.iter().map(|v| v.abs()).fold(0.0, f64::max);
                jacobi = jacobi.max(parts.iter().sum::<f64>().abs() / scale);
                for i in 0..2 {
                    let (u, v) = (xfg.comp(0, &[i]).at(e).eval(p), br.comp(0, &[i]).at(e).eval(p));
                    field = field.max((u + v).abs() / (1.0 + u.abs().max(v.abs())));
                }
            }
        }
    }
    let pass = drift < ENERGY_DRIFT_FACTOR * opts.rtol
        && speed < REFLECTION_TOL
        && limit.pass
        && anti == 0.0
        && jacobi < JACOBI_TOL
        && field < ROUNDING_TOL;
    report(
        9,
        "singular oscillator and Poisson suite",
        pass,
        &format!(
            "energy drift {drift:.1e} (< {:.0e}); post-impact speed error {speed:.1e}; limit deviations {seq} (< {LIMIT_TOL} at ε = 1e-3); \
             antisymmetry {anti:e}; Jacobi {jacobi:.1e} (< {JACOBI_TOL:e}); Ξ_{{F,G}} + [Ξ_F, Ξ_G] {field:.1e} (< {ROUNDING_TOL:e})",
            ENERGY_DRIFT_FACTOR * opts.rtol
        ),
        start.elapsed(),
        Duration::from_secs(300),
    );
}

/// Ambient net `a + Σ_i b_i sin(θ_i + c_i) + ε d cos(θ_0 − θ_{n−1})`.
fn trig_net(n: usize, rng: &mut ChaCha8Rng) -> Net {
    let a = rng.gen_range(-1.0..1.0);
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..6.0)).collect();
    let d = rng.gen_range(-1.0..1.0);
    Net::new(n, move |e| {
        let (b, c) = (b.clone(), c.clone());
        SmoothFn::new(n, UNLIMITED, move |x, k| {
            let v = Jet::variables(x, k);
            let mut acc = Jet::constant(n, k, a);
            for i in 0..n {
                acc = acc.add(&v[i].add_scalar(c[i]).sin().scale(b[i]));
            }
            acc.add(&v[0].sub(&v[n - 1]).cos().scale(e * d))
        })
    })
}

fn worst_coherence(settings: &Settings, outputs: &[(&str, TensorField)]) -> (f64, String) {
    let mut worst = f64::INFINITY;
    let mut name = String::new();
    for (n, t) in outputs {
        let r = t.coherence(settings).unwrap();
        if r.worst_slope < worst || name.is_empty() {
            worst = r.worst_slope;
            name = n.to_string();
        }
    }
    (worst, name)
}

#[test]
fn c10_coherence_on_circle_and_torus() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    // every other dyadic value; the torus overlaps are sampled on a coarser
    // ambient lattice than the default
    let grid = EpsGrid::new((2..=7).map(|k| 2f64.powi(-2 * k)).collect()).unwrap();
    let base = Settings::default().with_grid(grid);
    let mut worst = f64::INFINITY;
    let mut worst_name = String::new();
    for (atlas, label) in [(Arc::new(Atlas::circle()), "circle"), (Arc::new(Atlas::torus2()), "torus")] {
        let n = atlas.dim();
        let s = if n == 2 { base.clone().with_overlap_lattice(12) } else { base.clone() };
        for inst in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
            let u = GeneralizedFunction::from_ambient(atlas.clone(), trig_net(n, &mut rng));
            let xi = TensorField::from_ambient(atlas.clone(), 1, 0, (0..n).map(|_| trig_net(n, &mut rng)).collect()).unwrap();
            let eta = TensorField::from_ambient(atlas.clone(), 1, 0, (0..n).map(|_| trig_net(n, &mut rng)).collect()).unwrap();
            let a = KForm::from_ambient(atlas.clone(), 1, (0..n).map(|_| trig_net(n, &mut rng)).collect()).unwrap();
            let f0 = KForm::function(&u);
            let mut outputs: Vec<(&str, TensorField)> = vec![
                ("tensor product", tensor_product(&xi, &a.to_tensor()).unwrap()),
                ("contraction", contract(&tensor_product(&xi, &a.to_tensor()).unwrap(), 0, 0).unwrap()),
                ("Lie derivative", gen_lie_derivative(&a.to_tensor(), &xi).unwrap()),
                ("bracket", bracket(&xi, &eta).unwrap()),
                ("field on function", TensorField::scalar(&apply_field(&xi, &u).unwrap())),
                ("d of 0-form", exterior_d(&f0).unwrap().to_tensor()),
                ("wedge 0∧1", wedge(&f0, &a).unwrap().to_tensor()),
                ("insertion", insert(&xi, &a).unwrap().to_tensor()),
                ("form evaluation", TensorField::scalar(&evaluate_form(&a, std::slice::from_ref(&eta)).unwrap())),
            ];
            if n == 2 {
                let b = KForm::from_ambient(atlas.clone(), 1, (0..n).map(|_| trig_net(n, &mut rng)).collect()).unwrap();
                let ab = wedge(&a, &b).unwrap();
                outputs.push(("d of 1-form", exterior_d(&a).unwrap().to_tensor()));
                outputs.push(("insertion into 2-form", insert(&xi, &ab).unwrap().to_tensor()));
                outputs.push(("Lie derivative of 2-form", lie_derivative_form(&ab, &xi).unwrap().to_tensor()));
                outputs.push(("wedge 1∧1", ab.to_tensor()));
            }
            let (w, name) = worst_coherence(&s, &outputs);
            if w < worst || worst_name.is_empty() {
                worst = w;
                worst_name = format!("{label} instance {inst}, {name}");
            }
        }
    }
    // control: scalar nets used as vector components without the Jacobian
    // factor must fail the same check
    let circle = Arc::new(Atlas::circle());
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    let u = GeneralizedFunction::from_ambient(circle.clone(), trig_net(1, &mut rng));
    let wrong = TensorField::new(circle, 1, 0, u.nets().iter().map(|n| vec![n.clone()]).collect()).unwrap();
    let control = wrong.coherence(&base).unwrap().worst_slope;
    report(
        10,
        "coherence of tensor and form operations",
        worst >= m_max() - SLOPE_SLACK && control < m_max() - SLOPE_SLACK,
        &format!(
            "worst overlap residual slope {worst:.2} ({worst_name}) (≥ {:.2}); untransformed control slope {control:.2}",
            m_max() - SLOPE_SLACK
        ),
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn c11_derivation_reconstruction() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let s = Settings::default();
    let mut exact = true;
    let mut worst = f64::INFINITY;
    for (atlas, seed) in [(Arc::new(Atlas::euclidean(2)), 3u64), (Arc::new(Atlas::circle()), 4u64)] {
        let n = atlas.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi0 = TensorField::from_ambient(atlas.clone(), 1, 0, (0..n).map(|_| trig_net(n, &mut rng)).collect()).unwrap();
        let x0 = xi0.clone();
        let theta = move |u: &GeneralizedFunction| apply_field(&x0, u);
        let (xi, rep) = derivation_to_vector_field(&theta, atlas.clone(), seed, &s).unwrap();
        for c in 0..atlas.len() {
            let pts = atlas.work_box(c).lattice(if n == 1 { 50 } else { 7 });
            for &e in &[1e-1, 1e-2, 1e-3] {
                for i in 0..n {
                    let (a, b) = (xi.comp(c, &[i]).at(e), xi0.comp(c, &[i]).at(e));
                    exact &= pts.iter().all(|p| a.eval(p) == b.eval(p));
                }
            }
        }
        worst = worst.min(rep.worst_residual_slope);
    }
    report(
        11,
        "derivation reconstruction",
        exact && worst >= m_max() - SLOPE_SLACK,
        &format!(
            "components recovered bitwise: {exact}; worst probe residual slope {worst:.2} (≥ {:.2})",
            m_max() - SLOPE_SLACK
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
}
