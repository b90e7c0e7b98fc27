//! The experiment catalog and its implementations.

use std::collections::BTreeMap;
use std::sync::Arc;

use colombeau::forms::{random_polynomial_form, HOMOTOPY_NODES};
use colombeau::gfunc::{classify_on, function_family, number_residual_fit, point_value};
use colombeau::mechanics::DeltaCertificate;
use colombeau::net::map_grid;
use colombeau::quad::{integrate, QuadOptions};
use colombeau::smooth::UNLIMITED;
use colombeau::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::report::{fmt, Check, Outcome, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Classify,
    EmbedCheck,
    Mechanics,
    Poincare,
    PointValueDemo,
    ProductDemo,
    PullbackDemo,
    Stokes,
}

impl Serialize for Experiment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Classify,
        Experiment::EmbedCheck,
        Experiment::Mechanics,
        Experiment::Poincare,
        Experiment::PointValueDemo,
        Experiment::ProductDemo,
        Experiment::PullbackDemo,
        Experiment::Stokes,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::Classify => "classify",
            Experiment::EmbedCheck => "embed-check",
            Experiment::Mechanics => "mechanics",
            Experiment::Poincare => "poincare",
            Experiment::PointValueDemo => "point-value-demo",
            Experiment::ProductDemo => "product-demo",
            Experiment::PullbackDemo => "pullback-demo",
            Experiment::Stokes => "stokes",
        }
    }

    pub fn from_id(id: &str) -> Option<Experiment> {
        Experiment::ALL.into_iter().find(|e| e.id() == id)
    }

    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::Classify => "§ moderate and negligible nets",
            Experiment::EmbedCheck => "§ embedding of distributions",
            Experiment::Mechanics => "§ singular Hamiltonian example",
            Experiment::Poincare => "§ Poincaré lemma",
            Experiment::PointValueDemo => "§ point values",
            Experiment::ProductDemo => "§ products and association",
            Experiment::PullbackDemo => "§ pullback example",
            Experiment::Stokes => "§ Stokes theorem",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Classify => "growth orders of embedded H, δ, δ′, δ² and a negligible net",
            Experiment::EmbedCheck => "ι(sin) against σ(sin) on the line and the circle",
            Experiment::Mechanics => "q̈ + δ_ε′(q) = 0: energy, reflection and the limit |1 − t|",
            Experiment::Poincare => "d(HA) = A for closed polynomial 2-forms on the unit ball in ℝ³",
            Experiment::PointValueDemo => "ι(x)ι(δ) at classical points and at cl[(ε)]",
            Experiment::ProductDemo => "ρ(x/ε)ρ_ε ≈ (∫ρ²)δ and ι(δ)σ(x) ≈ 0",
            Experiment::PullbackDemo => "(ι∘μ* − μ*∘ι)δ for μ(x) = 2x: Moderate(1), associated to 0",
            Experiment::Stokes => "∫dA = ∮A on an interval, a disk and boxes, one with a δ coefficient",
        }
    }

    pub fn default_mollifier(self) -> MollifierKind {
        match self {
            Experiment::EmbedCheck => MollifierKind::FourierBump,
            Experiment::Mechanics => MollifierKind::CompactBump,
            _ => MollifierKind::GaussPoly { m: 1 },
        }
    }

    pub fn default_eps(self) -> Vec<f64> {
        match self {
            Experiment::Mechanics => vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            _ => vec![1e-1, 1e-2, 1e-3],
        }
    }

    pub fn default_tolerances(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            Experiment::Classify => &[("slope_slack", 0.25)],
            Experiment::EmbedCheck => &[("slope_slack", 0.25)],
            Experiment::Mechanics => &[
                ("drift_factor", 100.0),
                ("eta", 0.1),
                ("limit", 0.05),
                ("mass", 1e-8),
                ("reflection", 1e-6),
            ],
            Experiment::Poincare => &[("residual", 1e-7)],
            Experiment::PointValueDemo => &[("slope_slack", 0.25), ("value", 1e-3)],
            Experiment::ProductDemo => &[("pairing", 1e-3)],
            Experiment::PullbackDemo => &[("pairing", 1e-3), ("slope", 0.1)],
            Experiment::Stokes => &[("relative", 1e-6)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    pub fn run(self, cfg: &ExperimentConfig) -> Result<Outcome> {
        match self {
            Experiment::Classify => classify(cfg),
            Experiment::EmbedCheck => embed_check(cfg),
            Experiment::Mechanics => mechanics(cfg),
            Experiment::Poincare => poincare(cfg),
            Experiment::PointValueDemo => point_value_demo(cfg),
            Experiment::ProductDemo => product_demo(cfg),
            Experiment::PullbackDemo => pullback_demo(cfg),
            Experiment::Stokes => stokes(cfg),
        }
    }
}

/// The catalog printed by `list`.
pub fn catalog() -> String {
    let mut s = String::new();
    for e in Experiment::ALL {
        s.push_str(&format!("{:<18} {:<34} {}\n", e.id(), e.anchor(), e.description()));
    }
    s
}

fn x1() -> SmoothFn {
    SmoothFn::coordinate(1, 0)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn sups_table(name: &str, grid: &[f64], cols: &[(&str, Vec<f64>)]) -> Series {
    let mut header = vec!["eps"];
    header.extend(cols.iter().map(|c| c.0));
    let rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(i, e)| std::iter::once(fmt(*e)).chain(cols.iter().map(|c| fmt(c.1[i]))).collect())
        .collect();
    Series::table(name, &header, &rows)
}

fn classify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rho = build_mollifier(cfg.mollifier)?;
    let s = cfg.settings();
    let dom = BoxDomain::interval(-1.0, 1.0);
    let delta = embed_rn(&DistributionSpec::delta(1), &rho)?;
    let tiny = Net::new(1, |e| SmoothFn::constant(1, (-1.0 / e).exp()));
    let cases: Vec<(&str, Net, Verdict)> = vec![
        ("iota(H)", embed_rn(&DistributionSpec::heaviside(1.0), &rho)?, Verdict::Moderate { n: 0 }),
        ("iota(delta)", delta.clone(), Verdict::Moderate { n: 1 }),
        ("iota(delta')", embed_rn(&DistributionSpec::dirac(vec![0.0], vec![1], 1.0), &rho)?, Verdict::Moderate { n: 2 }),
        ("iota(delta)^2", delta.mul(&delta), Verdict::Moderate { n: 2 }),
        ("exp(-1/eps)", tiny, Verdict::Negligible { m_max: cfg.mmax }),
    ];
    let mut checks = Vec::new();
    let mut results = Vec::new();
    let mut cols = Vec::new();
    for (name, net, expected) in cases {
        let fit = classify_net(&net, &[0], &dom, &s, None)?;
        checks.push(Check::holds(format!("{name} is {expected}"), fit.fit.slope, fit.fit.verdict == expected));
        results.push(json!({ "net": name, "expected": expected.to_string(), "fit": to_json(&fit) }));
        cols.push((name, fit.sups));
    }
    Ok(Outcome {
        checks,
        results: json!({ "mollifier": to_json(rho.certificate()), "nets": results }),
        series: vec![sups_table("sup_norms", s.grid.values(), &cols)],
    })
}

fn embed_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rho = build_mollifier(cfg.mollifier)?;
    let slack = cfg.tol("slope_slack");
    let threshold = match cfg.mollifier {
        MollifierKind::FourierBump => cfg.mmax as f64 - slack,
        MollifierKind::GaussPoly { m } => m as f64 + 1.0 - slack,
        MollifierKind::CompactBump => 2.0 - slack,
    };
    let f = x1().sin();
    let mut checks = Vec::new();
    let mut results = Vec::new();
    let mut cols = Vec::new();
    let grid = cfg.settings().grid.values().to_vec();
    for (label, atlas, lattice) in [("line", Arc::new(Atlas::euclidean(1)), 101), ("circle", Arc::new(Atlas::circle()), 41)] {
        let u = match atlas.spec {
            AtlasSpec::Euclidean { .. } => GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::smooth_on(f.clone(), -8.0, 8.0), &rho)?),
            _ => embed_manifold(atlas.clone(), &function_family(&atlas, &f)?, &rho)?,
        };
        let d = u.sub(&sigma_ambient(atlas.clone(), &f))?;
        let boxes: Vec<BoxDomain> = match atlas.spec {
            AtlasSpec::Euclidean { .. } => vec![BoxDomain::interval(-1.0, 1.0)],
            _ => (0..atlas.len()).map(|c| atlas.work_box(c)).collect(),
        };
        let s = cfg.settings().with_lattice(lattice);
        let r = classify_on(&d, &[vec![0]], &boxes, &s, Some(1.0))?;
        let slope = r.rows.iter().map(|row| row.fit.fit.slope).fold(f64::INFINITY, f64::min);
        let sups: Vec<f64> = (0..grid.len())
            .map(|i| r.rows.iter().map(|row| row.fit.sups[i]).fold(0.0, f64::max))
            .collect();
        checks.push(Check::at_least(format!("{label}: slope of sup|iota(sin) - sin|"), slope, threshold));
        results.push(json!({ "manifold": label, "classification": to_json(&r) }));
        cols.push((label, sups));
    }
    Ok(Outcome {
        checks,
        results: json!({ "threshold": threshold, "cases": results }),
        series: vec![sups_table("residual_sups", &grid, &cols)],
    })
}

fn pullback_demo(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rho = build_mollifier(cfg.mollifier)?;
    let s = cfg.settings();
    let b = BoxDomain::interval(-1.0, 1.0);
    let dens = TestDensity::suite(0, &b, 5, cfg.seed.wrapping_add(11));
    let mu = Diffeo::Affine { scale: 2.0, shift: 0.0 };
    let (_, rep) = pullback_commutator_demo(&mu, &DistributionSpec::delta(1), &rho, &b, &dens, &s)?;
    let slope = rep.order0.fit.slope;
    let checks = vec![
        Check::holds("commutator is Moderate(1)", slope, rep.order0.fit.verdict == Verdict::Moderate { n: 1 }),
        Check::below("|slope + 1|", (slope + 1.0).abs(), cfg.tol("slope")),
        Check::holds("associated to 0", rep.association.max_deviation(), rep.associated_to_zero),
        Check::below("max pairing deviation", rep.association.max_deviation(), cfg.tol("pairing")),
    ];
    let series = vec![
        sups_table("commutator_sups", s.grid.values(), &[("sup", rep.order0.sups.clone())]),
        Series::records("pairings", &rep.association.records()),
    ];
    Ok(Outcome {
        checks,
        results: to_json(&rep),
        series,
    })
}

fn point_value_demo(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rho = build_mollifier(cfg.mollifier)?;
    let s = cfg.settings();
    let atlas = Arc::new(Atlas::euclidean(1));
    let ix = embed_rn(&DistributionSpec::smooth_on(x1(), -8.0, 8.0), &rho)?;
    let id = embed_rn(&DistributionSpec::delta(1), &rho)?;
    let u = GeneralizedFunction::on_rn(ix.mul(&id));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(5));
    let grid = s.grid.values().to_vec();
    let mut points = Vec::new();
    let mut worst = f64::INFINITY;
    let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
    for i in 0..10 {
        let p = if i == 0 { 0.0 } else { rng.gen_range(0.1..1.0) * if i % 2 == 0 { 1.0 } else { -1.0 } };
        let v = point_value(&u, &GeneralizedPoint::classical(&atlas, 0, vec![p]), &s)?;
        let fit = number_residual_fit(&v, 0.0, 1.0, &s)?;
        worst = worst.min(fit.slope);
        cols.push((format!("x={p:.6}"), grid.iter().map(|&e| v.value(e)).collect()));
        points.push(json!({ "point": p, "fit": to_json(&fit) }));
    }
    let drift = GeneralizedPoint::new(|e| vec![e], 0, BoxDomain::interval(-0.1, 0.1), 0.0625);
    let v = point_value(&u, &drift, &s)?;
    let smallest = *grid.last().expect("nonempty grid");
    let rho1 = rho.value(1.0);
    let gap = (v.value(smallest).abs() - rho1.abs()).abs();
    cols.push(("x=eps".into(), grid.iter().map(|&e| v.value(e)).collect()));
    let checks = vec![
        Check::at_least("worst classical-point slope", worst, cfg.mmax as f64 - cfg.tol("slope_slack")),
        Check::holds("rho(1) != 0", rho1, rho1 != 0.0),
        Check::below("||u(cl[eps])| - |rho(1)|| at smallest eps", gap, cfg.tol("value")),
    ];
    let named: Vec<(&str, Vec<f64>)> = cols.iter().map(|(n, c)| (n.as_str(), c.clone())).collect();
    Ok(Outcome {
        checks,
        results: json!({ "classical": points, "rho_at_1": rho1, "drift_value_at_smallest_eps": v.value(smallest) }),
        series: vec![sups_table("point_values", &grid, &named)],
    })
}

fn product_demo(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rho = build_mollifier(cfg.mollifier)?;
    let s = cfg.settings();
    let dens = TestDensity::suite(0, &BoxDomain::interval(-1.0, 1.0), 5, cfg.seed.wrapping_add(31));
    let r2 = rho.clone();
    let sq = Net::new(1, move |e| {
        let sc = r2.scaled(e);
        SmoothFn::new(1, UNLIMITED, move |x, k| {
            let j = Jet::from_univariate(1, k, 0, &sc.taylor(x[0], 0, k));
            j.mul(&j).scale(e)
        })
    })
    .with_focus(vec![vec![0.0]]);
    let r = rho.support_radius_hint();
    let l2 = integrate(|x| rho.value(x).powi(2), -r, r, &[0.0], &QuadOptions::with_tol(1e-13, 1e-16))?.value;
    let target = DistributionSpec::dirac(vec![0.0], vec![0], l2);
    let v1 = associate_net(&sq, Some(&target), &dens, &s)?;
    let dx = embed_rn(&DistributionSpec::delta(1), &rho)?.mul(&Net::constant(x1()));
    let v2 = associate_net(&dx, None, &dens, &s)?;
    let tol = cfg.tol("pairing");
    let checks = vec![
        Check::below("rho(x/eps) rho_eps vs (int rho^2) delta", v1.max_deviation(), tol),
        Check::below("iota(delta) sigma(x) vs 0", v2.max_deviation(), tol),
    ];
    Ok(Outcome {
        checks,
        results: json!({ "rho_l2_squared": l2, "square": to_json(&v1), "delta_times_x": to_json(&v2) }),
        series: vec![
            Series::records("square_pairings", &v1.records()),
            Series::records("delta_x_pairings", &v2.records()),
        ],
    })
}

fn poincare(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = StarDomain::Ball { radius: 1.0 };
    let lattice = dom.lattice(3, 7);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for inst in 0..10u64 {
        let seed = cfg.seed.wrapping_mul(1000).wrapping_add(700 + inst);
        let a = exterior_d(&random_polynomial_form(3, 1, 3, seed))?;
        let back = exterior_d(&homotopy_h(&a, &dom, HOMOTOPY_NODES)?)?.sub(&a)?;
        for &e in &cfg.eps {
            let r = back.max_abs_at(0, e, &lattice);
            worst = worst.max(r);
            rows.push(vec![inst.to_string(), fmt(e), fmt(r)]);
        }
    }
    Ok(Outcome {
        checks: vec![Check::below("sup |d(HA) - A|", worst, cfg.tol("residual"))],
        results: json!({ "instances": 10, "lattice_points": lattice.len(), "nodes": HOMOTOPY_NODES, "worst": worst }),
        series: vec![Series::table("residuals", &["instance", "eps", "residual"], &rows)],
    })
}

fn stokes(cfg: &ExperimentConfig) -> Result<Outcome> {
    let opts = QuadOptions::with_tol(1e-11, 1e-15);
    let rho = build_mollifier(cfg.mollifier)?;
    let eps = &cfg.eps;
    let mut cases = Vec::new();
    let h = embed_rn(&DistributionSpec::heaviside(1.0), &rho)?;
    cases.push(("interval", stokes_check(&KForm::on_rn(1, 0, vec![h])?, &StokesDomain::Interval { a: -1.0, b: 0.5 }, eps, &opts)?));
    let x = SmoothFn::coordinate(2, 0);
    let y = SmoothFn::coordinate(2, 1);
    let a = KForm::on_rn(2, 1, vec![Net::constant(y.mul(&y).scale(-1.0)), Net::constant(x.mul(&x).mul(&y))])?;
    let disk = StokesDomain::Disk {
        center: [0.2, -0.1],
        radius: 0.9,
    };
    cases.push(("disk", stokes_check(&a, &disk, eps, &opts)?));
    let a = random_polynomial_form(3, 2, 3, cfg.seed.wrapping_add(801));
    cases.push(("box3", stokes_check(&a, &StokesDomain::Box { domain: BoxDomain::cube(3, -0.5, 1.0) }, eps, &opts)?));
    let spike = embed_rn(&DistributionSpec::dirac(vec![0.3, -0.2], vec![0, 0], 1.0), &rho)?;
    let a = KForm::on_rn(2, 1, vec![Net::constant(y), spike.mul(&Net::constant(x.add_scalar(2.0)))])?;
    cases.push(("box2_delta", stokes_check(&a, &StokesDomain::Box { domain: BoxDomain::cube(2, -1.0, 1.0) }, eps, &opts)?));
    let tol = cfg.tol("relative");
    let checks = cases.iter().map(|(n, r)| Check::below(format!("{n}: relative residual"), r.max_relative, tol)).collect();
    let rows: Vec<Vec<String>> = cases
        .iter()
        .flat_map(|(n, r)| {
            r.rows
                .iter()
                .map(move |row| vec![n.to_string(), fmt(row.eps), fmt(row.lhs), fmt(row.rhs), fmt(row.relative)])
        })
        .collect();
    let results: BTreeMap<&str, serde_json::Value> = cases.iter().map(|(n, r)| (*n, to_json(r))).collect();
    Ok(Outcome {
        checks,
        results: to_json(&results),
        series: vec![Series::table("stokes", &["case", "eps", "lhs", "rhs", "relative"], &rows)],
    })
}

fn mechanics(cfg: &ExperimentConfig) -> Result<Outcome> {
    let opts = OdeOptions::default();
    let delta = StrictDeltaNet::new(build_mollifier(cfg.mollifier)?);
    let sys = HamiltonianSystem::singular_oscillator(delta.clone(), 1.0, -1.0);
    let mut eps = cfg.eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let solved = map_grid(&eps, cfg.parallel, |e| solve_singular_oscillator(&sys, (0.0, 2.0), &[e], &opts, 4001));
    let mut trajectories = Vec::new();
    for t in solved {
        trajectories.extend(t?);
    }
    let certs: Vec<DeltaCertificate> = eps.iter().map(|&e| delta.certificate(e)).collect::<Result<_>>()?;
    let limit = reflection_limit_check(&trajectories, 1.0, -1.0, cfg.tol("eta"), cfg.tol("limit"))?;
    let mut checks = Vec::new();
    let mut summary = Vec::new();
    let mut series = Vec::new();
    for (t, c) in trajectories.iter().zip(&certs) {
        let speed = (t.points.last().map(|p| p.p.abs()).unwrap_or(f64::NAN) - 1.0).abs();
        checks.push(Check::below(format!("eps={}: energy drift", t.eps), t.energy_drift, cfg.tol("drift_factor") * opts.rtol));
        checks.push(Check::below(format!("eps={}: post-impact speed error", t.eps), speed, cfg.tol("reflection")));
        checks.push(Check::below(format!("eps={}: |int delta_eps - 1|", t.eps), (c.integral - 1.0).abs(), cfg.tol("mass")));
        summary.push(json!({
            "eps": t.eps,
            "accepted_steps": t.accepted_steps,
            "rejected_steps": t.rejected_steps,
            "min_step": t.min_step,
            "energy_drift": t.energy_drift,
            "post_impact_speed_error": speed,
            "delta_certificate": to_json(c),
        }));
        series.push(Series {
            name: format!("trajectory_eps_{:e}", t.eps),
            content: t.to_csv(),
        });
    }
    checks.push(Check::holds("sup deviations decrease with eps", f64::NAN, limit.decreasing));
    let last = limit.rows.last().map(|r| r.sup_deviation).unwrap_or(f64::NAN);
    checks.push(Check::below("sup deviation at smallest eps", last, cfg.tol("limit")));
    let limit_rows: Vec<serde_json::Value> = limit
        .rows
        .iter()
        .map(|r| json!({ "eps": r.eps, "sup_deviation": r.sup_deviation, "decreasing": limit.decreasing, "pass": limit.pass }))
        .collect();
    Ok(Outcome {
        checks,
        results: json!({ "ode": to_json(&opts), "trajectories": summary, "limit_check": to_json(&limit), "limit_rows": limit_rows }),
        series,
    })
}
