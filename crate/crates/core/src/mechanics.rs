//! Symplectic toolkit on `ℝ^{2n}` and the singular oscillator.
//!
//! Coordinates are ordered `(q_1, …, q_n, p_1, …, p_n)`. The canonical form
//! is `ω = Σ dq_i ∧ dp_i`, `ω♭(Ξ) = ω(Ξ, ·)` and `Ξ_H = (dH)♯`, so that
//! `Ξ_H = Σ H_{p_i} ∂_{q_i} − H_{q_i} ∂_{p_i}`, `{F, G} = ω(Ξ_F, Ξ_G) =
//! Σ F_{q_i} G_{p_i} − F_{p_i} G_{q_i}` and `{q, p} = 1`.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{exterior_d, insert, subsets, KForm};
use crate::gfunc::GeneralizedFunction;
use crate::jet::Jet;
use crate::manifold::{Atlas, AtlasSpec};
use crate::mollifier::{build_mollifier, Mollifier, MollifierKind};
use crate::net::Net;
use crate::ode::{dopri5, OdeOptions, StepPolicy};
use crate::quad::{integrate, QuadOptions};
use crate::smooth::{SmoothFn, UNLIMITED};
use crate::tensor::{jet_matrix_inverse, TensorField};

/// Smooth nondegenerate closed 2-form on `ℝ^{2n}`.
///
/// Sign conventions, used throughout: coordinates are `(q…, p…)`, the
/// canonical form is `Σ dq_i ∧ dp_i`, `ω♭(Ξ) = ι_Ξ ω`, `Ξ_H = ω♯(dH)`, and
/// `{F, G} = ω(Ξ_F, Ξ_G)`. Then `Ξ_H = (∂_p H, −∂_q H)` and `{q, p} = 1`.
#[derive(Clone, Debug)]
pub struct SymplecticForm {
    pub n: usize,
    form: KForm,
}

impl SymplecticForm {
    pub fn canonical(n: usize) -> SymplecticForm {
        let d = 2 * n;
        let comps = subsets(d, 2)
            .iter()
            .map(|s| {
                let v = if s[1] == s[0] + n { 1.0 } else { 0.0 };
                Net::constant(SmoothFn::constant(d, v))
            })
            .collect();
        SymplecticForm {
            n,
            form: KForm::on_rn(d, 2, comps).expect("canonical components"),
        }
    }

    /// A smooth 2-form; closedness and nondegeneracy are checked on a
    /// lattice of `[−1, 1]^{2n}`.
    pub fn new(form: KForm) -> Result<SymplecticForm> {
        let d = form.dim();
        if form.degree != 2 || d % 2 != 0 || !matches!(form.atlas().spec, AtlasSpec::Euclidean { .. }) {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: form.degree,
            });
        }
        let lattice = crate::domain::BoxDomain::cube(d, -1.0, 1.0).lattice(if d <= 2 { 9 } else { 4 });
        let dw = exterior_d(&form)?;
        let closed_defect = if dw.degree <= d { dw.max_abs_at(0, 0.1, &lattice) } else { 0.0 };
        let scale = 1.0 + form.max_abs_at(0, 0.1, &lattice);
        if closed_defect > 1e-10 * scale {
            return Err(Error::DomainError(format!("2-form is not closed: |dω| = {closed_defect:e}")));
        }
        let w = SymplecticForm { n: d / 2, form };
        for p in &lattice {
            let m = w.matrix(p);
            let det = nalgebra::DMatrix::from_fn(d, d, |i, j| m[i][j]).determinant();
            if det.abs() < 1e-8 {
                return Err(Error::DomainError(format!("2-form degenerates at {p:?}")));
            }
        }
        Ok(w)
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn form(&self) -> &KForm {
        &self.form
    }

    /// `W_{ij} = ω(∂_i, ∂_j)` at `x`.
    pub fn matrix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| match self.form.comp(0, &[i, j]) {
                        None => 0.0,
                        Some((s, net)) => s * net.at(1.0).eval(x),
                    })
                    .collect()
            })
            .collect()
    }

    fn check(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }

    /// `ω♭(Ξ) = ω(Ξ, ·)`.
    pub fn flat(&self, xi: &TensorField) -> Result<KForm> {
        self.check(xi.dim())?;
        insert(xi, &self.lift(xi.atlas())?)
    }

    /// `ω♯ = (ω♭)^{−1}`: `Ξ^i = Σ_j A_j (W^{−1})_{ji}`.
    pub fn sharp(&self, a: &KForm) -> Result<TensorField> {
        self.check(a.dim())?;
        if a.degree != 1 {
            return Err(Error::InvalidDegree(format!("degree {} is not 1", a.degree)));
        }
        let d = self.dim();
        let form = self.form.clone();
        let inv = |j: usize, i: usize| {
            let form = form.clone();
            SmoothFn::new(d, UNLIMITED, move |x, k| {
                let w: Vec<Vec<Jet>> = (0..d)
                    .map(|r| {
                        (0..d)
                            .map(|c| match form.comp(0, &[r, c]) {
                                None => Jet::zero(d, k),
                                Some((s, net)) => net.at(1.0).jet(x, k).expect("smooth form").scale(s),
                            })
                            .collect()
                    })
                    .collect();
                jet_matrix_inverse(&w).expect("nondegenerate form")[j][i].clone()
            })
        };
        let comps = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| a.components(0)[j].mul(&Net::constant(inv(j, i))))
                    .reduce(|x, y| x.add(&y))
                    .expect("d ≥ 2")
            })
            .collect();
        TensorField::new(a.atlas().clone(), 1, 0, vec![comps])
    }

    fn lift(&self, atlas: &Arc<Atlas>) -> Result<KForm> {
        KForm::new(atlas.clone(), 2, vec![self.form.components(0).to_vec()])
    }
}

/// `Ξ_H = (dH)♯`.
pub fn hamiltonian_vf(h: &GeneralizedFunction, omega: &SymplecticForm) -> Result<TensorField> {
    omega.sharp(&exterior_d(&KForm::function(h))?)
}

/// `{F, G} = ω(Ξ_F, Ξ_G)`, ε-wise.
pub fn poisson(f: &GeneralizedFunction, g: &GeneralizedFunction, omega: &SymplecticForm) -> Result<GeneralizedFunction> {
    let xf = hamiltonian_vf(f, omega)?;
    let xg = hamiltonian_vf(g, omega)?;
    insert(&xg, &omega.flat(&xf)?)?.to_function()
}

/// `δ_ε(x) = ρ(x/ε)/ε` for a profile `ρ`.
#[derive(Clone, Debug)]
pub struct StrictDeltaNet {
    pub rho: Mollifier,
    /// Support radius of `ρ`; the tail beyond it is below `1e−17` in
    /// absolute integral for non-compact profiles.
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaCertificate {
    pub eps: f64,
    pub support_radius: f64,
    pub integral: f64,
    pub l1: f64,
}

impl StrictDeltaNet {
    pub fn new(rho: Mollifier) -> StrictDeltaNet {
        let radius = match rho.kind() {
            MollifierKind::CompactBump => 1.0,
            _ => rho.certificate().effective_radius,
        };
        StrictDeltaNet { rho, radius }
    }

    /// The normalized nonnegative bump on `(−1, 1)`.
    pub fn bump() -> StrictDeltaNet {
        StrictDeltaNet::new(build_mollifier(MollifierKind::CompactBump).expect("compact bump builds"))
    }

    pub fn support_radius(&self, eps: f64) -> f64 {
        self.radius * eps
    }

    pub fn value(&self, eps: f64, x: f64) -> f64 {
        self.rho.value(x / eps) / eps
    }

    pub fn derivative(&self, eps: f64, x: f64) -> f64 {
        self.rho.derivs(x / eps, 1)[1] / (eps * eps)
    }

    /// The net on `ℝ` of the scaled profiles.
    pub fn net(&self) -> Net {
        let rho = self.rho.clone();
        Net::new(1, move |e| {
            let s = rho.scaled(e);
            SmoothFn::univariate(UNLIMITED, move |x, k| s.taylor(x, 0, k))
        })
        .with_focus(vec![vec![0.0]])
    }

    pub fn certificate(&self, eps: f64) -> Result<DeltaCertificate> {
        let r = self.support_radius(eps);
        let opts = QuadOptions::with_tol(1e-13, 1e-16);
        let bps = [0.0, -0.5 * r, 0.5 * r];
        let integral = integrate(|x| self.value(eps, x), -r, r, &bps, &opts)?.value;
        let l1 = integrate(|x| self.value(eps, x).abs(), -r, r, &bps, &opts)?.value;
        Ok(DeltaCertificate {
            eps,
            support_radius: r,
            integral,
            l1,
        })
    }
}

/// `H(q, p) = p²/2 + D(q)` with `D` a strict delta net (or absent).
#[derive(Clone, Debug)]
pub struct HamiltonianSystem {
    pub delta: Option<StrictDeltaNet>,
    pub omega: SymplecticForm,
    pub q0: f64,
    pub qdot0: f64,
}

impl HamiltonianSystem {
    pub fn singular_oscillator(delta: StrictDeltaNet, q0: f64, qdot0: f64) -> HamiltonianSystem {
        HamiltonianSystem {
            delta: Some(delta),
            omega: SymplecticForm::canonical(1),
            q0,
            qdot0,
        }
    }

    pub fn free(q0: f64, qdot0: f64) -> HamiltonianSystem {
        HamiltonianSystem {
            delta: None,
            omega: SymplecticForm::canonical(1),
            q0,
            qdot0,
        }
    }

    /// `H` as a generalized function on `ℝ²` in `(q, p)`.
    pub fn hamiltonian(&self) -> GeneralizedFunction {
        let kinetic = SmoothFn::polynomial(2, vec![(vec![0, 2], 0.5)]);
        let net = match &self.delta {
            None => Net::constant(kinetic),
            Some(d) => {
                let rho = d.rho.clone();
                Net::new(2, move |e| {
                    let s = rho.scaled(e);
                    let pot = SmoothFn::new(2, UNLIMITED, move |x, k| Jet::from_univariate(2, k, 0, &s.taylor(x[0], 0, k)));
                    kinetic.add(&pot)
                })
                .with_focus(vec![vec![0.0, 0.0]])
            }
        };
        GeneralizedFunction::on_rn(net)
    }

    pub fn energy(&self, eps: f64, q: f64, p: f64) -> f64 {
        0.5 * p * p + self.delta.as_ref().map_or(0.0, |d| d.value(eps, q))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub q: f64,
    pub p: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub eps: f64,
    pub points: Vec<TrajectoryPoint>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub min_step: f64,
    /// `max |E(t) − E(0)|` over samples and accepted steps.
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,q,p,E\n");
        for p in &self.points {
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e}", p.t, p.q, p.p, p.energy);
        }
        s
    }
}

struct ImpactPolicy {
    reach: f64,
    eps: f64,
}

impl StepPolicy for ImpactPolicy {
    fn tol_factor(&self, _t: f64, y: &[f64]) -> f64 {
        if y[0].abs() <= self.reach {
            self.eps * self.eps
        } else {
            1.0
        }
    }

    fn max_step(&self, _t: f64, y: &[f64]) -> f64 {
        let inner = 0.05 * self.eps;
        let gap = y[0].abs() - self.reach;
        if gap <= 0.0 {
            inner
        } else if y[1] == 0.0 {
            f64::INFINITY
        } else {
            (gap / y[1].abs()).max(inner)
        }
    }
}

/// Integrates `q̇ = p`, `ṗ = −δ_ε′(q)` for each ε with `samples` uniform
/// output times over `t_span`.
pub fn solve_singular_oscillator(
    sys: &HamiltonianSystem,
    t_span: (f64, f64),
    eps: &[f64],
    opts: &OdeOptions,
    samples: usize,
) -> Result<Vec<Trajectory>> {
    if eps.is_empty() {
        return Err(Error::InvalidGrid("no ε values".into()));
    }
    let mut out = Vec::with_capacity(eps.len());
    for &e in eps {
        let reach = sys.delta.as_ref().map_or(0.0, |d| d.support_radius(e));
        let policy = ImpactPolicy { reach, eps: e };
        let rhs = |_: f64, y: &[f64]| {
            let force = sys.delta.as_ref().map_or(0.0, |d| -d.derivative(e, y[0]));
            vec![y[1], force]
        };
        let sol = dopri5(rhs, t_span.0, &[sys.q0, sys.qdot0], t_span.1, opts, &policy)?;
        let e0 = sys.energy(e, sys.q0, sys.qdot0);
        let mut drift = 0.0f64;
        for t in sol.mesh() {
            let y = sol.eval(t);
            drift = drift.max((sys.energy(e, y[0], y[1]) - e0).abs());
        }
        let points: Vec<TrajectoryPoint> = (0..samples)
            .map(|i| {
                let t = t_span.0 + (t_span.1 - t_span.0) * i as f64 / (samples - 1).max(1) as f64;
                let y = sol.eval(t);
                let energy = sys.energy(e, y[0], y[1]);
                drift = drift.max((energy - e0).abs());
                TrajectoryPoint { t, q: y[0], p: y[1], energy }
            })
            .collect();
        out.push(Trajectory {
            eps: e,
            points,
            accepted_steps: sol.accepted,
            rejected_steps: sol.rejected,
            min_step: sol.min_step,
            energy_drift: drift,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitRow {
    pub eps: f64,
    pub sup_deviation: f64,
    pub pre_impact_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitReport {
    pub impact_time: f64,
    pub eta: f64,
    pub tolerance: f64,
    pub rows: Vec<LimitRow>,
    pub decreasing: bool,
    pub pass: bool,
}

/// Deviation of each trajectory from `t ↦ sign(q₀)|q₀ + q̇₀ t|` outside
/// `(t* − η, t* + η)`.
pub fn reflection_limit_check(trajectories: &[Trajectory], q0: f64, qdot0: f64, eta: f64, tolerance: f64) -> Result<LimitReport> {
    if q0 == 0.0 || qdot0 == 0.0 || trajectories.is_empty() {
        return Err(Error::NoImpact);
    }
    let ts = -q0 / qdot0;
    let span = trajectories[0].points.first().map(|p| p.t).unwrap_or(0.0)..=trajectories[0].points.last().map(|p| p.t).unwrap_or(0.0);
    if !span.contains(&ts) || ts <= *span.start() {
        return Err(Error::NoImpact);
    }
    let limit = |t: f64| q0.signum() * (q0 + qdot0 * t).abs();
    let mut rows: Vec<LimitRow> = trajectories
        .iter()
        .map(|tr| {
            let mut sup = 0.0f64;
            let mut pre = 0.0f64;
            for p in &tr.points {
                let d = (p.q - limit(p.t)).abs();
                if (p.t - ts).abs() >= eta {
                    sup = sup.max(d);
                }
                if p.t <= ts - eta {
                    pre = pre.max(d);
                }
            }
            LimitRow {
                eps: tr.eps,
                sup_deviation: sup,
                pre_impact_deviation: pre,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let decreasing = rows.windows(2).all(|w| w[1].sup_deviation < w[0].sup_deviation);
    let pass = decreasing && rows.last().is_some_and(|r| r.sup_deviation < tolerance);
    Ok(LimitReport {
        impact_time: ts,
        eta,
        tolerance,
        rows,
        decreasing,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rn(f: SmoothFn) -> GeneralizedFunction {
        GeneralizedFunction::on_rn(Net::constant(f))
    }

    fn q() -> SmoothFn {
        SmoothFn::coordinate(2, 0)
    }

    fn p() -> SmoothFn {
        SmoothFn::coordinate(2, 1)
    }

    #[test]
    fn musical_maps_and_oscillator_field() {
        let w = SymplecticForm::canonical(1);
        let dq = TensorField::on_rn(2, 1, 0, vec![Net::constant(SmoothFn::constant(2, 1.0)), Net::zero(2)]).unwrap();
        let f = w.flat(&dq).unwrap();
        let x = [0.3, -0.2];
        assert_eq!(f.components(0)[0].at(0.1).eval(&x), 0.0);
        assert_eq!(f.components(0)[1].at(0.1).eval(&x), 1.0);
        let back = w.sharp(&f).unwrap();
        assert_eq!(back.comp(0, &[0]).at(0.1).eval(&x), 1.0);
        assert_eq!(back.comp(0, &[1]).at(0.1).eval(&x), 0.0);

        let h = rn(q().mul(&q()).add(&p().mul(&p())).scale(0.5));
        let xi = hamiltonian_vf(&h, &w).unwrap();
        assert_eq!(xi.comp(0, &[0]).at(0.1).eval(&x), x[1]);
        assert_eq!(xi.comp(0, &[1]).at(0.1).eval(&x), -x[0]);
        let c = hamiltonian_vf(&rn(SmoothFn::constant(2, 3.0)), &w).unwrap();
        assert_eq!(c.comp(0, &[0]).at(0.1).eval(&x), 0.0);
    }

    #[test]
    fn poisson_basics() {
        let w = SymplecticForm::canonical(1);
        let qp = poisson(&rn(q()), &rn(p()), &w).unwrap();
        assert_eq!(qp.net(0).at(0.1).eval(&[0.2, 0.7]), 1.0);
        let f = rn(q().sin().mul(&p()));
        assert_eq!(poisson(&f, &f, &w).unwrap().net(0).at(0.1).eval(&[0.2, 0.7]), 0.0);
    }

    #[test]
    fn singular_field_components() {
        let d = StrictDeltaNet::bump();
        let sys = HamiltonianSystem::singular_oscillator(d.clone(), 1.0, -1.0);
        let xi = hamiltonian_vf(&sys.hamiltonian(), &sys.omega).unwrap();
        let e = 0.1;
        for &(qv, pv) in &[(0.03, 0.5), (-0.07, -0.2)] {
            assert_eq!(xi.comp(0, &[0]).at(e).eval(&[qv, pv]), pv);
            let f = xi.comp(0, &[1]).at(e).eval(&[qv, pv]);
            assert!((f + d.derivative(e, qv)).abs() < 1e-12 * d.derivative(e, qv).abs());
        }
        let c = d.certificate(0.01).unwrap();
        assert!((c.integral - 1.0).abs() < 1e-8);
        assert!((c.l1 - d.certificate(0.1).unwrap().l1).abs() < 1e-10);
    }

    #[test]
    fn free_particle_and_reflection() {
        let opts = OdeOptions::default();
        let free = solve_singular_oscillator(&HamiltonianSystem::free(1.0, -1.0), (0.0, 2.0), &[0.1], &opts, 201).unwrap();
        for pt in &free[0].points {
            assert!((pt.q - (1.0 - pt.t)).abs() < 1e-12);
        }
        let sys = HamiltonianSystem::singular_oscillator(StrictDeltaNet::bump(), 1.0, -1.0);
        let eps = [1e-1, 3e-2, 1e-2];
        let tr = solve_singular_oscillator(&sys, (0.0, 2.0), &eps, &opts, 2001).unwrap();
        for t in &tr {
            assert!(t.energy_drift < 100.0 * opts.rtol, "ε = {}: drift {:e}", t.eps, t.energy_drift);
            let last = t.points.last().unwrap();
            assert!((last.p - 1.0).abs() < 1e-6);
        }
        let rep = reflection_limit_check(&tr, 1.0, -1.0, 0.1, 0.05).unwrap();
        assert!(rep.decreasing, "{:?}", rep.rows);
        assert!(matches!(reflection_limit_check(&tr, 1.0, 0.0, 0.1, 0.05), Err(Error::NoImpact)));
    }
}
