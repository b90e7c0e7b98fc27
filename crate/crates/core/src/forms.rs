//! Generalized differential forms: components on sorted index tuples.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::estimate::Settings;
use crate::gfunc::{integrate, CoherenceReport, GeneralizedFunction};
use crate::jet::Jet;
use crate::manifold::{Atlas, AtlasSpec};
use crate::net::{GeneralizedNumber, Net};
use crate::pairing::focus_breakpoints;
use crate::quad::{gauss_legendre_on, integrate_box, QuadOptions};
use crate::smooth::{SmoothFn, UNLIMITED};
use crate::tensor::{gen_lie_derivative, unflat_index, TensorField};

/// Default node count of the homotopy operator quadrature in `t`.
pub const HOMOTOPY_NODES: usize = 32;

/// Sorted `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Sorts `idx`; `None` if an index repeats, else the permutation sign.
pub fn sort_sign(idx: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] == v[j + 1] {
                return None;
            }
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((v, sign))
}

/// Element of `⋀^k_G(X)`.
#[derive(Clone, Debug)]
pub struct KForm {
    atlas: Arc<Atlas>,
    pub degree: usize,
    comps: Vec<Vec<Net>>,
}

impl KForm {
    pub fn new(atlas: Arc<Atlas>, degree: usize, comps: Vec<Vec<Net>>) -> Result<KForm> {
        let n = atlas.dim();
        if degree > n {
            return Err(Error::DegreeOverflow(degree, n));
        }
        if comps.len() != atlas.len() {
            return Err(Error::AtlasMismatch);
        }
        let count = subsets(n, degree).len();
        for c in &comps {
            if c.len() != count {
                return Err(Error::DimensionMismatch {
                    expected: count,
                    found: c.len(),
                });
            }
        }
        Ok(KForm { atlas, degree, comps })
    }

    pub fn on_rn(n: usize, degree: usize, comps: Vec<Net>) -> Result<KForm> {
        KForm::new(Arc::new(Atlas::euclidean(n)), degree, vec![comps])
    }

    pub fn zero(atlas: Arc<Atlas>, degree: usize) -> Result<KForm> {
        let n = atlas.dim();
        let count = subsets(n, degree).len();
        let comps = (0..atlas.len()).map(|_| vec![Net::zero(n); count]).collect();
        KForm::new(atlas, degree, comps)
    }

    pub fn function(u: &GeneralizedFunction) -> KForm {
        KForm {
            atlas: u.atlas().clone(),
            degree: 0,
            comps: u.nets().iter().map(|n| vec![n.clone()]).collect(),
        }
    }

    /// Chart components of a form with ambient components on sorted tuples.
    pub fn from_ambient(atlas: Arc<Atlas>, degree: usize, ambient: Vec<Net>) -> Result<KForm> {
        let n = atlas.dim();
        let sets = subsets(n, degree);
        if ambient.len() != sets.len() {
            return Err(Error::DimensionMismatch {
                expected: sets.len(),
                found: ambient.len(),
            });
        }
        let full = antisymmetric_full(n, degree, &ambient);
        KForm::from_tensor(&TensorField::from_ambient(atlas, 0, degree, full)?)
    }

    pub fn smooth_ambient(atlas: Arc<Atlas>, degree: usize, ambient: Vec<SmoothFn>) -> Result<KForm> {
        KForm::from_ambient(atlas, degree, ambient.into_iter().map(Net::constant).collect())
    }

    /// Reads the sorted components of a covariant tensor.
    pub fn from_tensor(t: &TensorField) -> Result<KForm> {
        if t.r != 0 {
            return Err(Error::InvalidDegree(format!("valence ({}, {}) is not covariant", t.r, t.s)));
        }
        let n = t.dim();
        let comps = (0..t.atlas().len())
            .map(|c| subsets(n, t.s).iter().map(|set| t.comp(c, set).clone()).collect())
            .collect();
        KForm::new(t.atlas().clone(), t.s, comps)
    }

    /// The antisymmetric covariant tensor with these components.
    pub fn to_tensor(&self) -> TensorField {
        let n = self.dim();
        let comps = self.comps.iter().map(|c| antisymmetric_full(n, self.degree, c)).collect();
        TensorField::new(self.atlas.clone(), 0, self.degree, comps).expect("component count is n^k")
    }

    pub fn atlas(&self) -> &Arc<Atlas> {
        &self.atlas
    }

    pub fn dim(&self) -> usize {
        self.atlas.dim()
    }

    pub fn components(&self, chart: usize) -> &[Net] {
        &self.comps[chart]
    }

    /// Component on an arbitrary index tuple: sign and sorted net, or
    /// `None` when an index repeats.
    pub fn comp(&self, chart: usize, idx: &[usize]) -> Option<(f64, &Net)> {
        let (sorted, sign) = sort_sign(idx)?;
        let pos = subset_pos(self.dim(), &sorted);
        Some((sign, &self.comps[chart][pos]))
    }

    fn check_same_atlas(&self, atlas: &Arc<Atlas>) -> Result<()> {
        if Arc::ptr_eq(&self.atlas, atlas) || self.atlas.same_as(atlas) {
            Ok(())
        } else {
            Err(Error::AtlasMismatch)
        }
    }

    fn zip(&self, other: &KForm, op: fn(&Net, &Net) -> Net) -> Result<KForm> {
        self.check_same_atlas(&other.atlas)?;
        if self.degree != other.degree {
            return Err(Error::InvalidDegree(format!("degrees {} and {}", self.degree, other.degree)));
        }
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| op(x, y)).collect())
            .collect();
        KForm::new(self.atlas.clone(), self.degree, comps)
    }

    pub fn add(&self, other: &KForm) -> Result<KForm> {
        self.zip(other, Net::add)
    }

    pub fn sub(&self, other: &KForm) -> Result<KForm> {
        self.zip(other, Net::sub)
    }

    pub fn scale(&self, c: f64) -> KForm {
        KForm {
            atlas: self.atlas.clone(),
            degree: self.degree,
            comps: self.comps.iter().map(|v| v.iter().map(|x| x.scale(c)).collect()).collect(),
        }
    }

    pub fn mul_fn(&self, u: &GeneralizedFunction) -> Result<KForm> {
        self.check_same_atlas(u.atlas())?;
        let comps = self
            .comps
            .iter()
            .zip(u.nets())
            .map(|(v, un)| v.iter().map(|x| un.mul(x)).collect())
            .collect();
        KForm::new(self.atlas.clone(), self.degree, comps)
    }

    pub fn to_function(&self) -> Result<GeneralizedFunction> {
        if self.degree != 0 {
            return Err(Error::InvalidDegree(format!("degree {} is not 0", self.degree)));
        }
        GeneralizedFunction::new(self.atlas.clone(), self.comps.iter().map(|c| c[0].clone()).collect())
    }

    pub fn coherence(&self, settings: &Settings) -> Result<CoherenceReport> {
        self.to_tensor().coherence(settings)
    }

    /// Maximum absolute component value over `points` at `eps`.
    pub fn max_abs_at(&self, chart: usize, eps: f64, points: &[Vec<f64>]) -> f64 {
        let mut m = 0.0f64;
        for net in &self.comps[chart] {
            let f = net.at(eps);
            for p in points {
                let v = f.eval(p).abs();
                m = if v.is_nan() { f64::NAN } else { m.max(v) };
            }
        }
        m
    }
}

fn subset_pos(n: usize, sorted: &[usize]) -> usize {
    subsets(n, sorted.len())
        .iter()
        .position(|s| s == sorted)
        .expect("sorted subset of 0..n")
}

fn antisymmetric_full(n: usize, k: usize, sorted: &[Net]) -> Vec<Net> {
    (0..n.pow(k as u32))
        .map(|flat| match sort_sign(&unflat_index(n, k, flat)) {
            None => Net::zero(n),
            Some((s, sign)) => {
                let net = &sorted[subset_pos(n, &s)];
                if sign > 0.0 {
                    net.clone()
                } else {
                    net.scale(-1.0)
                }
            }
        })
        .collect()
}

fn sum_terms(n: usize, terms: Vec<Net>) -> Net {
    let mut it = terms.into_iter();
    match it.next() {
        None => Net::zero(n),
        Some(first) => it.fold(first, |acc, t| acc.add(&t)),
    }
}

fn signed(net: &Net, sign: f64) -> Net {
    if sign > 0.0 {
        net.clone()
    } else {
        net.scale(-1.0)
    }
}

/// `dA`, chartwise: `(dA)_J = Σ_m (−1)^m ∂_{j_m} A_{J∖j_m}`.
pub fn exterior_d(a: &KForm) -> Result<KForm> {
    let n = a.dim();
    let k = a.degree;
    if k + 1 > n {
        return KForm::zero(a.atlas.clone(), k + 1).map_err(|_| Error::DegreeOverflow(k + 1, n));
    }
    for c in 0..a.atlas.len() {
        if let Some(net) = a.comps[c].first() {
            let avail = net.at(0.0625).max_order();
            if avail < 1 {
                return Err(Error::DerivativeUnavailable {
                    requested: 1,
                    available: avail,
                });
            }
        }
    }
    let sets = subsets(n, k + 1);
    let comps = (0..a.atlas.len())
        .map(|c| {
            sets.iter()
                .map(|set| {
                    let terms = (0..set.len())
                        .map(|m| {
                            let mut rest = set.clone();
                            let axis = rest.remove(m);
                            let d = a.comps[c][subset_pos(n, &rest)].d(axis);
                            signed(&d, if m % 2 == 0 { 1.0 } else { -1.0 })
                        })
                        .collect();
                    sum_terms(n, terms)
                })
                .collect()
        })
        .collect();
    KForm::new(a.atlas.clone(), k + 1, comps)
}

/// `A ∧ B`, ε-wise.
pub fn wedge(a: &KForm, b: &KForm) -> Result<KForm> {
    a.check_same_atlas(&b.atlas)?;
    let n = a.dim();
    let (k, l) = (a.degree, b.degree);
    if k + l > n {
        return Err(Error::DegreeOverflow(k + l, n));
    }
    let sets = subsets(n, k + l);
    let comps = (0..a.atlas.len())
        .map(|c| {
            sets.iter()
                .map(|set| {
                    let mut terms = Vec::new();
                    for pos in subsets(k + l, k) {
                        let s: Vec<usize> = pos.iter().map(|&p| set[p]).collect();
                        let t: Vec<usize> = set.iter().copied().filter(|x| !s.contains(x)).collect();
                        let shift: usize = pos.iter().enumerate().map(|(i, &p)| p - i).sum();
                        let sign = if shift % 2 == 0 { 1.0 } else { -1.0 };
                        let prod = a.comps[c][subset_pos(n, &s)].mul(&b.comps[c][subset_pos(n, &t)]);
                        terms.push(signed(&prod, sign));
                    }
                    sum_terms(n, terms)
                })
                .collect()
        })
        .collect();
    KForm::new(a.atlas.clone(), k + l, comps)
}

/// `i_Ξ A`, ε-wise: `(i_Ξ A)_J = Σ_i Ξ^i A_{iJ}`.
pub fn insert(xi: &TensorField, a: &KForm) -> Result<KForm> {
    if a.degree == 0 {
        return Err(Error::InvalidDegree("insertion into a 0-form".into()));
    }
    if (xi.r, xi.s) != (1, 0) {
        return Err(Error::InvalidSlots("expected a vector field".into()));
    }
    a.check_same_atlas(xi.atlas())?;
    let n = a.dim();
    let sets = subsets(n, a.degree - 1);
    let comps = (0..a.atlas.len())
        .map(|c| {
            sets.iter()
                .map(|set| {
                    let mut terms = Vec::new();
                    for i in 0..n {
                        let mut idx = vec![i];
                        idx.extend(set);
                        if let Some((sign, net)) = a.comp(c, &idx) {
                            terms.push(signed(&xi.components(c)[i].mul(net), sign));
                        }
                    }
                    sum_terms(n, terms)
                })
                .collect()
        })
        .collect();
    KForm::new(a.atlas.clone(), a.degree - 1, comps)
}

/// `A(Ξ_1, …, Ξ_k)`.
pub fn evaluate_form(a: &KForm, fields: &[TensorField]) -> Result<GeneralizedFunction> {
    if fields.len() != a.degree {
        return Err(Error::InvalidDegree(format!("{} fields for degree {}", fields.len(), a.degree)));
    }
    let mut cur = a.clone();
    for x in fields {
        cur = insert(x, &cur)?;
    }
    cur.to_function()
}

/// `L_Ξ A` by the tensor formula.
pub fn lie_derivative_form(a: &KForm, xi: &TensorField) -> Result<KForm> {
    KForm::from_tensor(&gen_lie_derivative(&a.to_tensor(), xi)?)
}

/// Star-shaped domains around the origin for the homotopy operator.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StarDomain {
    Box { domain: BoxDomain },
    Ball { radius: f64 },
}

impl StarDomain {
    fn check(&self, n: usize) -> Result<()> {
        match self {
            StarDomain::Box { domain } => {
                if domain.dim() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: domain.dim(),
                    });
                }
                if domain.lo.iter().zip(&domain.hi).any(|(l, h)| *l > 0.0 || *h < 0.0) {
                    return Err(Error::DomainError("box does not contain the origin".into()));
                }
            }
            StarDomain::Ball { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::DomainError("ball radius must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Lattice of `per_axis` points per axis restricted to the domain.
    pub fn lattice(&self, n: usize, per_axis: usize) -> Vec<Vec<f64>> {
        match self {
            StarDomain::Box { domain } => domain.lattice(per_axis),
            StarDomain::Ball { radius } => BoxDomain::cube(n, -radius, *radius)
                .lattice(per_axis)
                .into_iter()
                .filter(|p| p.iter().map(|x| x * x).sum::<f64>() <= radius * radius)
                .collect(),
        }
    }
}

/// `(HA)(x)(v_1, …, v_{k−1}) = ∫_0^1 t^{k−1} A(tx)(x, v_1, …, v_{k−1}) dt`
/// by Gauss-Legendre quadrature with `nodes` points, on `ℝⁿ`.
pub fn homotopy_h(a: &KForm, domain: &StarDomain, nodes: usize) -> Result<KForm> {
    if !matches!(a.atlas.spec, AtlasSpec::Euclidean { .. }) {
        return Err(Error::DomainError("homotopy operator needs the Euclidean chart".into()));
    }
    let n = a.dim();
    domain.check(n)?;
    let k = a.degree;
    if k == 0 {
        return Err(Error::InvalidDegree("homotopy operator on a 0-form".into()));
    }
    let (ts, ws) = gauss_legendre_on(nodes, 0.0, 1.0);
    let sets = subsets(n, k - 1);
    let src = a.comps[0].clone();
    let mut out = Vec::with_capacity(sets.len());
    for set in &sets {
        // (x^i, sign, sorted component) for each i ∉ set
        let mut terms: Vec<(usize, f64, Net)> = Vec::new();
        for i in 0..n {
            let mut idx = vec![i];
            idx.extend(set);
            if let Some((sorted, sign)) = sort_sign(&idx) {
                terms.push((i, sign, src[subset_pos(n, &sorted)].clone()));
            }
        }
        let (ts, ws) = (ts.clone(), ws.clone());
        let focus: Vec<Vec<f64>> = src.iter().flat_map(|x| x.focus().iter().cloned()).collect();
        out.push(
            Net::new(n, move |e| {
                let members: Vec<(usize, f64, SmoothFn)> = terms.iter().map(|(i, s, net)| (*i, *s, net.at(e))).collect();
                let (ts, ws) = (ts.clone(), ws.clone());
                SmoothFn::new(n, UNLIMITED, move |x, ord| {
                    let v = Jet::variables(x, ord);
                    let mut acc = Jet::zero(n, ord);
                    for (t, w) in ts.iter().zip(&ws) {
                        let tx: Vec<f64> = x.iter().map(|c| c * t).collect();
                        let wt = w * t.powi(k as i32 - 1);
                        for (i, s, f) in &members {
                            let val = f.jet_unchecked(&tx, ord).dilate(*t);
                            acc.axpy(wt * s, &v[*i].mul(&val));
                        }
                    }
                    acc
                })
            })
            .with_focus(focus.clone()),
        );
    }
    KForm::new(a.atlas.clone(), k - 1, vec![out])
}

/// `∫_K A` for an `n`-form over a box in one chart.
pub fn integrate_nform(a: &KForm, chart: usize, k: &BoxDomain, settings: &Settings) -> Result<GeneralizedNumber> {
    let n = a.dim();
    if a.degree != n {
        return Err(Error::InvalidDegree(format!("degree {} is not {n}", a.degree)));
    }
    let u = GeneralizedFunction::new(a.atlas.clone(), a.comps.iter().map(|c| c[0].clone()).collect())?;
    integrate(&u, chart, &SmoothFn::constant(n, 1.0), k, settings)
}

/// Domains with boundary for the Stokes check.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StokesDomain {
    Interval { a: f64, b: f64 },
    Disk { center: [f64; 2], radius: f64 },
    Box { domain: BoxDomain },
}

#[derive(Clone, Debug, Serialize)]
pub struct StokesRow {
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub relative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StokesReport {
    pub domain: StokesDomain,
    pub rows: Vec<StokesRow>,
    pub max_relative: f64,
}

fn polar_breakpoints(focus: &[Vec<f64>], center: [f64; 2], eps: f64) -> Vec<Vec<f64>> {
    let mut r_bps = Vec::new();
    let mut t_bps = Vec::new();
    for p in focus {
        let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
        let r = dx.hypot(dy);
        let mut th = dy.atan2(dx);
        if th < 0.0 {
            th += 2.0 * PI;
        }
        let mut s = 0.25;
        r_bps.push(r);
        t_bps.push(th);
        while s <= 256.0 {
            for sg in [-1.0, 1.0] {
                r_bps.push(r + sg * s * eps);
                if r > 0.0 {
                    t_bps.push(th + sg * s * eps / r);
                }
            }
            s *= 2.0;
        }
    }
    vec![r_bps, t_bps]
}

/// Per ε, `∫_D dA` against `∮_{∂D} A` by quadrature on both sides, with
/// the outward (counterclockwise) boundary orientation.
pub fn stokes_check(a: &KForm, domain: &StokesDomain, eps: &[f64], opts: &QuadOptions) -> Result<StokesReport> {
    if !matches!(a.atlas.spec, AtlasSpec::Euclidean { .. }) {
        return Err(Error::DomainError("Stokes check runs in the Euclidean chart".into()));
    }
    let n = a.dim();
    if a.degree + 1 != n {
        return Err(Error::InvalidDegree(format!("degree {} is not n − 1 = {}", a.degree, n - 1)));
    }
    let da = exterior_d(a)?;
    let focus: Vec<Vec<f64>> = a.comps[0].iter().flat_map(|x| x.focus().iter().cloned()).collect();
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let dens = da.comps[0][0].at(e);
        let comps: Vec<SmoothFn> = a.comps[0].iter().map(|x| x.at(e)).collect();
        let (lhs, rhs) = match domain {
            StokesDomain::Interval { a: lo, b: hi } => {
                if n != 1 {
                    return Err(Error::DomainError("interval needs dimension 1".into()));
                }
                let b = BoxDomain::interval(*lo, *hi);
                let bps = focus_breakpoints(&focus, e, 1, 256.0);
                let l = integrate_box(|x| dens.eval(x), &b, &bps, opts)?.value;
                (l, comps[0].eval(&[*hi]) - comps[0].eval(&[*lo]))
            }
            StokesDomain::Disk { center, radius } => {
                if n != 2 {
                    return Err(Error::DomainError("disk needs dimension 2".into()));
                }
                let c = *center;
                let polar = BoxDomain::new(vec![0.0, 0.0], vec![*radius, 2.0 * PI])?;
                let bps = polar_breakpoints(&focus, c, e);
                let l = integrate_box(
                    |p| p[0] * dens.eval(&[c[0] + p[0] * p[1].cos(), c[1] + p[0] * p[1].sin()]),
                    &polar,
                    &bps,
                    opts,
                )?
                .value;
                let r = *radius;
                let circle = BoxDomain::interval(0.0, 2.0 * PI);
                let rb = vec![bps[1].clone()];
                // A = P dx + Q dy along (c + r(cos θ, sin θ))
                let b = integrate_box(
                    |t| {
                        let (ct, st) = (t[0].cos(), t[0].sin());
                        let x = [c[0] + r * ct, c[1] + r * st];
                        r * (-comps[0].eval(&x) * st + comps[1].eval(&x) * ct)
                    },
                    &circle,
                    &rb,
                    opts,
                )?
                .value;
                (l, b)
            }
            StokesDomain::Box { domain: bx } => {
                if bx.dim() != n || n < 2 {
                    return Err(Error::DomainError("box needs the form dimension, at least 2".into()));
                }
                let bps = focus_breakpoints(&focus, e, n, 256.0);
                let l = integrate_box(|x| dens.eval(x), bx, &bps, opts)?.value;
                // dA = Σ_i (−1)^i ∂_i A_{î} dx^1 ∧ … ∧ dx^n
                let mut r = 0.0;
                for i in 0..n {
                    let face = BoxDomain::new(
                        (0..n).filter(|&j| j != i).map(|j| bx.lo[j]).collect(),
                        (0..n).filter(|&j| j != i).map(|j| bx.hi[j]).collect(),
                    )?;
                    let fb: Vec<Vec<f64>> = (0..n).filter(|&j| j != i).map(|j| bps[j].clone()).collect();
                    let set: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                    let f = &comps[subset_pos(n, &set)];
                    let mut side = 0.0;
                    for (val, sg) in [(bx.hi[i], 1.0), (bx.lo[i], -1.0)] {
                        let q = integrate_box(
                            |y| {
                                let mut x = y.to_vec();
                                x.insert(i, val);
                                f.eval(&x)
                            },
                            &face,
                            &fb,
                            opts,
                        )?;
                        side += sg * q.value;
                    }
                    r += if i % 2 == 0 { side } else { -side };
                }
                (l, r)
            }
        };
        let residual = (lhs - rhs).abs();
        rows.push(StokesRow {
            eps: e,
            lhs,
            rhs,
            residual,
            relative: residual / lhs.abs().max(rhs.abs()).max(1.0),
        });
    }
    let max_relative = rows.iter().map(|r| r.relative).fold(0.0, f64::max);
    Ok(StokesReport {
        domain: domain.clone(),
        rows,
        max_relative,
    })
}

/// Random polynomial of total degree `deg` in `n` variables.
pub fn random_polynomial(n: usize, deg: u32, rng: &mut ChaCha8Rng) -> SmoothFn {
    let mut terms = Vec::new();
    for flat in 0..(deg as usize + 1).pow(n as u32) {
        let e: Vec<u32> = unflat_index(deg as usize + 1, n, flat).iter().map(|&x| x as u32).collect();
        if e.iter().sum::<u32>() <= deg {
            terms.push((e, rng.gen_range(-1.0..1.0)));
        }
    }
    SmoothFn::polynomial(n, terms)
}

/// Random generalized `k`-form on `ℝⁿ`: polynomial coefficients plus an
/// ε-dependent oscillation `ε sin(x·w/ε)`.
pub fn random_form(n: usize, k: usize, seed: u64) -> KForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = subsets(n, k)
        .iter()
        .map(|_| {
            let p = random_polynomial(n, 3, &mut rng);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Net::new(n, move |e| {
                let w = w.clone();
                let osc = SmoothFn::new(n, UNLIMITED, move |x, ord| {
                    let v = Jet::variables(x, ord);
                    let mut s = Jet::zero(n, ord);
                    for i in 0..n {
                        s.axpy(w[i] / e, &v[i]);
                    }
                    s.sin().scale(e)
                });
                p.add(&osc)
            })
        })
        .collect();
    KForm::on_rn(n, k, comps).expect("component count matches")
}

/// Random `k`-form on `ℝⁿ` with polynomial coefficients `p + ε q` of
/// total degree `deg`.
pub fn random_polynomial_form(n: usize, k: usize, deg: u32, seed: u64) -> KForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = subsets(n, k)
        .iter()
        .map(|_| {
            let p = random_polynomial(n, deg, &mut rng);
            let q = random_polynomial(n, deg, &mut rng);
            Net::new(n, move |e| p.add(&q.scale(e)))
        })
        .collect();
    KForm::on_rn(n, k, comps).expect("component count matches")
}

/// Random generalized vector field on `ℝⁿ`.
pub fn random_field(n: usize, seed: u64) -> TensorField {
    let f = random_form(n, 1, seed ^ 0xf1e1d);
    TensorField::on_rn(n, 1, 0, f.comps[0].clone()).expect("n components")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DistributionSpec;
    use crate::embed::embed_rn;
    use crate::mollifier::{build_mollifier, MollifierKind};
    use crate::tensor::flat_index;

    fn pts(n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..20).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    fn max_rel(a: &KForm, scale: &KForm, e: f64) -> f64 {
        let p = pts(a.dim());
        a.max_abs_at(0, e, &p) / (1.0 + scale.max_abs_at(0, e, &p))
    }

    #[test]
    fn subsets_and_signs() {
        assert_eq!(subsets(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(sort_sign(&[2, 0, 1]), Some((vec![0, 1, 2], 1.0)));
        assert_eq!(sort_sign(&[1, 0]), Some((vec![0, 1], -1.0)));
        assert_eq!(sort_sign(&[1, 1]), None);
        assert_eq!(flat_index(2, &[1, 0]), 2);
    }

    #[test]
    fn identities_hold_per_eps() {
        let a = random_form(3, 1, 1);
        let b = random_form(3, 1, 2);
        let xi = random_field(3, 3);
        let dd = exterior_d(&exterior_d(&a).unwrap()).unwrap();
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap();
        let lhs = exterior_d(&ab).unwrap();
        let rhs = wedge(&exterior_d(&a).unwrap(), &b).unwrap().sub(&wedge(&a, &exterior_d(&b).unwrap()).unwrap()).unwrap();
        let cartan = lie_derivative_form(&ab, &xi)
            .unwrap()
            .sub(&exterior_d(&insert(&xi, &ab).unwrap()).unwrap().add(&insert(&xi, &exterior_d(&ab).unwrap()).unwrap()).unwrap())
            .unwrap();
        let ii = insert(&xi, &insert(&xi, &ab).unwrap()).unwrap();
        for &e in &[0.1, 0.01, 0.001] {
            assert!(max_rel(&dd, &exterior_d(&a).unwrap(), e) < 1e-10);
            assert_eq!(ab.add(&ba).unwrap().max_abs_at(0, e, &pts(3)), 0.0);
            assert!(max_rel(&lhs.sub(&rhs).unwrap(), &lhs, e) < 1e-10);
            assert!(max_rel(&cartan, &lie_derivative_form(&ab, &xi).unwrap(), e) < 1e-10);
            assert!(max_rel(&ii, &insert(&xi, &ab).unwrap(), e) < 1e-12);
        }
        assert!(matches!(wedge(&ab, &ab), Err(Error::DegreeOverflow(4, 3))));
        assert!(matches!(insert(&xi, &KForm::zero(a.atlas().clone(), 0).unwrap()), Err(Error::InvalidDegree(_))));
    }

    #[test]
    fn homotopy_inverts_d() {
        let b = random_polynomial_form(3, 1, 3, 9);
        let a = exterior_d(&b).unwrap();
        let dom = StarDomain::Ball { radius: 1.0 };
        let h = homotopy_h(&a, &dom, HOMOTOPY_NODES).unwrap();
        let back = exterior_d(&h).unwrap().sub(&a).unwrap();
        let lat = dom.lattice(3, 7);
        for &e in &[0.1, 0.01] {
            assert!(back.max_abs_at(0, e, &lat) < 1e-7, "{}", back.max_abs_at(0, e, &lat));
        }
        // k = 1: H(df) = f − f(0)
        let f = random_polynomial_form(2, 0, 4, 4);
        let hf = homotopy_h(&exterior_d(&f).unwrap(), &StarDomain::Ball { radius: 1.0 }, HOMOTOPY_NODES).unwrap();
        let (fe, he) = (f.comps[0][0].at(0.1), hf.comps[0][0].at(0.1));
        for p in pts(2) {
            assert!((he.eval(&p) - fe.eval(&p) + fe.eval(&[0.0, 0.0])).abs() < 1e-10);
        }
        let off = StarDomain::Box {
            domain: BoxDomain::cube(3, 0.5, 1.0),
        };
        assert!(matches!(homotopy_h(&a, &off, 32), Err(Error::DomainError(_))));
    }

    #[test]
    fn stokes_cases() {
        let opts = QuadOptions::with_tol(1e-11, 1e-15);
        let eps = [0.1, 0.01];
        let x = SmoothFn::coordinate(2, 0);
        let disk = KForm::on_rn(2, 1, vec![Net::zero(2), Net::constant(x)]).unwrap();
        let rep = stokes_check(
            &disk,
            &StokesDomain::Disk {
                center: [0.1, 0.0],
                radius: 0.8,
            },
            &eps,
            &opts,
        )
        .unwrap();
        assert!((rep.rows[0].lhs - PI * 0.64).abs() < 1e-9);
        assert!(rep.max_relative < 1e-6);

        let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
        let u = embed_rn(&DistributionSpec::heaviside(1.0), &rho).unwrap();
        let rep = stokes_check(&KForm::on_rn(1, 0, vec![u]).unwrap(), &StokesDomain::Interval { a: -1.0, b: 0.5 }, &eps, &opts).unwrap();
        assert!(rep.max_relative < 1e-6, "{:?}", rep.rows);

        let spike = embed_rn(&DistributionSpec::dirac(vec![0.2, 0.1], vec![0, 0], 1.0), &rho).unwrap();
        let a = KForm::on_rn(2, 1, vec![Net::constant(SmoothFn::coordinate(2, 1)), spike]).unwrap();
        let rep = stokes_check(
            &a,
            &StokesDomain::Box {
                domain: BoxDomain::cube(2, -1.0, 1.0),
            },
            &eps,
            &opts,
        )
        .unwrap();
        assert!(rep.max_relative < 1e-6, "{:?}", rep.rows);
        assert!((rep.rows[0].lhs + 4.0).abs() < 1e-6);
    }

    #[test]
    fn integrals_and_coherence() {
        let s = Settings::default();
        let area = integrate_nform(&KForm::on_rn(2, 2, vec![Net::constant(SmoothFn::constant(2, 1.0))]).unwrap(), 0, &BoxDomain::cube(2, 0.0, 2.0), &s).unwrap();
        assert!((area.value(0.01) - 4.0).abs() < 1e-12);
        let t = Arc::new(Atlas::torus2());
        let th = SmoothFn::coordinate(2, 0);
        let a = KForm::smooth_ambient(t.clone(), 1, vec![th.sin(), th.cos()]).unwrap();
        let da = exterior_d(&a).unwrap();
        assert!(da.coherence(&s).unwrap().coherent);
    }
}
