//! Generalized tensor fields by component nets per chart.
//!
//! Components of a field of valence `(r, s)` are stored flat, upper indices
//! first, each index in `0..n`, row-major.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::estimate::Settings;
use crate::gfunc::{overlap_residual, CoherenceReport, GeneralizedFunction, OverlapResidual};
use crate::jet::Jet;
use crate::manifold::Atlas;
use crate::net::Net;
use crate::smooth::{compose_jets, SmoothFn, UNLIMITED};

/// Tolerance of the Leibniz and linearity probes of a derivation.
pub const LEIBNIZ_TOL: f64 = 1e-9;

/// Sample points per chart for derivation probes.
pub const PROBE_POINTS: usize = 50;

pub fn flat_index(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

pub fn unflat_index(n: usize, rank: usize, mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for slot in (0..rank).rev() {
        idx[slot] = flat % n;
        flat /= n;
    }
    idx
}

/// Minimal ring interface shared by numbers and jets.
pub trait Scalar: Clone {
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn zero_like(&self) -> Self;
}

impl Scalar for f64 {
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn zero_like(&self) -> Self {
        0.0
    }
}

impl Scalar for Jet {
    fn add(&self, other: &Self) -> Self {
        Jet::add(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        Jet::mul(self, other)
    }
    fn zero_like(&self) -> Self {
        Jet::zero(self.dim(), self.order())
    }
}

/// `T'^{i..}_{j..} = U^{i}_{k} ⋯ L^{l}_{j} ⋯ T^{k..}_{l..}`: upper slots are
/// transformed by `upper[i][k]`, lower slots by `lower[l][j]`.
pub fn transform_components<T: Scalar>(n: usize, r: usize, s: usize, comps: &[T], upper: &[Vec<T>], lower: &[Vec<T>]) -> Vec<T> {
    let rank = r + s;
    let mut cur = comps.to_vec();
    for slot in 0..rank {
        let mut next = Vec::with_capacity(cur.len());
        for flat in 0..cur.len() {
            let idx = unflat_index(n, rank, flat);
            let mut acc = cur[0].zero_like();
            for k in 0..n {
                let mut src = idx.clone();
                src[slot] = k;
                let m = if slot < r { &upper[idx[slot]][k] } else { &lower[k][idx[slot]] };
                acc = acc.add(&m.mul(&cur[flat_index(n, &src)]));
            }
            next.push(acc);
        }
        cur = next;
    }
    cur
}

/// Inverse of a small matrix of jets by Gauss-Jordan elimination with
/// pivoting on values.
pub fn jet_matrix_inverse(m: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>> {
    let n = m.len();
    let (dim, order) = (m[0][0].dim(), m[0][0].order());
    let mut a: Vec<Vec<Jet>> = m.to_vec();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| (0..n).map(|j| Jet::constant(dim, order, if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].value().abs().total_cmp(&a[y][col].value().abs()))
            .unwrap_or(col);
        if a[piv][col].value() == 0.0 {
            return Err(Error::DomainError("singular Jacobian".into()));
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col].recip();
        for j in 0..n {
            a[col][j] = a[col][j].mul(&p);
            inv[col][j] = inv[col][j].mul(&p);
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row][col].clone();
            if f.is_zero() {
                continue;
            }
            for j in 0..n {
                a[row][j] = a[row][j].sub(&f.mul(&a[col][j]));
                inv[row][j] = inv[row][j].sub(&f.mul(&inv[col][j]));
            }
        }
    }
    Ok(inv)
}

/// Recently computed component arrays, shared by the component nets of one
/// chart so that a point is transformed once for all components.
#[derive(Default)]
struct ArrayCache(Mutex<VecDeque<(u64, Vec<u64>, usize, Arc<Vec<Jet>>)>>);

impl ArrayCache {
    const SLOTS: usize = 8;

    fn get_or_compute<F: FnOnce() -> Vec<Jet>>(&self, eps: f64, y: &[f64], k: usize, idx: usize, f: F) -> Jet {
        let key: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
        let e = eps.to_bits();
        {
            let slots = self.0.lock().unwrap_or_else(|p| p.into_inner());
            if let Some(hit) = slots.iter().find(|s| s.0 == e && s.2 == k && s.1 == key) {
                return hit.3[idx].clone();
            }
        }
        let arr = Arc::new(f());
        let out = arr[idx].clone();
        let mut slots = self.0.lock().unwrap_or_else(|p| p.into_inner());
        if slots.len() == Self::SLOTS {
            slots.pop_front();
        }
        slots.push_back((e, key, k, arr));
        out
    }
}

/// Element of `G^r_s(X)`: component nets per chart.
#[derive(Clone, Debug)]
pub struct TensorField {
    atlas: Arc<Atlas>,
    pub r: usize,
    pub s: usize,
    comps: Vec<Vec<Net>>,
}

impl TensorField {
    pub fn new(atlas: Arc<Atlas>, r: usize, s: usize, comps: Vec<Vec<Net>>) -> Result<TensorField> {
        let n = atlas.dim();
        if comps.len() != atlas.len() {
            return Err(Error::AtlasMismatch);
        }
        for c in &comps {
            if c.len() != n.pow((r + s) as u32) {
                return Err(Error::DimensionMismatch {
                    expected: n.pow((r + s) as u32),
                    found: c.len(),
                });
            }
        }
        Ok(TensorField { atlas, r, s, comps })
    }

    /// A field on `ℝⁿ` from its component nets.
    pub fn on_rn(n: usize, r: usize, s: usize, comps: Vec<Net>) -> Result<TensorField> {
        TensorField::new(Arc::new(Atlas::euclidean(n)), r, s, vec![comps])
    }

    /// Chart components of a field given in the ambient parameters.
    pub fn from_ambient(atlas: Arc<Atlas>, r: usize, s: usize, ambient: Vec<Net>) -> Result<TensorField> {
        let n = atlas.dim();
        if ambient.len() != n.pow((r + s) as u32) {
            return Err(Error::DimensionMismatch {
                expected: n.pow((r + s) as u32),
                found: ambient.len(),
            });
        }
        let mut comps = Vec::with_capacity(atlas.len());
        for c in 0..atlas.len() {
            let chart = atlas.charts[c].clone();
            let amb = ambient.clone();
            let count = ambient.len();
            // the whole component array at ε, then one net per component
            let focus: Vec<Vec<f64>> = ambient
                .iter()
                .flat_map(|a| a.focus().iter().cloned())
                .filter(|p| chart.contains(p, 0.0))
                .map(|p| chart.forward(&p))
                .collect();
            let cache = Arc::new(ArrayCache::default());
            let mut per = Vec::with_capacity(count);
            for idx in 0..count {
                let chart = chart.clone();
                let amb = amb.clone();
                let cache = cache.clone();
                per.push(
                    Net::new(n, move |e| {
                        let members: Arc<Vec<SmoothFn>> = Arc::new(amb.iter().map(|a| a.at(e)).collect());
                        let chart = chart.clone();
                        let cache = cache.clone();
                        SmoothFn::new(n, UNLIMITED, move |y, k| {
                            cache.get_or_compute(e, y, k, idx, || {
                                let p = chart.inverse_jets(&Jet::variables(y, k + 1));
                                // K[b][j] = ∂p^b/∂y^j
                                let kmat: Vec<Vec<Jet>> =
                                    (0..n).map(|b| (0..n).map(|j| p[b].partial(j)).collect()).collect();
                                let jmat = jet_matrix_inverse(&kmat).expect("chart Jacobian is invertible");
                                let pk: Vec<Jet> = p.iter().map(|v| v.truncate(k)).collect();
                                let vals: Vec<Jet> = members.iter().map(|m| compose_jets(m, &pk)).collect();
                                transform_components(n, r, s, &vals, &jmat, &kmat)
                            })
                        })
                    })
                    .with_focus(focus.clone()),
                );
            }
            comps.push(per);
        }
        TensorField::new(atlas, r, s, comps)
    }

    /// A smooth field from ambient components.
    pub fn smooth_ambient(atlas: Arc<Atlas>, r: usize, s: usize, ambient: Vec<SmoothFn>) -> Result<TensorField> {
        TensorField::from_ambient(atlas, r, s, ambient.into_iter().map(Net::constant).collect())
    }

    /// The generalized function of a valence `(0, 0)` field.
    pub fn scalar(u: &GeneralizedFunction) -> TensorField {
        TensorField {
            atlas: u.atlas().clone(),
            r: 0,
            s: 0,
            comps: u.nets().iter().map(|n| vec![n.clone()]).collect(),
        }
    }

    pub fn to_function(&self) -> Result<GeneralizedFunction> {
        if self.r + self.s != 0 {
            return Err(Error::InvalidSlots(format!("valence ({}, {}) is not scalar", self.r, self.s)));
        }
        GeneralizedFunction::new(self.atlas.clone(), self.comps.iter().map(|c| c[0].clone()).collect())
    }

    pub fn atlas(&self) -> &Arc<Atlas> {
        &self.atlas
    }

    pub fn dim(&self) -> usize {
        self.atlas.dim()
    }

    pub fn rank(&self) -> usize {
        self.r + self.s
    }

    pub fn components(&self, chart: usize) -> &[Net] {
        &self.comps[chart]
    }

    pub fn comp(&self, chart: usize, idx: &[usize]) -> &Net {
        &self.comps[chart][flat_index(self.dim(), idx)]
    }

    fn check_same(&self, other: &TensorField) -> Result<()> {
        if Arc::ptr_eq(&self.atlas, &other.atlas) || self.atlas.same_as(&other.atlas) {
            Ok(())
        } else {
            Err(Error::AtlasMismatch)
        }
    }

    fn check_fn(&self, u: &GeneralizedFunction) -> Result<()> {
        if Arc::ptr_eq(&self.atlas, u.atlas()) || self.atlas.same_as(u.atlas()) {
            Ok(())
        } else {
            Err(Error::AtlasMismatch)
        }
    }

    fn same_valence(&self, other: &TensorField) -> Result<()> {
        self.check_same(other)?;
        if (self.r, self.s) != (other.r, other.s) {
            return Err(Error::InvalidSlots(format!(
                "valences ({}, {}) and ({}, {})",
                self.r, self.s, other.r, other.s
            )));
        }
        Ok(())
    }

    fn zip(&self, other: &TensorField, op: fn(&Net, &Net) -> Net) -> Result<TensorField> {
        self.same_valence(other)?;
        Ok(TensorField {
            atlas: self.atlas.clone(),
            r: self.r,
            s: self.s,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| op(x, y)).collect())
                .collect(),
        })
    }

    pub fn add(&self, other: &TensorField) -> Result<TensorField> {
        self.zip(other, Net::add)
    }

    pub fn sub(&self, other: &TensorField) -> Result<TensorField> {
        self.zip(other, Net::sub)
    }

    pub fn scale(&self, c: f64) -> TensorField {
        self.map(|n| n.scale(c))
    }

    pub fn map<F: Fn(&Net) -> Net>(&self, f: F) -> TensorField {
        TensorField {
            atlas: self.atlas.clone(),
            r: self.r,
            s: self.s,
            comps: self.comps.iter().map(|c| c.iter().map(&f).collect()).collect(),
        }
    }

    /// `U · T`.
    pub fn mul_fn(&self, u: &GeneralizedFunction) -> Result<TensorField> {
        self.check_fn(u)?;
        Ok(TensorField {
            atlas: self.atlas.clone(),
            r: self.r,
            s: self.s,
            comps: self
                .comps
                .iter()
                .zip(u.nets())
                .map(|(c, un)| c.iter().map(|x| un.mul(x)).collect())
                .collect(),
        })
    }

    /// Jacobian-weighted residuals `T_b(t(y)) − (Dt)·T_a(y)` on overlaps.
    pub fn coherence(&self, settings: &Settings) -> Result<CoherenceReport> {
        let n = self.dim();
        let (r, s) = (self.r, self.s);
        let mut pairs: Vec<OverlapResidual> = Vec::new();
        let count = settings.overlap_lattice_for(n);
        for (a, b) in self.atlas.overlapping_pairs(count, 0.05) {
            if a > b {
                continue;
            }
            let ca = self.comps[a].clone();
            let cb = self.comps[b].clone();
            let atlas = self.atlas.clone();
            let focus: Vec<Vec<f64>> = ca.iter().flat_map(|x| x.focus().iter().cloned()).collect();
            let res = overlap_residual(&self.atlas, a, b, &focus, settings, move |e| {
                let fa: Vec<SmoothFn> = ca.iter().map(|x| x.at(e)).collect();
                let fb: Vec<SmoothFn> = cb.iter().map(|x| x.at(e)).collect();
                let atlas = atlas.clone();
                Box::new(move |y: &[f64]| {
                    let z = atlas.transition(a, b, y);
                    let j = atlas.jacobian(a, b, y);
                    let k = j.clone().try_inverse().expect("transition Jacobian is invertible");
                    let jm: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|l| j[(i, l)]).collect()).collect();
                    let km: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|l| k[(i, l)]).collect()).collect();
                    let va: Vec<f64> = fa.iter().map(|f| f.eval(y)).collect();
                    let vb: Vec<f64> = fb.iter().map(|f| f.eval(&z)).collect();
                    let moved = transform_components(n, r, s, &va, &jm, &km);
                    let mut d = 0.0f64;
                    let mut m = 0.0f64;
                    for (x, w) in moved.iter().zip(&vb) {
                        d = if (x - w).is_nan() { f64::NAN } else { d.max((x - w).abs()) };
                        m = m.max(x.abs()).max(w.abs());
                    }
                    (d, m)
                })
            })?;
            pairs.push(res);
        }
        Ok(CoherenceReport::from_pairs(pairs))
    }

    /// JSON-ready component values on a lattice of the chart work box.
    pub fn component_table(&self, chart: usize, eps: f64, lattice: usize) -> ComponentTable {
        let n = self.dim();
        let points = self.atlas.work_box(chart).lattice(lattice);
        let members: Vec<SmoothFn> = self.comps[chart].iter().map(|c| c.at(eps)).collect();
        let rows = members
            .iter()
            .enumerate()
            .map(|(flat, m)| ComponentRow {
                indices: unflat_index(n, self.rank(), flat),
                values: points.iter().map(|p| m.eval(p)).collect(),
            })
            .collect();
        ComponentTable {
            chart,
            chart_name: self.atlas.charts[chart].name.clone(),
            valence: (self.r, self.s),
            eps,
            points,
            components: rows,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentTable {
    pub chart: usize,
    pub chart_name: String,
    pub valence: (usize, usize),
    pub eps: f64,
    pub points: Vec<Vec<f64>>,
    pub components: Vec<ComponentRow>,
}

/// `S ⊗ T`: upper indices of `S` then `T`, lower indices of `S` then `T`.
pub fn tensor_product(a: &TensorField, b: &TensorField) -> Result<TensorField> {
    a.check_same(b)?;
    let n = a.dim();
    let (r, s) = (a.r + b.r, a.s + b.s);
    let mut comps = Vec::with_capacity(a.atlas.len());
    for c in 0..a.atlas.len() {
        let mut out = Vec::with_capacity(n.pow((r + s) as u32));
        for flat in 0..n.pow((r + s) as u32) {
            let idx = unflat_index(n, r + s, flat);
            let (up, low) = idx.split_at(r);
            let ia: Vec<usize> = up[..a.r].iter().chain(&low[..a.s]).copied().collect();
            let ib: Vec<usize> = up[a.r..].iter().chain(&low[a.s..]).copied().collect();
            out.push(a.comp(c, &ia).mul(b.comp(c, &ib)));
        }
        comps.push(out);
    }
    TensorField::new(a.atlas.clone(), r, s, comps)
}

/// Trace over upper slot `upper` and lower slot `lower` (slot numbers
/// within their groups).
pub fn contract(t: &TensorField, upper: usize, lower: usize) -> Result<TensorField> {
    if upper >= t.r || lower >= t.s {
        return Err(Error::InvalidSlots(format!(
            "slots ({upper}, {lower}) for valence ({}, {})",
            t.r, t.s
        )));
    }
    let n = t.dim();
    let (r, s) = (t.r - 1, t.s - 1);
    let mut comps = Vec::with_capacity(t.atlas.len());
    for c in 0..t.atlas.len() {
        let mut out = Vec::new();
        for flat in 0..n.pow((r + s) as u32) {
            let idx = unflat_index(n, r + s, flat);
            let mut acc: Option<Net> = None;
            for m in 0..n {
                let mut full: Vec<usize> = idx[..r].to_vec();
                full.insert(upper, m);
                let mut low: Vec<usize> = idx[r..].to_vec();
                low.insert(lower, m);
                full.extend(low);
                let term = t.comp(c, &full).clone();
                acc = Some(match acc {
                    None => term,
                    Some(a) => a.add(&term),
                });
            }
            out.push(acc.expect("n ≥ 1"));
        }
        comps.push(out);
    }
    TensorField::new(t.atlas.clone(), r, s, comps)
}

/// `T(A_1, …, A_r, Ξ_1, …, Ξ_s)` for one-forms `A_i` and vector fields `Ξ_j`.
pub fn evaluate(t: &TensorField, forms: &[TensorField], fields: &[TensorField]) -> Result<GeneralizedFunction> {
    if forms.len() != t.r || fields.len() != t.s {
        return Err(Error::InvalidSlots(format!(
            "{} forms and {} fields for valence ({}, {})",
            forms.len(),
            fields.len(),
            t.r,
            t.s
        )));
    }
    let mut cur = t.clone();
    for f in forms {
        if (f.r, f.s) != (0, 1) {
            return Err(Error::InvalidSlots("expected a one-form".into()));
        }
        // contract the first upper slot against the form's lower slot
        let r0 = cur.r;
        cur = contract(&tensor_product(&cur, f)?, 0, cur.s)?;
        debug_assert_eq!(cur.r, r0 - 1);
    }
    for x in fields {
        if (x.r, x.s) != (1, 0) {
            return Err(Error::InvalidSlots("expected a vector field".into()));
        }
        cur = contract(&tensor_product(&cur, x)?, cur.r, 0)?;
    }
    cur.to_function()
}

/// `Ξ(U) = Ξ^i ∂_i U` chartwise.
pub fn apply_field(xi: &TensorField, u: &GeneralizedFunction) -> Result<GeneralizedFunction> {
    if (xi.r, xi.s) != (1, 0) {
        return Err(Error::InvalidSlots("expected a vector field".into()));
    }
    xi.check_fn(u)?;
    let n = xi.dim();
    let nets = (0..xi.atlas.len())
        .map(|c| {
            let mut acc = xi.comps[c][0].mul(&u.net(c).d(0));
            for i in 1..n {
                acc = acc.add(&xi.comps[c][i].mul(&u.net(c).d(i)));
            }
            acc
        })
        .collect();
    GeneralizedFunction::new(xi.atlas.clone(), nets)
}

/// `L_Ξ T` per ε by the chartwise formula
/// `Ξ^k ∂_k T − Σ_upper (∂_k Ξ^{i_p}) T^{..k..} + Σ_lower (∂_{j_q} Ξ^k) T_{..k..}`.
/// The field may be smooth (ε-independent) or generalized.
pub fn gen_lie_derivative(t: &TensorField, xi: &TensorField) -> Result<TensorField> {
    if (xi.r, xi.s) != (1, 0) {
        return Err(Error::InvalidSlots("expected a vector field".into()));
    }
    t.check_same(xi)?;
    let n = t.dim();
    let rank = t.rank();
    let mut comps = Vec::with_capacity(t.atlas.len());
    for c in 0..t.atlas.len() {
        let probe = t.comps[c].first().map(|x| x.at(0.0625).max_order()).unwrap_or(UNLIMITED);
        let probe_xi = xi.comps[c][0].at(0.0625).max_order();
        if probe < 1 || probe_xi < 1 {
            return Err(Error::DerivativeUnavailable {
                requested: 1,
                available: probe.min(probe_xi),
            });
        }
        let x = &xi.comps[c];
        let mut out = Vec::with_capacity(t.comps[c].len());
        for flat in 0..t.comps[c].len() {
            let idx = unflat_index(n, rank, flat);
            let mut acc = x[0].mul(&t.comps[c][flat].d(0));
            for k in 1..n {
                acc = acc.add(&x[k].mul(&t.comps[c][flat].d(k)));
            }
            for p in 0..rank {
                for k in 0..n {
                    let mut src = idx.clone();
                    src[p] = k;
                    let tk = &t.comps[c][flat_index(n, &src)];
                    if p < t.r {
                        acc = acc.sub(&x[idx[p]].d(k).mul(tk));
                    } else {
                        acc = acc.add(&x[k].d(idx[p]).mul(tk));
                    }
                }
            }
            out.push(acc);
        }
        comps.push(out);
    }
    TensorField::new(t.atlas.clone(), t.r, t.s, comps)
}

/// `L_ξ T` for a smooth field `ξ`; the field's component nets must not
/// depend on ε.
pub fn lie_derivative_tensor(t: &TensorField, xi: &TensorField) -> Result<TensorField> {
    for c in 0..xi.atlas.len() {
        for comp in &xi.comps[c] {
            let p = xi.atlas.work_box(c).lo.clone();
            if comp.at(0.0625).eval(&p) != comp.at(1e-4).eval(&p) {
                return Err(Error::InvalidSlots("vector field depends on ε".into()));
            }
        }
    }
    gen_lie_derivative(t, xi)
}

/// `[Ξ, H] = L_Ξ H`.
pub fn bracket(xi: &TensorField, h: &TensorField) -> Result<TensorField> {
    if (h.r, h.s) != (1, 0) {
        return Err(Error::InvalidSlots("expected a vector field".into()));
    }
    gen_lie_derivative(h, xi)
}

/// A derivation acting on generalized functions.
pub type Derivation<'a> = &'a (dyn Fn(&GeneralizedFunction) -> Result<GeneralizedFunction> + Sync);

#[derive(Clone, Debug, Serialize)]
pub struct ProbeCheck {
    pub probe: String,
    pub chart: usize,
    pub eps: f64,
    pub defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivationReport {
    pub leibniz: Vec<ProbeCheck>,
    pub max_leibniz_defect: f64,
    pub residuals: Vec<crate::gfunc::ChartFit>,
    pub worst_residual_slope: f64,
}

/// Probe generalized functions: coordinates, their squares, and seeded
/// random nets of trigonometric polynomials in the ambient parameters.
fn probes(atlas: &Arc<Atlas>, seed: u64) -> Vec<(String, GeneralizedFunction)> {
    let n = atlas.dim();
    let mut out = Vec::new();
    for c in 0..atlas.len() {
        for i in 0..n {
            out.push((format!("chart{c}-y{i}"), coordinate_probe(atlas, c, i, 1)));
            out.push((format!("chart{c}-y{i}^2"), coordinate_probe(atlas, c, i, 2)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in 0..5 {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..n).map(|_| rng.gen_range(1..3u32) as f64).collect();
        let b = rng.gen_range(-1.0..1.0);
        let amb = Net::new(n, move |e| {
            let (a, k) = (a.clone(), k.clone());
            SmoothFn::new(n, UNLIMITED, move |x, ord| {
                let v = Jet::variables(x, ord);
                let mut acc = Jet::constant(n, ord, b);
                for i in 0..n {
                    acc = acc.add(&v[i].scale(k[i]).sin().scale(a[i]));
                }
                acc.add(&acc.mul(&acc).scale(e)).add_scalar(e)
            })
        });
        out.push((format!("random{m}"), GeneralizedFunction::from_ambient(atlas.clone(), amb)));
    }
    out
}

/// The coordinate function `y_i^power` of chart `c`; zero in other charts.
/// Derivations are local, so only the chart-`c` output is read.
fn coordinate_probe(atlas: &Arc<Atlas>, c: usize, i: usize, power: u32) -> GeneralizedFunction {
    let n = atlas.dim();
    let nets = (0..atlas.len())
        .map(|j| {
            if j == c {
                let mut e = vec![0u32; n];
                e[i] = power;
                Net::constant(SmoothFn::polynomial(n, vec![(e, 1.0)]))
            } else {
                Net::zero(n)
            }
        })
        .collect();
    GeneralizedFunction::new(atlas.clone(), nets).expect("probe matches atlas")
}

fn sample_points(atlas: &Atlas, c: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let b = atlas.work_box(c);
    (0..count)
        .map(|_| b.lo.iter().zip(&b.hi).map(|(l, h)| rng.gen_range(*l..*h)).collect())
        .collect()
}

/// Reconstructs `Ξ` with `Ξ^i_α = θ(y^i_α)` from a derivation `θ`, after
/// checking linearity and the Leibniz rule on probes, and measures
/// `θ(U) − Ξ(U)` on the probes.
pub fn derivation_to_vector_field(
    theta: Derivation<'_>,
    atlas: Arc<Atlas>,
    seed: u64,
    settings: &Settings,
) -> Result<(TensorField, DerivationReport)> {
    let n = atlas.dim();
    let mut comps = Vec::with_capacity(atlas.len());
    for c in 0..atlas.len() {
        let mut per = Vec::with_capacity(n);
        for i in 0..n {
            per.push(theta(&coordinate_probe(&atlas, c, i, 1))?.net(c).clone());
        }
        comps.push(per);
    }
    let xi = TensorField::new(atlas.clone(), 1, 0, comps)?;

    let probes = probes(&atlas, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let grid = settings.grid.values();
    let eps_probe = [grid[0], grid[grid.len() / 2], grid[grid.len() - 1]];
    let mut leibniz = Vec::new();
    let mut worst = 0.0f64;
    for w in probes.windows(2) {
        let (name_u, u) = &w[0];
        let (name_v, v) = &w[1];
        let tuv = theta(&u.mul(v)?)?;
        let tu = theta(u)?;
        let tv = theta(v)?;
        let lin = theta(&u.add(&v.scale(2.0))?)?;
        for c in 0..atlas.len() {
            let pts = sample_points(&atlas, c, PROBE_POINTS, &mut rng);
            for &e in &eps_probe {
                let (fu, fv) = (u.net(c).at(e), v.net(c).at(e));
                let (gu, gv, guv, gl) = (tu.net(c).at(e), tv.net(c).at(e), tuv.net(c).at(e), lin.net(c).at(e));
                let mut defect = 0.0f64;
                for p in &pts {
                    let (a, b, da, db) = (fu.eval(p), fv.eval(p), gu.eval(p), gv.eval(p));
                    let scale = 1.0 + (da * b).abs() + (a * db).abs() + da.abs() + db.abs();
                    let leib = (guv.eval(p) - da * b - a * db).abs() / scale;
                    let linr = (gl.eval(p) - da - 2.0 * db).abs() / scale;
                    defect = defect.max(leib).max(linr);
                }
                if defect.is_nan() || defect > LEIBNIZ_TOL {
                    return Err(Error::NotADerivation(format!(
                        "probes {name_u}, {name_v} in chart {c} at ε = {e}: defect {defect:e}"
                    )));
                }
                worst = worst.max(defect);
                leibniz.push(ProbeCheck {
                    probe: format!("{name_u}*{name_v}"),
                    chart: c,
                    eps: e,
                    defect,
                });
            }
        }
    }

    let mut residuals = Vec::new();
    let boxes: Vec<BoxDomain> = (0..atlas.len()).map(|c| atlas.work_box(c)).collect();
    let coarse = settings.clone().with_lattice(settings.lattice.min(41));
    for (_, u) in probes.iter().filter(|(name, _)| name.starts_with("random")) {
        let d = theta(u)?.sub(&apply_field(&xi, u)?)?;
        let reference = crate::gfunc::classify_on(&theta(u)?, &[vec![0u8; n]], &boxes, &coarse, None)?
            .rows
            .iter()
            .flat_map(|r| r.fit.sups.iter().copied())
            .fold(1.0, f64::max);
        let rep = crate::gfunc::classify_on(&d, &[vec![0u8; n]], &boxes, &coarse, Some(reference))?;
        residuals.extend(rep.rows);
    }
    let worst_residual_slope = residuals.iter().map(|r| r.fit.fit.slope).fold(f64::INFINITY, f64::min);
    Ok((
        xi,
        DerivationReport {
            leibniz,
            max_leibniz_defect: worst,
            residuals,
            worst_residual_slope,
        },
    ))
}
