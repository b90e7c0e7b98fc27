//! Truncated multivariate Taylor polynomials ("jets").
//!
//! A [`Jet`] of order `k` in `n` variables stores the Taylor coefficients
//! `c_α = ∂^α f(x₀) / α!` for every multi-index with `|α| ≤ k`. Arithmetic on
//! jets is forward-mode automatic differentiation: every derivative that a
//! representative reports is obtained by exact propagation of these
//! coefficients, never by differencing.
//!
//! Coefficients are stored in graded-lexicographic order, so truncating to a
//! lower order is a prefix slice.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

/// Index bookkeeping shared by all jets of the same `(dim, order)`.
#[derive(Debug)]
pub struct Layout {
    dim: usize,
    order: usize,
    indices: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    degree: Vec<usize>,
    /// `(i, j, k)` with `indices[i] + indices[j] == indices[k]`.
    products: Vec<(u32, u32, u32)>,
    /// `α!` for each index.
    factorial: Vec<f64>,
    /// For each nonzero index: `(parent, axis)` with `parent + e_axis == index`.
    parent: Vec<(usize, usize)>,
}

impl Layout {
    fn build(dim: usize, order: usize) -> Layout {
        let mut indices: Vec<Vec<u8>> = Vec::new();
        for deg in 0..=order {
            let mut current = vec![0u8; dim];
            push_degree(&mut indices, &mut current, 0, deg);
        }
        let lookup: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let degree: Vec<usize> = indices
            .iter()
            .map(|a| a.iter().map(|&v| v as usize).sum())
            .collect();
        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u32, j as u32, lookup[&sum] as u32));
            }
        }
        let factorial = indices
            .iter()
            .map(|a| a.iter().map(|&v| factorial(v as usize)).product())
            .collect();
        let parent = indices
            .iter()
            .map(|a| match a.iter().position(|&v| v > 0) {
                None => (0, 0),
                Some(axis) => {
                    let mut p = a.clone();
                    p[axis] -= 1;
                    (lookup[&p], axis)
                }
            })
            .collect();
        Layout {
            dim,
            order,
            indices,
            lookup,
            degree,
            products,
            factorial,
            parent,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    pub fn multi_index(&self, i: usize) -> &[u8] {
        &self.indices[i]
    }

    /// Number of coefficients of total degree `≤ order`.
    pub fn count_up_to(&self, order: usize) -> usize {
        self.degree.partition_point(|&d| d <= order)
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, current: &mut Vec<u8>, axis: usize, remaining: usize) {
    if axis + 1 == current.len() {
        current[axis] = remaining as u8;
        out.push(current.clone());
        current[axis] = 0;
        return;
    }
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for v in (0..=remaining).rev() {
        current[axis] = v as u8;
        push_degree(out, current, axis + 1, remaining - v);
    }
    current[axis] = 0;
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

type LayoutCache = RwLock<HashMap<(usize, usize), Arc<Layout>>>;

const SMALL_DIM: usize = 5;
const SMALL_ORDER: usize = 17;
#[allow(clippy::declare_interior_mutable_const)]
const EMPTY_SLOT: OnceLock<Arc<Layout>> = OnceLock::new();
#[allow(clippy::declare_interior_mutable_const)]
const EMPTY_ROW: [OnceLock<Arc<Layout>>; SMALL_ORDER] = [EMPTY_SLOT; SMALL_ORDER];

/// Shared layout for `(dim, order)`; built once per process.
pub fn layout(dim: usize, order: usize) -> Arc<Layout> {
    // lock-free slots for the common small cases
    static SMALL: [[OnceLock<Arc<Layout>>; SMALL_ORDER]; SMALL_DIM] = [EMPTY_ROW; SMALL_DIM];
    if dim < SMALL_DIM && order < SMALL_ORDER {
        return Arc::clone(SMALL[dim][order].get_or_init(|| Arc::new(Layout::build(dim, order))));
    }
    static CACHE: OnceLock<LayoutCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(l) = cache.read().expect("layout cache poisoned").get(&(dim, order)) {
        return Arc::clone(l);
    }
    let built = Arc::new(Layout::build(dim, order));
    let mut w = cache.write().expect("layout cache poisoned");
    Arc::clone(w.entry((dim, order)).or_insert(built))
}

/// Truncated Taylor expansion of a scalar function about a point.
#[derive(Clone, Debug)]
pub struct Jet {
    layout: Arc<Layout>,
    coeffs: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn zero(dim: usize, order: usize) -> Jet {
        let layout = layout(dim, order);
        let coeffs = vec![0.0; layout.len()];
        Jet { layout, coeffs }
    }

    pub fn constant(dim: usize, order: usize, value: f64) -> Jet {
        let mut j = Jet::zero(dim, order);
        j.coeffs[0] = value;
        j
    }

    /// The coordinate function `x ↦ x_axis` expanded about a point whose
    /// `axis`-th coordinate is `value`.
    pub fn variable(dim: usize, order: usize, axis: usize, value: f64) -> Jet {
        let mut j = Jet::constant(dim, order, value);
        if order >= 1 {
            let mut e = vec![0u8; dim];
            e[axis] = 1;
            let idx = j.layout.index_of(&e).expect("unit index");
            j.coeffs[idx] = 1.0;
        }
        j
    }

    /// Jets of all coordinate functions at `x`.
    pub fn variables(x: &[f64], order: usize) -> Vec<Jet> {
        (0..x.len())
            .map(|i| Jet::variable(x.len(), order, i, x[i]))
            .collect()
    }

    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Jet {
        let layout = layout(dim, order);
        assert_eq!(coeffs.len(), layout.len(), "coefficient count mismatch");
        Jet { layout, coeffs }
    }

    /// Embeds univariate Taylor coefficients `c_m` of `g` at `x₀[axis]` as the
    /// jet of `x ↦ g(x_axis)` in `dim` variables.
    pub fn from_univariate(dim: usize, order: usize, axis: usize, coeffs: &[f64]) -> Jet {
        let mut j = Jet::zero(dim, order);
        let mut e = vec![0u8; dim];
        for (m, &c) in coeffs.iter().enumerate().take(order + 1) {
            e[axis] = m as u8;
            let idx = j.layout.index_of(&e).expect("axis power index");
            j.coeffs[idx] = c;
        }
        j
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Taylor coefficient `∂^α f / α!`; zero when `|α|` exceeds the order.
    pub fn coeff(&self, alpha: &[u8]) -> f64 {
        self.layout
            .index_of(alpha)
            .map(|i| self.coeffs[i])
            .unwrap_or(0.0)
    }

    /// The partial derivative `∂^α f(x₀)`.
    pub fn derivative(&self, alpha: &[u8]) -> f64 {
        match self.layout.index_of(alpha) {
            Some(i) => self.coeffs[i] * self.layout.factorial[i],
            None => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let layout = layout(self.dim(), order);
        let coeffs = self.coeffs[..layout.len()].to_vec();
        Jet { layout, coeffs }
    }

    fn same_shape(&self, other: &Jet) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout)
            || (self.dim() == other.dim() && self.order() == other.order())
    }

    fn aligned<'a>(&'a self, other: &'a Jet) -> (Jet, Jet) {
        let order = self.order().min(other.order());
        (self.truncate(order), other.truncate(order))
    }

    pub fn add(&self, other: &Jet) -> Jet {
        if !self.same_shape(other) {
            let (a, b) = self.aligned(other);
            return a.add(&b);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Jet {
            layout: Arc::clone(&self.layout),
            coeffs,
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        if !self.same_shape(other) {
            let (a, b) = self.aligned(other);
            return a.sub(&b);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Jet {
            layout: Arc::clone(&self.layout),
            coeffs,
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            layout: Arc::clone(&self.layout),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Jet of `x ↦ f(t x)` from the jet of `f` at `t x`: degree-`d`
    /// coefficients times `t^d`.
    pub fn dilate(&self, t: f64) -> Jet {
        let mut pow = vec![1.0; self.order() + 1];
        for d in 1..pow.len() {
            pow[d] = pow[d - 1] * t;
        }
        Jet {
            layout: Arc::clone(&self.layout),
            coeffs: self.coeffs.iter().zip(&self.layout.degree).map(|(c, d)| c * pow[*d]).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn add_assign(&mut self, other: &Jet) {
        if self.same_shape(other) {
            for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
                *a += b;
            }
        } else {
            *self = self.add(other);
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        if self.same_shape(other) {
            for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
                *a += s * b;
            }
        } else {
            *self = self.add(&other.scale(s));
        }
    }

    /// Truncated product.
    pub fn mul(&self, other: &Jet) -> Jet {
        if !self.same_shape(other) {
            let (a, b) = self.aligned(other);
            return a.mul(&b);
        }
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.layout.products {
            coeffs[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Jet {
            layout: Arc::clone(&self.layout),
            coeffs,
        }
    }

    /// `∂_axis` of the expansion; the result has order one less.
    pub fn partial(&self, axis: usize) -> Jet {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let target = layout(self.dim(), self.order() - 1);
        let mut coeffs = vec![0.0; target.len()];
        let mut shifted = vec![0u8; self.dim()];
        for (i, alpha) in target.indices.iter().enumerate() {
            shifted.copy_from_slice(alpha);
            shifted[axis] += 1;
            let src = self.layout.index_of(&shifted).expect("shifted index in range");
            coeffs[i] = self.coeffs[src] * shifted[axis] as f64;
        }
        Jet {
            layout: target,
            coeffs,
        }
    }

    /// Iterated partial `∂^α`; the result has order `order − |α|`.
    ///
    /// Each coefficient is a single product with the integer `(γ+α)!/γ!`, so
    /// the result does not depend on the order in which axes are visited.
    pub fn partial_multi(&self, alpha: &[u8]) -> Jet {
        let total: usize = alpha.iter().map(|&a| a as usize).sum();
        assert!(total <= self.order(), "derivative order exceeds jet order");
        let target = layout(self.dim(), self.order() - total);
        let mut coeffs = vec![0.0; target.len()];
        let mut shifted = vec![0u8; self.dim()];
        for (i, gamma) in target.indices.iter().enumerate() {
            let mut ratio = 1.0;
            for axis in 0..self.dim() {
                shifted[axis] = gamma[axis] + alpha[axis];
                for v in (gamma[axis] as usize + 1)..=(shifted[axis] as usize) {
                    ratio *= v as f64;
                }
            }
            let src = self.layout.index_of(&shifted).expect("shifted index in range");
            coeffs[i] = self.coeffs[src] * ratio;
        }
        Jet {
            layout: target,
            coeffs,
        }
    }

    /// The nilpotent part `self − self(x₀)`.
    fn nilpotent(&self) -> Jet {
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        h
    }

    /// `g ∘ self` where `g(y₀ + t) = Σ_m coeffs[m] t^m` about `y₀ = self.value()`.
    pub fn compose_univariate(&self, coeffs: &[f64]) -> Jet {
        let order = self.order();
        let h = self.nilpotent();
        let top = order.min(coeffs.len().saturating_sub(1));
        let mut acc = Jet::constant(self.dim(), order, coeffs.get(top).copied().unwrap_or(0.0));
        for m in (0..top).rev() {
            acc = acc.mul(&h);
            acc.coeffs[0] += coeffs[m];
        }
        acc
    }

    /// Multivariate composition `outer ∘ inner`: `outer` is expanded in
    /// `inner.len()` variables about the point `(inner[i].value())`.
    pub fn compose(outer: &Jet, inner: &[Jet]) -> Jet {
        assert_eq!(outer.dim(), inner.len(), "composition arity mismatch");
        let base = &inner[0];
        let dim = base.dim();
        let order = inner
            .iter()
            .map(Jet::order)
            .min()
            .unwrap_or(0)
            .min(outer.order());
        let hs: Vec<Jet> = inner.iter().map(|j| j.truncate(order).nilpotent()).collect();
        let count = outer.layout.count_up_to(order);
        let mut monomials: Vec<Jet> = Vec::with_capacity(count);
        let mut result = Jet::constant(dim, order, outer.coeffs[0]);
        monomials.push(Jet::constant(dim, order, 1.0));
        for idx in 1..count {
            let (parent, axis) = outer.layout.parent[idx];
            let m = monomials[parent].mul(&hs[axis]);
            let c = outer.coeffs[idx];
            if c != 0.0 {
                result.axpy(c, &m);
            }
            monomials.push(m);
        }
        result
    }

    pub fn recip(&self) -> Jet {
        let v = self.value();
        let k = self.order();
        let mut coeffs = Vec::with_capacity(k + 1);
        let mut term = 1.0 / v;
        for _ in 0..=k {
            coeffs.push(term);
            term *= -1.0 / v;
        }
        self.compose_univariate(&coeffs)
    }

    pub fn div(&self, other: &Jet) -> Jet {
        self.mul(&other.recip())
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let coeffs: Vec<f64> = (0..=self.order()).map(|m| e / factorial(m)).collect();
        self.compose_univariate(&coeffs)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose_univariate(&sin_series(s, c, self.order()))
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        // cos(y + t) = sin(y + π/2 + t)
        self.compose_univariate(&sin_series(c, -s, self.order()))
    }

    /// `tan`, from the recurrence `tan' = 1 + tan²`.
    pub fn tan(&self) -> Jet {
        let k = self.order();
        let mut t = vec![0.0; k + 1];
        t[0] = self.value().tan();
        for m in 0..k {
            let mut conv: f64 = (0..=m).map(|j| t[j] * t[m - j]).sum();
            if m == 0 {
                conv += 1.0;
            }
            t[m + 1] = conv / (m + 1) as f64;
        }
        self.compose_univariate(&t)
    }

    /// `atan`, by integrating the expansion of `1 / (1 + y²)`.
    pub fn atan(&self) -> Jet {
        let k = self.order();
        let y0 = self.value();
        let mut coeffs = vec![y0.atan()];
        if k >= 1 {
            let y = Jet::variable(1, k - 1, 0, y0);
            let d = y.mul(&y).add_scalar(1.0).recip();
            for m in 0..k {
                coeffs.push(d.coeffs[m] / (m + 1) as f64);
            }
        }
        self.compose_univariate(&coeffs)
    }

    pub fn sqrt(&self) -> Jet {
        let v = self.value();
        let k = self.order();
        // (1 + u)^{1/2} binomial series scaled by sqrt(v)
        let mut coeffs = Vec::with_capacity(k + 1);
        let s = v.sqrt();
        let mut gen_binom = 1.0;
        for m in 0..=k {
            coeffs.push(s * gen_binom / v.powi(m as i32));
            gen_binom *= (0.5 - m as f64) / (m + 1) as f64;
        }
        self.compose_univariate(&coeffs)
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut out = Jet::constant(self.dim(), self.order(), 1.0);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }
}

fn sin_series(s: f64, c: f64, order: usize) -> Vec<f64> {
    let cycle = [s, c, -s, -c];
    (0..=order).map(|m| cycle[m % 4] / factorial(m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts_match_binomials() {
        for dim in 1..=4 {
            for order in 0..=6 {
                let l = layout(dim, order);
                assert_eq!(l.len() as f64, binomial(dim + order, order));
                for k in 0..=order {
                    assert_eq!(l.count_up_to(k) as f64, binomial(dim + k, k));
                }
            }
        }
    }

    #[test]
    fn product_rule_matches_closed_form() {
        // f = x*y^2 at (2, 3): ∂x∂y f = 2y = 6, ∂y² f = 2x = 4
        let v = Jet::variables(&[2.0, 3.0], 3);
        let f = v[0].mul(&v[1]).mul(&v[1]);
        assert_eq!(f.value(), 18.0);
        assert_eq!(f.derivative(&[1, 1]), 6.0);
        assert_eq!(f.derivative(&[0, 2]), 4.0);
        assert_eq!(f.derivative(&[1, 2]), 2.0);
        assert_eq!(f.derivative(&[2, 0]), 0.0);
    }

    #[test]
    fn elementary_functions_have_known_derivatives() {
        let x = Jet::variable(1, 4, 0, 0.3);
        let s = x.sin();
        assert!((s.derivative(&[3]) + 0.3f64.cos()).abs() < 1e-14);
        let e = x.exp();
        assert!((e.derivative(&[4]) - 0.3f64.exp()).abs() < 1e-13);
        let r = x.recip();
        assert!((r.derivative(&[2]) - 2.0 / 0.3f64.powi(3)).abs() < 1e-10);
        let a = x.atan();
        // atan'' = -2y/(1+y^2)^2
        assert!((a.derivative(&[2]) + 0.6 / (1.09f64 * 1.09)).abs() < 1e-14);
        let t = x.tan();
        let sec2 = 1.0 / 0.3f64.cos().powi(2);
        assert!((t.derivative(&[1]) - sec2).abs() < 1e-14);
        let q = x.add_scalar(1.0).sqrt();
        assert!((q.derivative(&[1]) - 0.5 / 1.3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn composition_chain_rule() {
        // outer g(u, v) = u * v, inner u = sin x, v = x^2 at x = 0.7
        let x = Jet::variable(1, 3, 0, 0.7);
        let u = x.sin();
        let v = x.mul(&x);
        let outer = {
            let w = Jet::variables(&[u.value(), v.value()], 3);
            w[0].mul(&w[1])
        };
        let composed = Jet::compose(&outer, &[u.clone(), v.clone()]);
        let direct = u.mul(&v);
        for (a, b) in composed.coeffs().iter().zip(direct.coeffs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn mixed_partials_commute_exactly() {
        let v = Jet::variables(&[0.4, -1.1, 0.25], 4);
        let f = v[0].mul(&v[1]).sin().mul(&v[2].exp()).add(&v[1].mul(&v[2]).cos());
        let a = f.partial_multi(&[1, 1, 1]);
        let b = f.partial(2).partial(0).partial(1);
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
        }
        assert_eq!(a.value(), f.derivative(&[1, 1, 1]));
    }
}
