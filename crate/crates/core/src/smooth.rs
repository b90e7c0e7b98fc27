//! Smooth-function representatives at a fixed regularization parameter.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Derivative order treated as unlimited (analytic expressions).
pub const UNLIMITED: usize = usize::MAX / 2;

type JetFn = dyn Fn(&[f64], usize) -> Jet + Send + Sync;

/// A smooth function `ℝ^dim → ℝ` that reports Taylor jets.
///
/// `max_order` bounds the derivative order the representative supplies
/// analytically. Requests beyond it fail with [`Error::DerivativeUnavailable`]
/// unless the finite-difference fallback is requested explicitly.
#[derive(Clone)]
pub struct SmoothFn {
    dim: usize,
    max_order: usize,
    f: Arc<JetFn>,
}

impl fmt::Debug for SmoothFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothFn")
            .field("dim", &self.dim)
            .field("max_order", &self.max_order)
            .finish_non_exhaustive()
    }
}

impl SmoothFn {
    pub fn new<F>(dim: usize, max_order: usize, f: F) -> SmoothFn
    where
        F: Fn(&[f64], usize) -> Jet + Send + Sync + 'static,
    {
        SmoothFn {
            dim,
            max_order,
            f: Arc::new(f),
        }
    }

    pub fn constant(dim: usize, c: f64) -> SmoothFn {
        SmoothFn::new(dim, UNLIMITED, move |_, k| Jet::constant(dim, k, c))
    }

    pub fn zero(dim: usize) -> SmoothFn {
        SmoothFn::constant(dim, 0.0)
    }

    pub fn coordinate(dim: usize, axis: usize) -> SmoothFn {
        assert!(axis < dim, "axis out of range");
        SmoothFn::new(dim, UNLIMITED, move |x, k| Jet::variable(dim, k, axis, x[axis]))
    }

    /// `Σ c · Π x_i^{e_i}` over `(exponents, c)` terms.
    pub fn polynomial(dim: usize, terms: Vec<(Vec<u32>, f64)>) -> SmoothFn {
        let top: Vec<u32> = (0..dim)
            .map(|i| terms.iter().map(|(e, _)| e.get(i).copied().unwrap_or(0)).max().unwrap_or(0))
            .collect();
        SmoothFn::new(dim, UNLIMITED, move |x, k| {
            let vars = Jet::variables(x, k);
            // powers[i][e] = x_i^e
            let powers: Vec<Vec<Jet>> = vars
                .iter()
                .zip(&top)
                .map(|(v, &t)| {
                    let mut p = vec![Jet::constant(dim, k, 1.0)];
                    for e in 1..=t as usize {
                        p.push(p[e - 1].mul(v));
                    }
                    p
                })
                .collect();
            let mut acc = Jet::zero(dim, k);
            for (exps, c) in &terms {
                let mut m: Option<Jet> = None;
                for (i, &e) in exps.iter().enumerate() {
                    if e > 0 {
                        m = Some(match m {
                            None => powers[i][e as usize].clone(),
                            Some(m) => m.mul(&powers[i][e as usize]),
                        });
                    }
                }
                match m {
                    None => acc.coeffs_mut()[0] += c,
                    Some(m) => acc.axpy(*c, &m),
                }
            }
            acc
        })
    }

    /// A univariate function given by its Taylor coefficients
    /// `coeffs(x₀, k) = [g(x₀), g'(x₀), g''(x₀)/2, …]` (length `k + 1`).
    pub fn univariate<F>(max_order: usize, coeffs: F) -> SmoothFn
    where
        F: Fn(f64, usize) -> Vec<f64> + Send + Sync + 'static,
    {
        SmoothFn::new(1, max_order, move |x, k| {
            Jet::from_coeffs(1, k, coeffs(x[0], k))
        })
    }

    /// Builds a function from a map on coordinate jets.
    pub fn from_jet_map<F>(dim: usize, f: F) -> SmoothFn
    where
        F: Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    {
        SmoothFn::new(dim, UNLIMITED, move |x, k| f(&Jet::variables(x, k)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn with_max_order(mut self, max_order: usize) -> SmoothFn {
        self.max_order = max_order;
        self
    }

    /// Jet without capability check; callers must respect `max_order`.
    pub(crate) fn jet_unchecked(&self, x: &[f64], order: usize) -> Jet {
        debug_assert_eq!(x.len(), self.dim, "point dimension mismatch");
        (self.f)(x, order)
    }

    pub fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        if order > self.max_order {
            return Err(Error::DerivativeUnavailable {
                requested: order,
                available: self.max_order,
            });
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.jet_unchecked(x, order))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.jet_unchecked(x, 0).value()
    }

    /// `∂^α f(x)` from the analytic jet.
    pub fn partial(&self, alpha: &[u8], x: &[f64]) -> Result<f64> {
        let order: usize = alpha.iter().map(|&a| a as usize).sum();
        Ok(self.jet(x, order)?.derivative(alpha))
    }

    /// `∂^α f(x)`, falling back to Richardson-extrapolated central differences
    /// of `eval` when the order exceeds `max_order` and `allow_fd` is set.
    /// The flag in the result reports whether the fallback was used.
    pub fn partial_or_fd(&self, alpha: &[u8], x: &[f64], allow_fd: bool) -> Result<(f64, bool)> {
        let order: usize = alpha.iter().map(|&a| a as usize).sum();
        if order <= self.max_order {
            return Ok((self.jet(x, order)?.derivative(alpha), false));
        }
        if !allow_fd || order > 4 {
            return Err(Error::DerivativeUnavailable {
                requested: order,
                available: self.max_order,
            });
        }
        Ok((fd_partial(self, alpha, x, 1e-2), true))
    }

    /// The function `∂_axis f`.
    pub fn d(&self, axis: usize) -> SmoothFn {
        let inner = self.clone();
        SmoothFn::new(self.dim, self.max_order.saturating_sub(1), move |x, k| {
            inner.jet_unchecked(x, k + 1).partial(axis)
        })
    }

    /// The function `∂^α f`.
    pub fn d_multi(&self, alpha: &[u8]) -> SmoothFn {
        let total: usize = alpha.iter().map(|&a| a as usize).sum();
        if total == 0 {
            return self.clone();
        }
        let inner = self.clone();
        let alpha = alpha.to_vec();
        SmoothFn::new(self.dim, self.max_order.saturating_sub(total), move |x, k| {
            inner.jet_unchecked(x, k + total).partial_multi(&alpha)
        })
    }

    pub fn add(&self, other: &SmoothFn) -> SmoothFn {
        self.zip(other, |a, b| a.add(&b))
    }

    pub fn sub(&self, other: &SmoothFn) -> SmoothFn {
        self.zip(other, |a, b| a.sub(&b))
    }

    pub fn mul(&self, other: &SmoothFn) -> SmoothFn {
        self.zip(other, |a, b| a.mul(&b))
    }

    pub fn scale(&self, s: f64) -> SmoothFn {
        self.map_jet(move |j| j.scale(s))
    }

    pub fn neg(&self) -> SmoothFn {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, s: f64) -> SmoothFn {
        self.map_jet(move |j| j.add_scalar(s))
    }

    pub fn map_jet<F>(&self, f: F) -> SmoothFn
    where
        F: Fn(Jet) -> Jet + Send + Sync + 'static,
    {
        let inner = self.clone();
        SmoothFn::new(self.dim, self.max_order, move |x, k| f(inner.jet_unchecked(x, k)))
    }

    pub fn zip<F>(&self, other: &SmoothFn, f: F) -> SmoothFn
    where
        F: Fn(Jet, Jet) -> Jet + Send + Sync + 'static,
    {
        assert_eq!(self.dim, other.dim, "dimension mismatch in combination");
        let a = self.clone();
        let b = other.clone();
        SmoothFn::new(self.dim, self.max_order.min(other.max_order), move |x, k| {
            f(a.jet_unchecked(x, k), b.jet_unchecked(x, k))
        })
    }

    pub fn sin(&self) -> SmoothFn {
        self.map_jet(|j| j.sin())
    }

    pub fn cos(&self) -> SmoothFn {
        self.map_jet(|j| j.cos())
    }

    pub fn exp(&self) -> SmoothFn {
        self.map_jet(|j| j.exp())
    }

    /// `self ∘ (inner_1, …, inner_m)`; every inner function shares one
    /// input dimension.
    pub fn compose(&self, inner: &[SmoothFn]) -> SmoothFn {
        assert_eq!(inner.len(), self.dim, "composition arity mismatch");
        let dim = inner.first().map(|g| g.dim).unwrap_or(0);
        let outer = self.clone();
        let inner: Vec<SmoothFn> = inner.to_vec();
        let max_order = inner
            .iter()
            .map(|g| g.max_order)
            .min()
            .unwrap_or(UNLIMITED)
            .min(self.max_order);
        SmoothFn::new(dim, max_order, move |x, k| {
            let jets: Vec<Jet> = inner.iter().map(|g| g.jet_unchecked(x, k)).collect();
            compose_jets(&outer, &jets)
        })
    }

    /// `f ∘ φ` where `φ` is supplied as a map on coordinate jets.
    pub fn pullback<F>(&self, dim: usize, phi: F) -> SmoothFn
    where
        F: Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    {
        let outer = self.clone();
        SmoothFn::new(dim, self.max_order, move |x, k| {
            let jets = phi(&Jet::variables(x, k));
            compose_jets(&outer, &jets)
        })
    }
}

/// Evaluates `outer` on jets by composing its own expansion at the inner
/// values.
pub fn compose_jets(outer: &SmoothFn, inner: &[Jet]) -> Jet {
    let k = inner.iter().map(Jet::order).min().unwrap_or(0);
    let at: Vec<f64> = inner.iter().map(Jet::value).collect();
    let outer_jet = outer.jet_unchecked(&at, k);
    Jet::compose(&outer_jet, inner)
}

/// Mixed partial by tensor-product central differences, refined by two
/// Richardson levels (error `O(h⁶)` for smooth `f`).
pub fn fd_partial(f: &SmoothFn, alpha: &[u8], x: &[f64], h: f64) -> f64 {
    let d = |h: f64| central_difference(f, alpha, x, h);
    let d1 = d(h);
    let d2 = d(h / 2.0);
    let d3 = d(h / 4.0);
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

fn central_difference(f: &SmoothFn, alpha: &[u8], x: &[f64], h: f64) -> f64 {
    // stencil per axis: offsets (m/2 - j) h with weights (-1)^j C(m, j) / h^m
    let mut stencils: Vec<Vec<(f64, f64)>> = Vec::with_capacity(alpha.len());
    for &m in alpha {
        let m = m as usize;
        let mut s = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let w = sign * crate::jet::binomial(m, j) / h.powi(m as i32);
            s.push(((m as f64 / 2.0 - j as f64) * h, w));
        }
        stencils.push(s);
    }
    let mut total = 0.0;
    let mut idx = vec![0usize; alpha.len()];
    let mut point = x.to_vec();
    loop {
        let mut w = 1.0;
        for (axis, s) in stencils.iter().enumerate() {
            let (off, wt) = s[idx[axis]];
            point[axis] = x[axis] + off;
            w *= wt;
        }
        total += w * f.eval(&point);
        let mut axis = 0;
        loop {
            if axis == idx.len() {
                return total;
            }
            idx[axis] += 1;
            if idx[axis] < stencils[axis].len() {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// `C^∞` transition `0 → 1` on `[0, 1]`, built from `exp(−1/t)`.
pub fn smooth_step(t: &Jet) -> Jet {
    let v = t.value();
    if v <= 0.0 {
        return Jet::zero(t.dim(), t.order());
    }
    if v >= 1.0 {
        return Jet::constant(t.dim(), t.order(), 1.0);
    }
    let a = t.recip().neg().exp();
    let b = t.neg().add_scalar(1.0).recip().neg().exp();
    a.div(&a.add(&b))
}

/// `exp(−1 / (1 − y²))` for `|y| < 1`, zero elsewhere.
pub fn bump(y: &Jet) -> Jet {
    let v = y.value();
    if v.abs() >= 1.0 {
        return Jet::zero(y.dim(), y.order());
    }
    y.mul(y).neg().add_scalar(1.0).recip().neg().exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_order_partial_equals_eval() {
        let f = SmoothFn::from_jet_map(2, |v| v[0].sin().mul(&v[1].exp()));
        for &x in &[[0.1, 0.2], [-1.0, 0.5], [2.0, -3.0]] {
            assert_eq!(f.partial(&[0, 0], &x).unwrap(), f.eval(&x));
        }
    }

    #[test]
    fn analytic_partials_agree_with_finite_differences() {
        let f = SmoothFn::from_jet_map(2, |v| v[0].mul(&v[1]).sin().add(&v[0].exp()));
        let x = [0.3, 0.7];
        for alpha in [[1u8, 0], [0, 1], [1, 1], [2, 1], [0, 3], [2, 2]] {
            let exact = f.partial(&alpha, &x).unwrap();
            let fd = fd_partial(&f, &alpha, &x, 5e-2);
            assert!((exact - fd).abs() < 1e-6 * exact.abs().max(1.0), "{alpha:?}: {exact} vs {fd}");
        }
    }

    #[test]
    fn capability_limit_is_enforced() {
        let f = SmoothFn::from_jet_map(1, |v| v[0].sin()).with_max_order(2);
        assert!(matches!(
            f.partial(&[3], &[0.1]),
            Err(Error::DerivativeUnavailable { requested: 3, available: 2 })
        ));
        let (v, used) = f.partial_or_fd(&[3], &[0.1], true).unwrap();
        assert!(used);
        assert!((v + 0.1f64.cos()).abs() < 1e-6);
    }

    #[test]
    fn derivative_function_and_composition() {
        let sin = SmoothFn::coordinate(1, 0).sin();
        let sq = SmoothFn::polynomial(1, vec![(vec![2], 1.0)]);
        let h = sin.compose(&[sq]);
        let x = [0.8];
        // d/dx sin(x^2) = 2x cos(x^2)
        let expect = 2.0 * 0.8 * (0.64f64).cos();
        assert!((h.d(0).eval(&x) - expect).abs() < 1e-14);
        assert!((h.d_multi(&[1]).eval(&x) - expect).abs() < 1e-14);
    }

    #[test]
    fn smooth_step_is_flat_at_ends() {
        let t = Jet::variable(1, 3, 0, 0.0);
        assert!(smooth_step(&t).is_zero());
        let mid = smooth_step(&Jet::variable(1, 1, 0, 0.5));
        assert!((mid.value() - 0.5).abs() < 1e-15);
    }
}
