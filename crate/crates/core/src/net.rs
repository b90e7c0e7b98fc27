//! ε-indexed nets: function-valued representatives and generalized numbers.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::asymptotic::{classify_scalar_net, AsymptoticFit, EpsGrid, OrderConfig};
use crate::error::Result;
use crate::smooth::SmoothFn;

type NetFn = dyn Fn(f64) -> SmoothFn + Send + Sync;

/// Representative `(u_ε)_ε` of a generalized function on an open set of `ℝ^dim`.
///
/// `focus` lists points near which members develop ε-scale structure; sup
/// norms and quadratures refine around them.
#[derive(Clone)]
pub struct Net {
    dim: usize,
    at: Arc<NetFn>,
    focus: Arc<Vec<Vec<f64>>>,
}

impl fmt::Debug for Net {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Net").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl Net {
    pub fn new<F>(dim: usize, at: F) -> Net
    where
        F: Fn(f64) -> SmoothFn + Send + Sync + 'static,
    {
        Net {
            dim,
            at: Arc::new(at),
            focus: Arc::new(Vec::new()),
        }
    }

    pub fn with_focus(mut self, points: Vec<Vec<f64>>) -> Net {
        let mut pts = points;
        pts.retain(|p| p.len() == self.dim);
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        pts.dedup();
        self.focus = Arc::new(pts);
        self
    }

    pub fn focus(&self) -> &[Vec<f64>] {
        &self.focus
    }

    fn joined_focus(&self, other: &Net) -> Vec<Vec<f64>> {
        self.focus.iter().chain(other.focus.iter()).cloned().collect()
    }

    /// The ε-independent net of a smooth function.
    pub fn constant(f: SmoothFn) -> Net {
        let dim = f.dim();
        Net::new(dim, move |_| f.clone())
    }

    pub fn zero(dim: usize) -> Net {
        Net::constant(SmoothFn::zero(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, eps: f64) -> SmoothFn {
        let f = (self.at)(eps);
        debug_assert_eq!(f.dim(), self.dim, "net member has wrong dimension");
        f
    }

    /// Applies `op` to the member at every ε.
    pub fn map<F>(&self, op: F) -> Net
    where
        F: Fn(&SmoothFn) -> SmoothFn + Send + Sync + 'static,
    {
        let inner = self.clone();
        let focus = self.focus.to_vec();
        Net::new(self.dim, move |e| op(&inner.at(e))).with_focus(focus)
    }

    /// Like [`Net::map`] but the operation also sees ε.
    pub fn map_eps<F>(&self, op: F) -> Net
    where
        F: Fn(f64, &SmoothFn) -> SmoothFn + Send + Sync + 'static,
    {
        let inner = self.clone();
        let focus = self.focus.to_vec();
        Net::new(self.dim, move |e| op(e, &inner.at(e))).with_focus(focus)
    }

    pub fn zip<F>(&self, other: &Net, op: F) -> Net
    where
        F: Fn(&SmoothFn, &SmoothFn) -> SmoothFn + Send + Sync + 'static,
    {
        let focus = self.joined_focus(other);
        let (a, b) = (self.clone(), other.clone());
        Net::new(self.dim, move |e| op(&a.at(e), &b.at(e))).with_focus(focus)
    }

    pub fn add(&self, other: &Net) -> Net {
        self.zip(other, |f, g| f.add(g))
    }

    pub fn sub(&self, other: &Net) -> Net {
        self.zip(other, |f, g| f.sub(g))
    }

    pub fn mul(&self, other: &Net) -> Net {
        self.zip(other, |f, g| f.mul(g))
    }

    pub fn scale(&self, s: f64) -> Net {
        self.map(move |f| f.scale(s))
    }

    /// Multiplies the member at ε by the scalar `c(ε)`.
    pub fn scale_by<F>(&self, c: F) -> Net
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.map_eps(move |e, f| f.scale(c(e)))
    }

    pub fn d(&self, axis: usize) -> Net {
        self.map(move |f| f.d(axis))
    }
}

/// Evaluates `f` at every grid value, in parallel when asked. The output
/// order always follows the grid.
pub fn map_grid<T, F>(grid: &[f64], parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    if parallel {
        grid.par_iter().map(|&e| f(e)).collect()
    } else {
        grid.iter().map(|&e| f(e)).collect()
    }
}

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Element of the ring of generalized numbers, represented by `ε ↦ r_ε`.
///
/// The default-grid fit is computed on first request and cached; clones
/// created before the first request share the cache.
#[derive(Clone)]
pub struct GeneralizedNumber {
    net: Arc<ScalarFn>,
    fit: Arc<OnceLock<AsymptoticFit>>,
}

impl fmt::Debug for GeneralizedNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralizedNumber")
            .field("fit", &self.fit.get())
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RingOp {
    Add,
    Sub,
    Mul,
}

impl GeneralizedNumber {
    pub fn new<F>(net: F) -> GeneralizedNumber
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        GeneralizedNumber {
            net: Arc::new(net),
            fit: Arc::new(OnceLock::new()),
        }
    }

    pub fn constant(c: f64) -> GeneralizedNumber {
        GeneralizedNumber::new(move |_| c)
    }

    /// A net known only on a finite grid; the value at other ε is taken
    /// from the nearest grid point.
    pub fn from_samples(samples: Vec<(f64, f64)>) -> GeneralizedNumber {
        assert!(!samples.is_empty(), "no samples");
        GeneralizedNumber::new(move |e| {
            samples
                .iter()
                .min_by(|a, b| (a.0 - e).abs().total_cmp(&(b.0 - e).abs()))
                .map(|s| s.1)
                .unwrap_or(f64::NAN)
        })
    }

    pub fn value(&self, eps: f64) -> f64 {
        (self.net)(eps)
    }

    /// Fit of `|r_ε|` on the default grid with default thresholds.
    pub fn fit(&self) -> Result<AsymptoticFit> {
        if let Some(f) = self.fit.get() {
            return Ok(f.clone());
        }
        let f = self.fit_on(&EpsGrid::default(), &OrderConfig::default())?;
        Ok(self.fit.get_or_init(|| f).clone())
    }

    pub fn fit_on(&self, grid: &EpsGrid, cfg: &OrderConfig) -> Result<AsymptoticFit> {
        classify_scalar_net(|e| self.value(e), grid, cfg)
    }

    pub fn add(&self, other: &GeneralizedNumber) -> GeneralizedNumber {
        gn_binary(RingOp::Add, self, other)
    }

    pub fn sub(&self, other: &GeneralizedNumber) -> GeneralizedNumber {
        gn_binary(RingOp::Sub, self, other)
    }

    pub fn mul(&self, other: &GeneralizedNumber) -> GeneralizedNumber {
        gn_binary(RingOp::Mul, self, other)
    }

    pub fn scale(&self, s: f64) -> GeneralizedNumber {
        let a = self.clone();
        GeneralizedNumber::new(move |e| s * a.value(e))
    }
}

pub fn gn_binary(op: RingOp, a: &GeneralizedNumber, b: &GeneralizedNumber) -> GeneralizedNumber {
    let (a, b) = (a.clone(), b.clone());
    match op {
        RingOp::Add => GeneralizedNumber::new(move |e| a.value(e) + b.value(e)),
        RingOp::Sub => GeneralizedNumber::new(move |e| a.value(e) - b.value(e)),
        RingOp::Mul => GeneralizedNumber::new(move |e| a.value(e) * b.value(e)),
    }
}

/// Equality in the ring: the difference is negligible up to order `m_max`
/// on the default grid.
pub fn gn_equal(a: &GeneralizedNumber, b: &GeneralizedNumber, m_max: i32) -> Result<(bool, AsymptoticFit)> {
    gn_equal_on(a, b, &EpsGrid::default(), &OrderConfig::default().with_m_max(m_max))
}

pub fn gn_equal_on(
    a: &GeneralizedNumber,
    b: &GeneralizedNumber,
    grid: &EpsGrid,
    cfg: &OrderConfig,
) -> Result<(bool, AsymptoticFit)> {
    let fit = classify_scalar_net(|e| a.value(e) - b.value(e), grid, cfg)?;
    Ok((fit.is_negligible(), fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotic::Verdict;

    #[test]
    fn ring_examples() {
        let eps = GeneralizedNumber::new(|e| e);
        let neg = GeneralizedNumber::new(|e| -e);
        assert!(eps.add(&neg).fit().unwrap().is_negligible());

        let inv = GeneralizedNumber::new(|e| 1.0 / e);
        let sq = GeneralizedNumber::new(|e| e * e);
        let p = inv.mul(&sq);
        let fit = p.fit_on(&EpsGrid::default(), &OrderConfig::default().with_m_max(1)).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-9);
        assert_eq!(fit.verdict, Verdict::Negligible { m_max: 1 });
        assert_eq!(inv.mul(&inv).fit().unwrap().verdict, Verdict::Moderate { n: 2 });
    }

    #[test]
    fn ring_operations_are_pointwise() {
        let a = GeneralizedNumber::new(|e| e.sin() + 1.0 / e);
        let b = GeneralizedNumber::new(|e| e.exp());
        for &e in EpsGrid::default().values() {
            assert_eq!(a.add(&b).value(e), a.value(e) + b.value(e));
            assert_eq!(a.sub(&b).value(e), a.value(e) - b.value(e));
            assert_eq!(a.mul(&b).value(e), a.value(e) * b.value(e));
        }
    }

    #[test]
    fn equality_examples() {
        let a = GeneralizedNumber::new(|e| 1.0 + (-1.0 / e).exp());
        let one = GeneralizedNumber::constant(1.0);
        assert!(gn_equal(&a, &one, 6).unwrap().0);
        let eps = GeneralizedNumber::new(|e| e);
        let zero = GeneralizedNumber::constant(0.0);
        let (eq, fit) = gn_equal(&eps, &zero, 6).unwrap();
        assert!(!eq);
        assert!((fit.slope - 1.0).abs() < 1e-9);
        assert!(gn_equal(&eps, &eps, 6).unwrap().0);
    }

    #[test]
    fn cached_fit_is_shared_and_stable() {
        let a = GeneralizedNumber::new(|e| e.powi(-2));
        let b = a.clone();
        let f1 = a.fit().unwrap();
        let f2 = b.fit().unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn net_members_are_deterministic() {
        let n = Net::new(1, |e| SmoothFn::coordinate(1, 0).scale(1.0 / e).sin());
        for &e in &[0.5, 0.01] {
            assert_eq!(n.at(e).eval(&[0.3]), n.at(e).eval(&[0.3]));
        }
    }
}
