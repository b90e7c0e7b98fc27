//! Compact boxes, sample lattices and lattice sup-norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smooth::SmoothFn;

/// Axis-aligned compact box `Π [lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<BoxDomain> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::DomainError("box bounds must satisfy lo ≤ hi".into()));
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn interval(a: f64, b: f64) -> BoxDomain {
        BoxDomain::new(vec![a], vec![b]).expect("valid interval")
    }

    /// The cube `[a, b]^dim`.
    pub fn cube(dim: usize, a: f64, b: f64) -> BoxDomain {
        BoxDomain::new(vec![a; dim], vec![b; dim]).expect("valid cube")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Uniform lattice with `n` points per axis (endpoints included).
    pub fn lattice(&self, n: usize) -> Vec<Vec<f64>> {
        let n = n.max(1);
        let axes: Vec<Vec<f64>> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| {
                if n == 1 {
                    vec![0.5 * (a + b)]
                } else {
                    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
                }
            })
            .collect();
        cartesian(&axes)
    }
}

/// All points of the product of the given axis samples, last axis fastest.
pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Lattice approximation of `sup_K |∂^α f|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupNorm {
    pub value: f64,
    /// Set when the finite-difference fallback supplied the derivatives.
    pub finite_difference: bool,
}

/// Max of `|∂^α f|` over the `n`-per-axis lattice of `domain`.
pub fn sup_norm_on_box(f: &SmoothFn, alpha: &[u8], domain: &BoxDomain, n: usize) -> Result<f64> {
    Ok(sup_norm_with(f, alpha, domain, n, false)?.value)
}

pub fn sup_norm_with(
    f: &SmoothFn,
    alpha: &[u8],
    domain: &BoxDomain,
    n: usize,
    allow_fd: bool,
) -> Result<SupNorm> {
    if f.dim() != domain.dim() || alpha.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: if alpha.len() != f.dim() { alpha.len() } else { domain.dim() },
        });
    }
    let mut best = 0.0f64;
    let mut used_fd = false;
    for x in domain.lattice(n) {
        let (v, fd) = f.partial_or_fd(alpha, &x, allow_fd)?;
        used_fd |= fd;
        let a = v.abs();
        if a.is_nan() {
            return Ok(SupNorm {
                value: f64::NAN,
                finite_difference: used_fd,
            });
        }
        best = best.max(a);
    }
    Ok(SupNorm {
        value: best,
        finite_difference: used_fd,
    })
}

/// Largest value of `g` over a point set.
pub fn max_over<F>(points: &[Vec<f64>], g: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    points.iter().map(|x| g(x).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    #[test]
    fn examples() {
        let s = SmoothFn::coordinate(1, 0).sin();
        let v = sup_norm_on_box(&s, &[1], &BoxDomain::interval(0.0, std::f64::consts::PI), 201).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let sq = SmoothFn::polynomial(1, vec![(vec![2], 1.0)]);
        let v = sup_norm_on_box(&sq, &[0], &BoxDomain::interval(-2.0, 3.0), 201).unwrap();
        assert_eq!(v, 9.0);
    }

    #[test]
    fn gaussian_mixed_partial_matches_fine_lattice() {
        let g = SmoothFn::from_jet_map(2, |v| v[0].mul(&v[0]).add(&v[1].mul(&v[1])).neg().exp());
        let b = BoxDomain::cube(2, -1.0, 1.0);
        let coarse = sup_norm_on_box(&g, &[1, 1], &b, 201).unwrap();
        let fine = sup_norm_on_box(&g, &[1, 1], &b, 2001).unwrap();
        assert!((coarse - fine).abs() < 1e-3);
        assert!(fine > 0.0);
    }

    #[test]
    fn capability_is_enforced() {
        let f = SmoothFn::new(1, 1, |x, k| Jet::variable(1, k, 0, x[0]).sin());
        let b = BoxDomain::interval(0.0, 1.0);
        assert!(matches!(
            sup_norm_on_box(&f, &[2], &b, 11),
            Err(Error::DerivativeUnavailable { .. })
        ));
        let s = sup_norm_with(&f, &[2], &b, 11, true).unwrap();
        assert!(s.finite_difference);
        assert!((s.value - 1f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn lattice_shape() {
        let b = BoxDomain::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let pts = b.lattice(3);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![0.0, 1.0]);
        assert_eq!(pts[8], vec![1.0, 2.0]);
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
    }
}
