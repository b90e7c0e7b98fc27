//! Numerical integration: adaptive Gauss–Kronrod, Gauss–Legendre rules,
//! iterated integrals over boxes, and limit extrapolation in ε.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(rel_tol: f64, abs_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            abs_tol,
            ..QuadOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_panel<F>(f: &F, m: usize, a: f64, b: f64, buf: &mut [f64]) -> Panel
where
    F: Fn(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; m];
    let mut g = vec![0.0; m];
    for i in 0..8 {
        let offsets: &[f64] = if i == 7 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in offsets {
            f(c + s * h * XGK[i], buf);
            for j in 0..m {
                k[j] += WGK[i] * buf[j];
                if i % 2 == 1 {
                    g[j] += WG[i / 2] * buf[j];
                }
            }
        }
    }
    let mut err = 0.0f64;
    for j in 0..m {
        k[j] *= h;
        g[j] *= h;
        err = err.max((k[j] - g[j]).abs());
    }
    Panel {
        a,
        b,
        value: k,
        error: err,
    }
}

/// Adaptive G7K15 integration of a vector-valued integrand over `[a, b]`.
///
/// `f(x, out)` writes the `m` components at `x`. Interior `breakpoints`
/// seed the initial panels. The error estimate is the component-wise maximum
/// of `|K15 − G7|`, summed over panels.
pub fn integrate_vec<F>(f: F, m: usize, a: f64, b: f64, breakpoints: &[f64], opts: &QuadOptions) -> Result<(Vec<f64>, f64)>
where
    F: Fn(f64, &mut [f64]),
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure(format!("infinite interval [{a}, {b}]")));
    }
    if a == b {
        return Ok((vec![0.0; m], 0.0));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lo);
    edges.extend(cuts);
    edges.push(hi);

    let mut buf = vec![0.0; m];
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; m];
    let mut err = 0.0;
    for w in edges.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        let p = kronrod_panel(&f, m, w[0], w[1], &mut buf);
        for j in 0..m {
            total[j] += p.value[j];
        }
        err += p.error;
        heap.push(p);
    }
    let mut count = heap.len();
    loop {
        let scale = total.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let tol = opts.abs_tol.max(opts.rel_tol * scale);
        if err <= tol {
            break;
        }
        if count >= opts.max_intervals {
            if !err.is_finite() || err > 1e3 * tol {
                return Err(Error::QuadratureFailure(format!(
                    "no convergence on [{a}, {b}] after {count} panels (error {err:.3e}, tolerance {tol:.3e})"
                )));
            }
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let l = kronrod_panel(&f, m, worst.a, mid, &mut buf);
        let r = kronrod_panel(&f, m, mid, worst.b, &mut buf);
        for j in 0..m {
            total[j] += l.value[j] + r.value[j] - worst.value[j];
        }
        err += l.error + r.error - worst.error;
        heap.push(l);
        heap.push(r);
        count += 1;
    }
    // resum in position order so the result does not depend on refinement order
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = vec![0.0; m];
    let mut error = 0.0;
    for p in &panels {
        for j in 0..m {
            value[j] += p.value[j];
        }
        error += p.error;
    }
    for v in &mut value {
        *v *= sign;
    }
    Ok((value, error))
}

/// Scalar version of [`integrate_vec`].
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], opts: &QuadOptions) -> Result<Quad>
where
    F: Fn(f64) -> f64,
{
    let (v, e) = integrate_vec(|x, out: &mut [f64]| out[0] = f(x), 1, a, b, breakpoints, opts)?;
    Ok(Quad { value: v[0], error: e })
}

/// Iterated adaptive integral over a box; `breakpoints[i]` hints axis `i`.
pub fn integrate_box<F>(f: F, domain: &BoxDomain, breakpoints: &[Vec<f64>], opts: &QuadOptions) -> Result<Quad>
where
    F: Fn(&[f64]) -> f64,
{
    let n = domain.dim();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let mut point = vec![0.0; n];
    let value = {
        let point = RefCell::new(&mut point);
        nested(&f, domain, breakpoints, opts, 0, &point, &failure)
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(Quad {
        value,
        error: opts.abs_tol.max(opts.rel_tol * value.abs()),
    })
}

fn nested<F>(
    f: &F,
    domain: &BoxDomain,
    breakpoints: &[Vec<f64>],
    opts: &QuadOptions,
    axis: usize,
    point: &RefCell<&mut Vec<f64>>,
    failure: &RefCell<Option<Error>>,
) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let n = domain.dim();
    let hints: &[f64] = breakpoints.get(axis).map(|v| v.as_slice()).unwrap_or(&[]);
    let inner_opts = QuadOptions {
        rel_tol: opts.rel_tol * 0.1,
        abs_tol: opts.abs_tol * 0.1,
        ..*opts
    };
    let g = |x: f64| {
        if failure.borrow().is_some() {
            return 0.0;
        }
        point.borrow_mut()[axis] = x;
        if axis + 1 == n {
            let p = point.borrow().clone();
            f(&p)
        } else {
            nested(f, domain, breakpoints, &inner_opts, axis + 1, point, failure)
        }
    };
    match integrate(g, domain.lo[axis], domain.hi[axis], hints, opts) {
        Ok(q) => q.value,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|v| h * v).collect())
}

/// Limit of `values(ε)` as ε → 0 by polynomial extrapolation through the
/// three smallest ε. The residual is the gap to the two-point estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Extrapolation {
    pub limit: f64,
    pub residual: f64,
}

pub fn extrapolate_to_zero(eps: &[f64], values: &[f64]) -> Extrapolation {
    assert_eq!(eps.len(), values.len(), "length mismatch");
    assert!(!eps.is_empty(), "nothing to extrapolate");
    let mut idx: Vec<usize> = (0..eps.len()).collect();
    idx.sort_by(|&i, &j| eps[i].total_cmp(&eps[j]));
    let pts: Vec<(f64, f64)> = idx.iter().take(3).map(|&i| (eps[i], values[i])).collect();
    let lin = |p: &[(f64, f64)]| -> f64 {
        if p.len() < 2 {
            return p[0].1;
        }
        let ((x0, y0), (x1, y1)) = (p[0], p[1]);
        (y0 * x1 - y1 * x0) / (x1 - x0)
    };
    if pts.len() < 3 {
        let l = lin(&pts);
        return Extrapolation {
            limit: l,
            residual: (l - pts[0].1).abs(),
        };
    }
    // Lagrange interpolation evaluated at 0
    let mut limit = 0.0;
    for i in 0..3 {
        let mut li = 1.0;
        for j in 0..3 {
            if i != j {
                li *= (0.0 - pts[j].0) / (pts[i].0 - pts[j].0);
            }
        }
        limit += li * pts[i].1;
    }
    let two = lin(&pts[..2]);
    Extrapolation {
        limit,
        residual: (limit - two).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1, 2, 5, 16, 32] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}: {q}");
            }
        }
    }

    #[test]
    fn adaptive_handles_peaks_and_kinks() {
        let opts = QuadOptions::default();
        let q = integrate(|x| (-x * x / 1e-6).exp(), -1.0, 1.0, &[0.0], &opts).unwrap();
        assert!((q.value - (1e-6f64 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let q = integrate(|x: f64| x.abs(), -1.0, 2.0, &[], &opts).unwrap();
        assert!((q.value - 2.5).abs() < 1e-10);
        let q = integrate(|x: f64| x.sin(), std::f64::consts::PI, 0.0, &[], &opts).unwrap();
        assert!((q.value + 2.0).abs() < 1e-12);
    }

    #[test]
    fn box_integral() {
        let b = BoxDomain::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let q = integrate_box(|x| x[0] * x[1] * x[1], &b, &[], &QuadOptions::default()).unwrap();
        assert!((q.value - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn extrapolation_recovers_quadratic_limit() {
        let eps = [0.1, 0.05, 0.025, 0.0125];
        let vals: Vec<f64> = eps.iter().map(|e| 3.0 + 2.0 * e - 5.0 * e * e).collect();
        let ex = extrapolate_to_zero(&eps, &vals);
        assert!((ex.limit - 3.0).abs() < 1e-12);
    }
}
