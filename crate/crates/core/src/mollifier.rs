//! Mollifiers with vanishing moments and their ε-scaled versions.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, Matrix4};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{binomial, factorial, Jet};
use crate::quad::{gauss_legendre, integrate, QuadOptions};
use crate::smooth::{bump, SmoothFn, UNLIMITED};

/// Highest analytic derivative order of the Fourier profile.
pub const FOURIER_MAX_ORDER: usize = 8;

const FOURIER_RADIUS: f64 = 128.0;
const FOURIER_STEP: f64 = 1.0 / 256.0;
const FOURIER_FFT_LEN: usize = 1 << 19;
const FOURIER_WINDOW: f64 = 12.0;
const FOURIER_TABLES: usize = FOURIER_MAX_ORDER + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MollifierKind {
    /// Inverse Fourier transform of a plateau bump; every moment vanishes.
    FourierBump,
    /// `p(x) e^{−x²}` with moments `1..=2M` vanishing.
    GaussPoly { m: u32 },
    /// Normalized `exp(−1/(1−x²))` on `(−1, 1)`; only the zeroth moment is fixed.
    CompactBump,
}

impl std::fmt::Display for MollifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MollifierKind::FourierBump => write!(f, "fourier"),
            MollifierKind::GaussPoly { m } => write!(f, "gausspoly:{m}"),
            MollifierKind::CompactBump => write!(f, "compact"),
        }
    }
}

impl std::str::FromStr for MollifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(MollifierKind::FourierBump),
            "compact" => Ok(MollifierKind::CompactBump),
            _ => {
                let m = s
                    .strip_prefix("gausspoly:")
                    .and_then(|m| m.parse::<u32>().ok())
                    .ok_or_else(|| Error::UnknownRegistryEntry(format!("mollifier '{s}'")))?;
                Ok(MollifierKind::GaussPoly { m })
            }
        }
    }
}

/// Quadrature evidence collected when a mollifier is built.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MollifierCertificate {
    pub integral: f64,
    /// `∫ x^k ρ` for `k = 1..=moments.len()`.
    pub moments: Vec<f64>,
    /// Moment orders required to vanish.
    pub vanishing_orders: usize,
    /// Bound on `∫_{|x|>R} |ρ|` for the tabulated profile.
    pub truncation_bound: f64,
    /// Smallest integer `r` with `∫_{r<|x|<R} |ρ| < 1e−17`; convolutions
    /// with smooth densities are cut there.
    pub effective_radius: f64,
}

#[derive(Debug)]
enum Profile {
    Fourier(Arc<FourierTables>),
    GaussPoly { coeffs: Vec<f64> },
    Compact { norm: f64 },
}

/// A one-dimensional mollifier `ρ`; on `ℝⁿ` the product `Π ρ(x_i)` is used.
#[derive(Clone, Debug)]
pub struct Mollifier {
    kind: MollifierKind,
    profile: Arc<Profile>,
    certificate: MollifierCertificate,
}

impl Mollifier {
    pub fn kind(&self) -> MollifierKind {
        self.kind
    }

    pub fn certificate(&self) -> &MollifierCertificate {
        &self.certificate
    }

    /// Radius beyond which `ρ` is treated as zero.
    pub fn support_radius_hint(&self) -> f64 {
        match &*self.profile {
            Profile::Fourier(_) => FOURIER_RADIUS,
            Profile::GaussPoly { .. } => 12.0,
            Profile::Compact { .. } => 1.0,
        }
    }

    pub fn max_order(&self) -> usize {
        match &*self.profile {
            Profile::Fourier(_) => FOURIER_MAX_ORDER,
            _ => UNLIMITED,
        }
    }

    /// `ρ^{(j)}(x)` for `j = 0..=n`.
    pub fn derivs(&self, x: f64, n: usize) -> Vec<f64> {
        match &*self.profile {
            Profile::Fourier(t) => t.derivs(x, n),
            Profile::GaussPoly { coeffs } => {
                let y = Jet::variable(1, n, 0, x);
                let y2 = y.mul(&y);
                let mut p = Jet::constant(1, n, 0.0);
                for c in coeffs.iter().rev() {
                    p = p.mul(&y2).add_scalar(*c);
                }
                let j = p.mul(&y2.neg().exp());
                (0..=n).map(|k| j.coeffs()[k] * factorial(k)).collect()
            }
            Profile::Compact { norm } => {
                let j = bump(&Jet::variable(1, n, 0, x)).scale(*norm);
                (0..=n).map(|k| j.coeffs()[k] * factorial(k)).collect()
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivs(x, 0)[0]
    }

    /// `∫_{−∞}^x ρ`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &*self.profile {
            Profile::Fourier(t) => t.cdf(x),
            Profile::GaussPoly { coeffs } => {
                let e = (-x * x).exp();
                let mut ij = 0.5 * std::f64::consts::PI.sqrt() * (1.0 + libm::erf(x));
                let mut total = coeffs[0] * ij;
                for (j, c) in coeffs.iter().enumerate().skip(1) {
                    ij = -0.5 * x.powi(2 * j as i32 - 1) * e + (2 * j - 1) as f64 / 2.0 * ij;
                    total += c * ij;
                }
                total
            }
            Profile::Compact { norm } => {
                if x <= -1.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    let f = |t: f64| norm * bump(&Jet::variable(1, 0, 0, t)).value();
                    integrate(f, -1.0, x, &[], &QuadOptions::with_tol(1e-13, 1e-16))
                        .map(|q| q.value)
                        .unwrap_or(f64::NAN)
                }
            }
        }
    }

    /// `ρ` as a one-dimensional smooth function.
    pub fn profile(&self) -> SmoothFn {
        let m = self.clone();
        SmoothFn::univariate(self.max_order(), move |x, k| {
            m.derivs(x, k).into_iter().enumerate().map(|(j, d)| d / factorial(j)).collect()
        })
    }

    pub fn scaled(&self, eps: f64) -> ScaledMollifier {
        ScaledMollifier {
            base: self.clone(),
            eps,
        }
    }
}

/// Builds a mollifier and verifies unit mass and moment vanishing by
/// quadrature (`|∫ρ − 1| < 1e−8`, `|∫x^kρ| < 1e−6`).
pub fn build_mollifier(kind: MollifierKind) -> Result<Mollifier> {
    let (profile, vanishing) = match kind {
        MollifierKind::FourierBump => (Profile::Fourier(fourier_tables()), 8),
        MollifierKind::GaussPoly { m } => (
            Profile::GaussPoly {
                coeffs: gauss_poly_coeffs(m as usize)?,
            },
            2 * m as usize,
        ),
        MollifierKind::CompactBump => {
            let f = |t: f64| bump(&Jet::variable(1, 0, 0, t)).value();
            let q = integrate(f, -1.0, 1.0, &[0.0], &QuadOptions::with_tol(1e-14, 1e-16))?;
            (Profile::Compact { norm: 1.0 / q.value }, 0)
        }
    };
    let mut moll = Mollifier {
        kind,
        profile: Arc::new(profile),
        certificate: MollifierCertificate {
            integral: 0.0,
            moments: vec![],
            vanishing_orders: vanishing,
            truncation_bound: 0.0,
            effective_radius: 0.0,
        },
    };
    let checked = vanishing.max(8);
    let r = moll.support_radius_hint();
    let vals = cell_moments(&moll, r, checked);
    moll.certificate.integral = vals[0];
    moll.certificate.moments = vals[1..].to_vec();
    moll.certificate.truncation_bound = match kind {
        MollifierKind::FourierBump => 2.0 * moll.value(r - FOURIER_STEP).abs() * FOURIER_WINDOW,
        MollifierKind::GaussPoly { .. } => 2.0 * moll.value(r).abs(),
        MollifierKind::CompactBump => 0.0,
    };
    moll.certificate.effective_radius = effective_radius(&moll, r, 1e-17);
    if (vals[0] - 1.0).abs() >= 1e-8 {
        return Err(Error::QuadratureFailure(format!("mollifier mass {} differs from 1", vals[0])));
    }
    if let Some((k, v)) = vals[1..=vanishing].iter().enumerate().find(|(_, v)| v.abs() >= 1e-6) {
        return Err(Error::QuadratureFailure(format!("moment {} equals {v:.3e}", k + 1)));
    }
    Ok(moll)
}

/// Walks inward from `r` in unit steps while the two-sided tail mass of
/// `|ρ|` (midpoint rule, 64 points per unit) stays below `tol`.
fn effective_radius(m: &Mollifier, r: f64, tol: f64) -> f64 {
    let mut tail = 0.0;
    let mut edge = r.ceil();
    while edge > 1.0 {
        let cell: f64 = (0..64).map(|i| m.value(edge - (i as f64 + 0.5) / 64.0).abs()).sum::<f64>() / 64.0;
        if tail + 2.0 * cell >= tol {
            break;
        }
        tail += 2.0 * cell;
        edge -= 1.0;
    }
    edge.min(r)
}

/// Cached default mollifiers.
pub fn fourier_bump() -> Mollifier {
    static CELL: OnceLock<Mollifier> = OnceLock::new();
    CELL.get_or_init(|| build_mollifier(MollifierKind::FourierBump).expect("Fourier mollifier certifies"))
        .clone()
}

/// `∫ x^k ρ` for `k = 0..=n` by an 8-node Gauss–Legendre rule on every
/// table cell of `[−r, r]`; exact for the piecewise septic Fourier profile.
fn cell_moments(m: &Mollifier, r: f64, n: usize) -> Vec<f64> {
    let (gx, gw) = gauss_legendre(8);
    let cells = (2.0 * r / FOURIER_STEP).round() as usize;
    let half = 0.5 * FOURIER_STEP;
    let mut sum = vec![0.0f64; n + 1];
    let mut comp = vec![0.0f64; n + 1];
    for c in 0..cells {
        let mid = -r + (c as f64 + 0.5) * FOURIER_STEP;
        for (t, w) in gx.iter().zip(&gw) {
            let x = mid + half * t;
            let mut term = half * w * m.value(x);
            for k in 0..=n {
                // Kahan summation keeps the cancelling high moments accurate
                let y = term - comp[k];
                let s = sum[k] + y;
                comp[k] = (s - sum[k]) - y;
                sum[k] = s;
                term *= x;
            }
        }
    }
    sum
}

fn gauss_poly_coeffs(m: usize) -> Result<Vec<f64>> {
    // ∫ x^{2n} e^{−x²} = Γ(n + 1/2)
    let n = m + 1;
    let a = DMatrix::from_fn(n, n, |i, j| libm::tgamma((i + j) as f64 + 0.5));
    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    let sol = a.lu().solve(&rhs).ok_or(Error::MomentSystemSingular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::MomentSystemSingular);
    }
    Ok(sol.iter().copied().collect())
}

/// `ρ_ε(x) = ε^{−1} ρ(x/ε)` (and its `n`-fold product on `ℝⁿ`).
#[derive(Clone, Debug)]
pub struct ScaledMollifier {
    pub base: Mollifier,
    pub eps: f64,
}

impl ScaledMollifier {
    pub fn value(&self, x: f64) -> f64 {
        self.base.value(x / self.eps) / self.eps
    }

    /// Taylor coefficients at `x` of `ρ_ε^{(shift)}` up to `order`.
    pub fn taylor(&self, x: f64, shift: usize, order: usize) -> Vec<f64> {
        let e = self.eps;
        let d = self.base.derivs(x / e, shift + order);
        (0..=order)
            .map(|j| d[shift + j] * e.powi(-1 - (shift + j) as i32) / factorial(j))
            .collect()
    }

    /// Jet at `y ∈ ℝⁿ` of `∂^β Π_i ρ_ε(y_i)`.
    pub fn jet_nd(&self, y: &[f64], beta: &[u8], order: usize) -> Jet {
        let n = y.len();
        let r = self.base.support_radius_hint() * self.eps;
        if y.iter().any(|v| v.abs() >= r) {
            return Jet::zero(n, order);
        }
        let mut acc = Jet::constant(n, order, 1.0);
        for (axis, (&yi, &b)) in y.iter().zip(beta).enumerate() {
            let c = self.taylor(yi, b as usize, order);
            acc = acc.mul(&Jet::from_univariate(n, order, axis, &c));
        }
        acc
    }

    /// Taylor coefficients at `x` of `C(x/ε)` where `C` is the distribution
    /// function of `ρ`.
    pub fn cdf_taylor(&self, x: f64, order: usize) -> Vec<f64> {
        let mut c = vec![self.base.cdf(x / self.eps)];
        if order > 0 {
            let t = self.taylor(x, 0, order - 1);
            c.extend(t.iter().enumerate().map(|(j, v)| v / (j + 1) as f64));
        }
        c
    }
}

/// Tabulated Fourier profile and derivatives on `[0, R]`, step `h`.
#[derive(Debug)]
struct FourierTables {
    tables: Vec<Vec<f64>>,
    cdf: Vec<f64>,
}

fn hermite_inverse() -> &'static Matrix4<f64> {
    static INV: OnceLock<Matrix4<f64>> = OnceLock::new();
    INV.get_or_init(|| {
        let m = Matrix4::from_fn(|i, j| binomial(4 + j, i));
        m.try_inverse().expect("septic Hermite system is regular")
    })
}

/// Septic Hermite data on one cell: Taylor-scaled values `a_i`, and the
/// upper coefficients `c_j` with `p(s) = Σ a_i s^i + s⁴ Σ c_j s^j`.
fn septic_cell(left: [f64; 4], right: [f64; 4], h: f64) -> ([f64; 4], [f64; 4]) {
    let mut a = [0.0; 4];
    let mut b = [0.0; 4];
    let mut hp = 1.0;
    for i in 0..4 {
        a[i] = left[i] * hp / factorial(i);
        b[i] = right[i] * hp / factorial(i);
        hp *= h;
    }
    let mut rhs = nalgebra::Vector4::zeros();
    for i in 0..4 {
        let taylor: f64 = (i..4).map(|l| binomial(l, i) * a[l]).sum();
        rhs[i] = b[i] - taylor;
    }
    let c = hermite_inverse() * rhs;
    (a, [c[0], c[1], c[2], c[3]])
}

fn smooth_plateau(xi: f64) -> f64 {
    let t = 2.0 - xi.abs();
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

fn fourier_tables() -> Arc<FourierTables> {
    static CELL: OnceLock<Arc<FourierTables>> = OnceLock::new();
    CELL.get_or_init(|| Arc::new(FourierTables::build())).clone()
}

impl FourierTables {
    fn build() -> FourierTables {
        let n = FOURIER_FFT_LEN;
        let h = FOURIER_STEP;
        let npts = (FOURIER_RADIUS / h) as usize + 1;
        let dxi = 2.0 * std::f64::consts::PI / (n as f64 * h);
        let kmax = (2.0 / dxi).ceil() as usize + 1;
        let fft = FftPlanner::new().plan_fft_inverse(n);
        let mut raw = Vec::with_capacity(FOURIER_TABLES);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for m in 0..FOURIER_TABLES {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            // (iξ)^m φ̂(ξ) sampled at ξ_k = k Δξ, negative frequencies wrapped
            let im = match m % 4 {
                0 => Complex::new(1.0, 0.0),
                1 => Complex::new(0.0, 1.0),
                2 => Complex::new(-1.0, 0.0),
                _ => Complex::new(0.0, -1.0),
            };
            for k in 0..=kmax {
                let xi = k as f64 * dxi;
                let g = smooth_plateau(xi) * xi.powi(m as i32);
                buf[k] = im * g;
                if k > 0 {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    buf[n - k] = im * (sign * g);
                }
            }
            fft.process(&mut buf);
            let scale = dxi / (2.0 * std::f64::consts::PI);
            raw.push(buf[..npts].iter().map(|c| c.re * scale).collect::<Vec<f64>>());
        }
        // Gaussian window: ρ_W^{(m)} = Σ_l C(m,l) ρ^{(m−l)} w^{(l)}
        let w = FOURIER_WINDOW;
        let mut tables = vec![vec![0.0; npts]; FOURIER_TABLES];
        let mut herm = vec![0.0; FOURIER_TABLES];
        for j in 0..npts {
            let x = j as f64 * h;
            let u = x / w;
            let g = (-u * u).exp();
            herm[0] = 1.0;
            if FOURIER_TABLES > 1 {
                herm[1] = 2.0 * u;
            }
            for l in 1..FOURIER_TABLES - 1 {
                herm[l + 1] = 2.0 * u * herm[l] - 2.0 * l as f64 * herm[l - 1];
            }
            for m in 0..FOURIER_TABLES {
                let mut s = 0.0;
                for l in 0..=m {
                    let wl = (-1.0 / w).powi(l as i32) * herm[l] * g;
                    s += binomial(m, l) * raw[m - l][j] * wl;
                }
                tables[m][j] = s;
            }
        }
        let mut cdf = vec![0.5; npts];
        for j in 0..npts - 1 {
            let (a, c) = septic_cell(
                [tables[0][j], tables[1][j], tables[2][j], tables[3][j]],
                [tables[0][j + 1], tables[1][j + 1], tables[2][j + 1], tables[3][j + 1]],
                h,
            );
            let cell: f64 = (0..4).map(|i| a[i] / (i + 1) as f64 + c[i] / (i + 5) as f64).sum();
            cdf[j + 1] = cdf[j] + h * cell;
        }
        FourierTables { tables, cdf }
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let t = x / FOURIER_STEP;
        let j = t.floor() as usize;
        if j + 1 >= self.tables[0].len() {
            return None;
        }
        Some((j, t - j as f64))
    }

    fn interp(&self, k: usize, j: usize, s: f64) -> f64 {
        let t = &self.tables;
        let (a, c) = septic_cell(
            [t[k][j], t[k + 1][j], t[k + 2][j], t[k + 3][j]],
            [t[k][j + 1], t[k + 1][j + 1], t[k + 2][j + 1], t[k + 3][j + 1]],
            FOURIER_STEP,
        );
        let lo = a[0] + s * (a[1] + s * (a[2] + s * a[3]));
        let hi = c[0] + s * (c[1] + s * (c[2] + s * c[3]));
        lo + s.powi(4) * hi
    }

    fn derivs(&self, x: f64, n: usize) -> Vec<f64> {
        let ax = x.abs();
        let Some((j, s)) = self.locate(ax) else {
            return vec![0.0; n + 1];
        };
        (0..=n)
            .map(|k| {
                if k > FOURIER_MAX_ORDER {
                    return f64::NAN;
                }
                let v = self.interp(k, j, s);
                if x < 0.0 && k % 2 == 1 {
                    -v
                } else {
                    v
                }
            })
            .collect()
    }

    fn cdf(&self, x: f64) -> f64 {
        let ax = x.abs();
        let right = match self.locate(ax) {
            None => *self.cdf.last().expect("nonempty table"),
            Some((j, s)) => {
                let t = &self.tables;
                let (a, c) = septic_cell(
                    [t[0][j], t[1][j], t[2][j], t[3][j]],
                    [t[0][j + 1], t[1][j + 1], t[2][j + 1], t[3][j + 1]],
                    FOURIER_STEP,
                );
                let part: f64 = (0..4)
                    .map(|i| a[i] * s.powi(i as i32 + 1) / (i + 1) as f64 + c[i] * s.powi(i as i32 + 5) / (i + 5) as f64)
                    .sum();
                self.cdf[j] + FOURIER_STEP * part
            }
        };
        if x >= 0.0 {
            right
        } else {
            1.0 - right
        }
    }
}
