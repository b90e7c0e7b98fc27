//! Convolution embedding of distributions on `ℝⁿ` and the pullback
//! commutator experiment.

use serde::Serialize;

use crate::distribution::{Diffeo, DistributionSpec};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::estimate::{classify_net, NetFit, Settings};
use crate::jet::{factorial, Jet};
use crate::mollifier::{Mollifier, ScaledMollifier};
use crate::net::Net;
use crate::pairing::{associate_net, AssociationVerdict, TestDensity};
use crate::quad::{integrate_vec, QuadOptions};
use crate::smooth::{SmoothFn, UNLIMITED};

/// `ι(w) = (w ∗ ρ_ε)_ε`.
///
/// Dirac terms use the analytic derivatives of `ρ_ε`; constant pieces of
/// the regular part use the distribution function of `ρ`; other pieces are
/// convolved by adaptive quadrature (line only).
pub fn embed_rn(w: &DistributionSpec, rho: &Mollifier) -> Result<Net> {
    w.validate()?;
    let n = w.dimension();
    let need = w.max_dirac_order();
    if rho.max_order() < need {
        return Err(Error::DerivativeUnavailable {
            requested: need,
            available: rho.max_order(),
        });
    }
    let max_order = if rho.max_order() >= UNLIMITED {
        UNLIMITED
    } else {
        rho.max_order() - need
    };
    let pieces = match &w.regular {
        Some(r) => r.intervals()?,
        None => vec![],
    };
    let singular = w.singular.clone();
    let rho = rho.clone();
    let focus = w.singular_points();
    Ok(Net::new(n, move |eps| {
        let scaled = rho.scaled(eps);
        let singular = singular.clone();
        let pieces = pieces.clone();
        SmoothFn::new(n, max_order, move |x, k| {
            let mut acc = Jet::zero(n, k);
            for t in &singular {
                let y: Vec<f64> = x.iter().zip(&t.loc).map(|(a, b)| a - b).collect();
                // ∂^β δ_a ∗ ρ_ε = ∂^β ρ_ε(· − a)
                acc.axpy(t.weight, &scaled.jet_nd(&y, &t.multi_index, k));
            }
            for (a, b, f, c) in &pieces {
                let coeffs = match c {
                    Some(c) => constant_piece(&scaled, *a, *b, *c, x[0], k),
                    None => smooth_piece(&scaled, *a, *b, f, x[0], k),
                };
                acc.add_assign(&Jet::from_univariate(1, k, 0, &coeffs));
            }
            acc
        })
    })
    .with_focus(focus))
}

fn constant_piece(s: &ScaledMollifier, a: f64, b: f64, c: f64, x: f64, k: usize) -> Vec<f64> {
    if c == 0.0 {
        return vec![0.0; k + 1];
    }
    let lo = s.cdf_taylor(x - a, k);
    let hi = s.cdf_taylor(x - b, k);
    lo.iter().zip(&hi).map(|(l, h)| c * (l - h)).collect()
}

/// Taylor coefficients at `x` of `∫_a^b f(y) ρ_ε(x − y) dy`.
///
/// Derivatives are moved onto `f`: the `k`-th derivative is
/// `∫ f^{(k)} ρ_ε(x − ·) + Σ_{i<k} [f^{(i)}(a) ρ_ε^{(k−1−i)}(x − a) − f^{(i)}(b) ρ_ε^{(k−1−i)}(x − b)]`,
/// which keeps roundoff independent of ε.
fn smooth_piece(s: &ScaledMollifier, a: f64, b: f64, f: &SmoothFn, x: f64, k: usize) -> Vec<f64> {
    let r = s.base.certificate().effective_radius;
    let reach = r * s.eps;
    if a.max(x - reach) >= b.min(x + reach) {
        return vec![0.0; k + 1];
    }
    // integrate in z = (x − y)/ε so that rounding in x − y is not amplified
    let e = s.eps;
    let zlo = ((x - b) / e).max(-r);
    let zhi = ((x - a) / e).min(r);
    let mut bps = vec![0.0];
    let mut t = 0.5;
    while t < r {
        bps.push(-t);
        bps.push(t);
        t *= 2.0;
    }
    let opts = QuadOptions::with_tol(1e-12, 1e-16);
    let rho = &s.base;
    let mut out = integrate_vec(
        |z, out: &mut [f64]| {
            let w = rho.value(z);
            if w == 0.0 {
                out.fill(0.0);
                return;
            }
            let fj = f.jet_unchecked(&[x - e * z], k);
            for (o, c) in out.iter_mut().zip(fj.coeffs()) {
                *o = w * c;
            }
        },
        k + 1,
        zlo,
        zhi,
        &bps,
        &opts,
    )
    .map(|(v, _)| v)
    .unwrap_or_else(|_| vec![f64::NAN; k + 1]);
    if k > 0 {
        for (end, sign) in [(a, 1.0), (b, -1.0)] {
            if (x - end).abs() >= reach {
                continue;
            }
            // f^{(i)}(end)/i! and ρ_ε^{(m)}(x − end)/m!
            let fj = f.jet_unchecked(&[end], k - 1);
            let rj = s.taylor(x - end, 0, k - 1);
            for (j, o) in out.iter_mut().enumerate().skip(1) {
                let mut acc = 0.0;
                for i in 0..j {
                    let m = j - 1 - i;
                    acc += fj.coeffs()[i] * factorial(i) * rj[m] * factorial(m);
                }
                *o += sign * acc / factorial(j);
            }
        }
    }
    out
}

/// Report of the non-commutation of the embedding with a pullback.
#[derive(Clone, Debug, Serialize)]
pub struct CommutatorReport {
    pub diffeo: String,
    /// Order-zero sup-norm growth of the commutator net.
    pub order0: NetFit,
    pub negligible: bool,
    pub association: AssociationVerdict,
    pub associated_to_zero: bool,
}

/// The net of `(ι∘μ* − μ*∘ι) w` on the line, its order-zero classification
/// on `domain`, and its association to zero against `densities`.
pub fn pullback_commutator_demo(
    mu: &Diffeo,
    w: &DistributionSpec,
    rho: &Mollifier,
    domain: &BoxDomain,
    densities: &[TestDensity],
    settings: &Settings,
) -> Result<(Net, CommutatorReport)> {
    if w.dimension() != 1 {
        return Err(Error::UnsupportedDistribution("pullback demo acts on the line".into()));
    }
    let lhs = embed_rn(&mu.pull_distribution(w)?, rho)?;
    let rhs_inner = embed_rn(w, rho)?;
    let mu2 = mu.clone();
    let rhs = rhs_inner.map(move |f| mu2.pull_function(f));
    let pulled_focus: Vec<Vec<f64>> = mu
        .pull_distribution(w)?
        .singular_points();
    let net = lhs.sub(&rhs).with_focus(pulled_focus);
    let order0 = classify_net(&net, &[0], domain, settings, None)?;
    let association = associate_net(&net, None, densities, settings)?;
    let report = CommutatorReport {
        diffeo: format!("{mu:?}"),
        negligible: order0.fit.is_negligible(),
        associated_to_zero: association.is_associated(),
        order0,
        association,
    };
    Ok((net, report))
}
