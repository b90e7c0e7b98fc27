//! Weak pairings of nets against test densities, and association verdicts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distribution::DistributionSpec;
use crate::domain::BoxDomain;
use crate::error::Result;
use crate::estimate::Settings;
use crate::jet::Jet;
use crate::net::{map_grid, Net};
use crate::quad::{extrapolate_to_zero, integrate_box, QuadOptions};
use crate::smooth::{bump, SmoothFn, UNLIMITED};

/// Tilted product bump `Π b((x_i − c_i)/r_i) · (1 + t (x_0 − c_0)/r_0)`
/// supported in one chart; the density is this factor times `|dx|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestDensity {
    pub id: String,
    pub chart: usize,
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
    pub tilt: f64,
}

impl TestDensity {
    pub fn new(id: impl Into<String>, chart: usize, center: Vec<f64>, radius: Vec<f64>, tilt: f64) -> TestDensity {
        assert_eq!(center.len(), radius.len(), "center and radius dimensions differ");
        assert!(tilt.abs() < 1.0, "tilt must keep the density positive");
        TestDensity {
            id: id.into(),
            chart,
            center,
            radius,
            tilt,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn function(&self) -> SmoothFn {
        let c = self.center.clone();
        let r = self.radius.clone();
        let t = self.tilt;
        let n = self.dim();
        SmoothFn::new(n, UNLIMITED, move |x, k| {
            let vars = Jet::variables(x, k);
            let mut acc = Jet::constant(n, k, 1.0);
            for i in 0..n {
                acc = acc.mul(&bump(&vars[i].add_scalar(-c[i]).scale(1.0 / r[i])));
            }
            let tilt = vars[0].add_scalar(-c[0]).scale(t / r[0]).add_scalar(1.0);
            acc.mul(&tilt)
        })
    }

    pub fn support(&self) -> BoxDomain {
        BoxDomain::new(
            self.center.iter().zip(&self.radius).map(|(c, r)| c - r).collect(),
            self.center.iter().zip(&self.radius).map(|(c, r)| c + r).collect(),
        )
        .expect("radii are positive")
    }

    /// `count` seeded densities inside `domain`, centred in its middle half
    /// with radii between 30% and 60% of the half-width.
    pub fn suite(chart: usize, domain: &BoxDomain, count: usize, seed: u64) -> Vec<TestDensity> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (chart as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        (0..count)
            .map(|i| {
                let mut center = Vec::with_capacity(domain.dim());
                let mut radius = Vec::with_capacity(domain.dim());
                for (lo, hi) in domain.lo.iter().zip(&domain.hi) {
                    let mid = 0.5 * (lo + hi);
                    let half = 0.5 * (hi - lo);
                    let r = half * rng.gen_range(0.3..0.6);
                    let c = mid + rng.gen_range(-0.5..0.5) * (half - r);
                    center.push(c);
                    radius.push(r);
                }
                let tilt = rng.gen_range(-0.5..0.5);
                TestDensity::new(format!("chart{chart}-mu{i}"), chart, center, radius, tilt)
            })
            .collect()
    }
}

/// Quadrature breakpoints per axis that resolve ε-scale structure near the
/// focus points.
pub fn focus_breakpoints(focus: &[Vec<f64>], eps: f64, dim: usize, reach: f64) -> Vec<Vec<f64>> {
    let mut per_axis = vec![Vec::new(); dim];
    let mut scales = vec![0.0];
    let mut s = 0.25;
    while s <= reach {
        scales.push(s);
        scales.push(-s);
        s *= 2.0;
    }
    for p in focus {
        for (axis, c) in p.iter().enumerate().take(dim) {
            per_axis[axis].extend(scales.iter().map(|t| c + eps * t));
        }
    }
    per_axis
}

/// `∫ u φ dx` over the support of the density.
pub fn pair_member(u: &SmoothFn, density: &TestDensity, focus: &[Vec<f64>], eps: f64, opts: &QuadOptions) -> Result<f64> {
    let phi = density.function();
    let bps = focus_breakpoints(focus, eps, density.dim(), 256.0);
    let q = integrate_box(|x| u.eval(x) * phi.eval(x), &density.support(), &bps, opts)?;
    Ok(q.value)
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AssociationStatus {
    AssociatedTo { target: DistributionSpec },
    AssociatedToZero,
    NotAssociated { max_deviation: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingRow {
    pub density_id: String,
    pub eps: Vec<f64>,
    pub pairing: Vec<f64>,
    pub extrapolated: f64,
    pub extrapolation_residual: f64,
    pub target: f64,
    pub deviation: f64,
    pub pass: bool,
}

/// One `(density, ε)` record of a pairing table.
#[derive(Clone, Debug, Serialize)]
pub struct PairingRecord {
    pub density_id: String,
    pub eps: f64,
    pub pairing: f64,
    pub extrapolated: f64,
    pub target: f64,
    pub verdict: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssociationVerdict {
    #[serde(flatten)]
    pub status: AssociationStatus,
    pub rows: Vec<PairingRow>,
    pub tolerance: f64,
    pub note: String,
}

impl AssociationVerdict {
    pub fn is_associated(&self) -> bool {
        !matches!(self.status, AssociationStatus::NotAssociated { .. })
    }

    pub fn max_deviation(&self) -> f64 {
        self.rows.iter().map(|r| r.deviation).fold(0.0, f64::max)
    }

    pub fn records(&self) -> Vec<PairingRecord> {
        let mut out = Vec::new();
        for r in &self.rows {
            for (e, p) in r.eps.iter().zip(&r.pairing) {
                out.push(PairingRecord {
                    density_id: r.density_id.clone(),
                    eps: *e,
                    pairing: *p,
                    extrapolated: r.extrapolated,
                    target: r.target,
                    verdict: r.pass,
                });
            }
        }
        out
    }

    /// Merges chartwise verdicts into one.
    pub fn combine(parts: Vec<AssociationVerdict>, target: Option<&DistributionSpec>, tolerance: f64) -> AssociationVerdict {
        let rows: Vec<PairingRow> = parts.into_iter().flat_map(|p| p.rows).collect();
        verdict_from_rows(rows, target, tolerance)
    }
}

pub const SUITE_NOTE: &str = "finite test-density suite; association over all densities is not certified";

fn verdict_from_rows(rows: Vec<PairingRow>, target: Option<&DistributionSpec>, tolerance: f64) -> AssociationVerdict {
    let worst = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let status = if rows.iter().all(|r| r.pass) {
        match target {
            Some(t) if !t.is_zero() => AssociationStatus::AssociatedTo { target: t.clone() },
            _ => AssociationStatus::AssociatedToZero,
        }
    } else {
        AssociationStatus::NotAssociated { max_deviation: worst }
    };
    AssociationVerdict {
        status,
        rows,
        tolerance,
        note: SUITE_NOTE.into(),
    }
}

/// Pairings of `net` against each density over the grid, extrapolated to
/// ε → 0 and compared with the target action (zero when `target` is `None`).
pub fn associate_net(
    net: &Net,
    target: Option<&DistributionSpec>,
    densities: &[TestDensity],
    settings: &Settings,
) -> Result<AssociationVerdict> {
    let eps = settings.grid.values();
    let mut rows = Vec::with_capacity(densities.len());
    for d in densities {
        let pairs = map_grid(eps, settings.parallel, |e| pair_member(&net.at(e), d, net.focus(), e, &settings.quad));
        let pairing = pairs.into_iter().collect::<Result<Vec<f64>>>()?;
        let ex = extrapolate_to_zero(eps, &pairing);
        let tv = match target {
            Some(t) => t.pair(&d.function())?,
            None => 0.0,
        };
        let deviation = (ex.limit - tv).abs();
        rows.push(PairingRow {
            density_id: d.id.clone(),
            eps: eps.to_vec(),
            pairing,
            extrapolated: ex.limit,
            extrapolation_residual: ex.residual,
            target: tv,
            deviation,
            pass: deviation <= settings.pairing_tol,
        });
    }
    Ok(verdict_from_rows(rows, target, settings.pairing_tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_seeded_and_inside_domain() {
        let b = BoxDomain::interval(-1.0, 1.0);
        let a = TestDensity::suite(0, &b, 5, 7);
        let c = TestDensity::suite(0, &b, 5, 7);
        assert_eq!(a, c);
        for d in &a {
            let s = d.support();
            assert!(s.lo[0] >= -1.0 && s.hi[0] <= 1.0);
        }
    }

    #[test]
    fn smooth_net_associates_to_its_function() {
        let f = SmoothFn::coordinate(1, 0).sin();
        let net = Net::constant(f.clone());
        let target = DistributionSpec::smooth_on(f, -1.0, 1.0);
        let b = BoxDomain::interval(-1.0, 1.0);
        let v = associate_net(&net, Some(&target), &TestDensity::suite(0, &b, 3, 1), &Settings::default()).unwrap();
        assert!(v.is_associated());
        assert!(v.max_deviation() < 1e-9);
    }
}
