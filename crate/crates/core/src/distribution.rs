//! Finitely described distributions: Dirac derivatives plus piecewise
//! smooth densities on the line.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{binomial, Jet};
use crate::quad::{integrate, QuadOptions};
use crate::smooth::{SmoothFn, UNLIMITED};

/// `weight · ∂^β δ_loc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracTerm {
    pub loc: Vec<f64>,
    pub multi_index: Vec<u8>,
    pub weight: f64,
}

impl DiracTerm {
    pub fn order(&self) -> usize {
        self.multi_index.iter().map(|&b| b as usize).sum()
    }
}

/// One smooth piece of a regular part, named from a fixed registry.
///
/// Registry ids and parameters:
/// `const [c]`, `poly [a0, a1, …]`, `sin [a, k, φ]` (`a sin(kx + φ)`),
/// `cos [a, k, φ]`, `exp [a, k]` (`a e^{kx}`), `gauss [a, c, s]`
/// (`a e^{−((x−c)/s)²}`). Pieces built in code may carry an arbitrary
/// smooth function under the id `custom`; those do not round-trip through JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Piece {
    pub id: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(skip)]
    custom: Option<SmoothFn>,
}

impl Piece {
    pub fn new(id: &str, params: Vec<f64>) -> Piece {
        Piece {
            id: id.to_string(),
            params,
            custom: None,
        }
    }

    pub fn constant(c: f64) -> Piece {
        Piece::new("const", vec![c])
    }

    pub fn custom(f: SmoothFn) -> Piece {
        assert_eq!(f.dim(), 1, "pieces are univariate");
        Piece {
            id: "custom".into(),
            params: vec![],
            custom: Some(f),
        }
    }

    fn param(&self, i: usize, default: f64) -> f64 {
        self.params.get(i).copied().unwrap_or(default)
    }

    /// The constant value when the piece is constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.id.as_str() {
            "const" => Some(self.param(0, 0.0)),
            "poly" if self.params.len() <= 1 => Some(self.param(0, 0.0)),
            _ => None,
        }
    }

    pub fn resolve(&self) -> Result<SmoothFn> {
        let a = self.param(0, 1.0);
        Ok(match self.id.as_str() {
            "const" => SmoothFn::constant(1, self.param(0, 0.0)),
            "poly" => SmoothFn::polynomial(
                1,
                self.params
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (vec![i as u32], *c))
                    .collect(),
            ),
            "sin" | "cos" => {
                let (k, phi) = (self.param(1, 1.0), self.param(2, 0.0));
                let is_sin = self.id == "sin";
                SmoothFn::from_jet_map(1, move |v| {
                    let arg = v[0].scale(k).add_scalar(phi);
                    if is_sin { arg.sin() } else { arg.cos() }.scale(a)
                })
            }
            "exp" => {
                let k = self.param(1, 1.0);
                SmoothFn::from_jet_map(1, move |v| v[0].scale(k).exp().scale(a))
            }
            "gauss" => {
                let (c, s) = (self.param(1, 0.0), self.param(2, 1.0));
                if s == 0.0 {
                    return Err(Error::UnsupportedDistribution("gauss piece with zero width".into()));
                }
                SmoothFn::from_jet_map(1, move |v| {
                    let u = v[0].add_scalar(-c).scale(1.0 / s);
                    u.mul(&u).neg().exp().scale(a)
                })
            }
            "custom" => self
                .custom
                .clone()
                .ok_or_else(|| Error::UnknownRegistryEntry("custom piece without a function".into()))?,
            other => return Err(Error::UnknownRegistryEntry(format!("piece '{other}'"))),
        })
    }
}

/// Piecewise smooth density: `pieces[i]` lives on `[breakpoints[i], breakpoints[i+1]]`
/// and the density vanishes outside.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularPart {
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<Piece>,
}

impl RegularPart {
    pub fn validate(&self) -> Result<()> {
        if self.breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::UnsupportedDistribution("regular part has unbounded support".into()));
        }
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::UnsupportedDistribution("breakpoints must increase strictly".into()));
        }
        if self.pieces.len() + 1 != self.breakpoints.len() {
            return Err(Error::UnsupportedDistribution(format!(
                "{} breakpoints need {} pieces, found {}",
                self.breakpoints.len(),
                self.breakpoints.len().saturating_sub(1),
                self.pieces.len()
            )));
        }
        for p in &self.pieces {
            p.resolve()?;
        }
        Ok(())
    }

    /// Pieces as `(a, b, f)` intervals.
    pub fn intervals(&self) -> Result<Vec<(f64, f64, SmoothFn, Option<f64>)>> {
        self.validate()?;
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, p)| Ok((self.breakpoints[i], self.breakpoints[i + 1], p.resolve()?, p.as_constant())))
            .collect()
    }

    /// Value of the density (right-continuous at breakpoints).
    pub fn density(&self, x: f64) -> Result<f64> {
        for (a, b, f, _) in self.intervals()? {
            if x >= a && x < b {
                return Ok(f.eval(&[x]));
            }
        }
        Ok(0.0)
    }

    fn merged(&self, other: &RegularPart) -> Result<RegularPart> {
        let mut bps: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        bps.sort_by(|a, b| a.total_cmp(b));
        bps.dedup();
        let mine = self.intervals()?;
        let theirs = other.intervals()?;
        let pick = |ivs: &[(f64, f64, SmoothFn, Option<f64>)], mid: f64| {
            ivs.iter()
                .find(|(a, b, _, _)| mid > *a && mid < *b)
                .map(|(_, _, f, c)| (f.clone(), *c))
        };
        let mut pieces = Vec::with_capacity(bps.len() - 1);
        for w in bps.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let piece = match (pick(&mine, mid), pick(&theirs, mid)) {
                (Some((_, Some(c1))), Some((_, Some(c2)))) => Piece::constant(c1 + c2),
                (Some((f, c)), None) | (None, Some((f, c))) => match c {
                    Some(c) => Piece::constant(c),
                    None => Piece::custom(f),
                },
                (Some((f, _)), Some((g, _))) => Piece::custom(f.add(&g)),
                (None, None) => Piece::constant(0.0),
            };
            pieces.push(piece);
        }
        Ok(RegularPart {
            breakpoints: bps,
            pieces,
        })
    }

    fn map_pieces<F>(&self, f: F) -> Result<RegularPart>
    where
        F: Fn(&Piece) -> Result<Piece>,
    {
        Ok(RegularPart {
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(f).collect::<Result<_>>()?,
        })
    }
}

/// A compactly supported distribution given by finitely many Dirac
/// derivatives and an optional piecewise smooth density (line only).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DistributionSpec {
    /// Ambient dimension; inferred from the Dirac locations when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub singular: Vec<DiracTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regular: Option<RegularPart>,
}

impl DistributionSpec {
    pub fn zero(dim: usize) -> DistributionSpec {
        DistributionSpec {
            dim: Some(dim),
            ..Default::default()
        }
    }

    /// `weight · ∂^β δ_loc`.
    pub fn dirac(loc: Vec<f64>, multi_index: Vec<u8>, weight: f64) -> DistributionSpec {
        DistributionSpec {
            dim: Some(loc.len()),
            singular: vec![DiracTerm {
                loc,
                multi_index,
                weight,
            }],
            regular: None,
        }
    }

    /// `δ_0` on `ℝⁿ`.
    pub fn delta(dim: usize) -> DistributionSpec {
        DistributionSpec::dirac(vec![0.0; dim], vec![0; dim], 1.0)
    }

    pub fn regular(breakpoints: Vec<f64>, pieces: Vec<Piece>) -> DistributionSpec {
        DistributionSpec {
            dim: Some(1),
            singular: vec![],
            regular: Some(RegularPart { breakpoints, pieces }),
        }
    }

    /// Heaviside function cut off to `[−l, l]`.
    pub fn heaviside(l: f64) -> DistributionSpec {
        DistributionSpec::regular(vec![-l, 0.0, l], vec![Piece::constant(0.0), Piece::constant(1.0)])
    }

    /// A smooth function restricted to `[a, b]`.
    pub fn smooth_on(f: SmoothFn, a: f64, b: f64) -> DistributionSpec {
        DistributionSpec::regular(vec![a, b], vec![Piece::custom(f)])
    }

    pub fn from_json(s: &str) -> Result<DistributionSpec> {
        let d: DistributionSpec = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn dimension(&self) -> usize {
        self.dim
            .or_else(|| self.singular.first().map(|t| t.loc.len()))
            .unwrap_or(1)
    }

    pub fn is_zero(&self) -> bool {
        self.singular.iter().all(|t| t.weight == 0.0) && self.regular.is_none()
    }

    pub fn max_dirac_order(&self) -> usize {
        self.singular.iter().map(DiracTerm::order).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension();
        for t in &self.singular {
            if t.loc.len() != n || t.multi_index.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: if t.loc.len() != n { t.loc.len() } else { t.multi_index.len() },
                });
            }
            if t.loc.iter().any(|v| !v.is_finite()) || !t.weight.is_finite() {
                return Err(Error::UnsupportedDistribution("non-finite Dirac term".into()));
            }
        }
        if let Some(r) = &self.regular {
            if n != 1 {
                return Err(Error::UnsupportedDistribution(
                    "regular parts are supported on the line only".into(),
                ));
            }
            r.validate()?;
        }
        Ok(())
    }

    /// Points where the distribution is singular or has jumps.
    pub fn singular_points(&self) -> Vec<Vec<f64>> {
        let mut pts: Vec<Vec<f64>> = self.singular.iter().map(|t| t.loc.clone()).collect();
        if let Some(r) = &self.regular {
            pts.extend(r.breakpoints.iter().map(|b| vec![*b]));
        }
        pts
    }

    /// Smallest box containing the support.
    pub fn support_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let pts = self.singular_points();
        let first = pts.first()?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for p in &pts {
            for i in 0..p.len() {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Some((lo, hi))
    }

    /// Action `⟨w, φ⟩` on a test function.
    pub fn pair(&self, phi: &SmoothFn) -> Result<f64> {
        self.validate()?;
        let mut total = 0.0;
        for t in &self.singular {
            let sign = if t.order() % 2 == 0 { 1.0 } else { -1.0 };
            total += t.weight * sign * phi.partial(&t.multi_index, &t.loc)?;
        }
        if let Some(r) = &self.regular {
            let opts = QuadOptions::with_tol(1e-12, 1e-15);
            for (a, b, f, _) in r.intervals()? {
                total += integrate(|x| f.eval(&[x]) * phi.eval(&[x]), a, b, &[], &opts)?.value;
            }
        }
        Ok(total)
    }

    pub fn add(&self, other: &DistributionSpec) -> Result<DistributionSpec> {
        if self.dimension() != other.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: other.dimension(),
            });
        }
        let regular = match (&self.regular, &other.regular) {
            (Some(a), Some(b)) => Some(a.merged(b)?),
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (None, None) => None,
        };
        Ok(DistributionSpec {
            dim: Some(self.dimension()),
            singular: self.singular.iter().chain(&other.singular).cloned().collect(),
            regular,
        })
    }

    pub fn scale(&self, c: f64) -> DistributionSpec {
        let mut out = self.clone();
        for t in &mut out.singular {
            t.weight *= c;
        }
        if let Some(r) = &mut out.regular {
            for p in &mut r.pieces {
                *p = match p.as_constant() {
                    Some(v) => Piece::constant(c * v),
                    None => Piece::custom(p.resolve().expect("validated piece").scale(c)),
                };
            }
        }
        out
    }

    /// `f · w` for a smooth multiplier `f`.
    pub fn mul_smooth(&self, f: &SmoothFn) -> Result<DistributionSpec> {
        self.validate()?;
        let n = self.dimension();
        if f.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: f.dim(),
            });
        }
        let mut singular = Vec::new();
        for t in &self.singular {
            // f ∂^β δ_a = Σ_{γ≤β} C(β,γ) (−1)^{|γ|} ∂^γ f(a) ∂^{β−γ} δ_a
            let jet = f.jet(&t.loc, t.order())?;
            for gamma in sub_indices(&t.multi_index) {
                let c: f64 = t
                    .multi_index
                    .iter()
                    .zip(&gamma)
                    .map(|(&b, &g)| binomial(b as usize, g as usize))
                    .product();
                let g_ord: usize = gamma.iter().map(|&g| g as usize).sum();
                let sign = if g_ord % 2 == 0 { 1.0 } else { -1.0 };
                let w = t.weight * c * sign * jet.derivative(&gamma);
                if w != 0.0 {
                    singular.push(DiracTerm {
                        loc: t.loc.clone(),
                        multi_index: t.multi_index.iter().zip(&gamma).map(|(b, g)| b - g).collect(),
                        weight: w,
                    });
                }
            }
        }
        let regular = match &self.regular {
            Some(r) => Some(r.map_pieces(|p| Ok(Piece::custom(p.resolve()?.mul(f))))?),
            None => None,
        };
        Ok(DistributionSpec {
            dim: Some(n),
            singular,
            regular,
        })
    }

    /// Pullback along `x ↦ λx + c` (componentwise on `ℝⁿ`).
    pub fn pullback_affine(&self, lambda: f64, shift: f64) -> Result<DistributionSpec> {
        self.validate()?;
        if lambda == 0.0 {
            return Err(Error::DomainError("affine map is not invertible".into()));
        }
        let n = self.dimension() as i32;
        let singular = self
            .singular
            .iter()
            .map(|t| DiracTerm {
                loc: t.loc.iter().map(|a| (a - shift) / lambda).collect(),
                multi_index: t.multi_index.clone(),
                weight: t.weight * lambda.powi(-(t.order() as i32)) / lambda.abs().powi(n),
            })
            .collect();
        let regular = match &self.regular {
            None => None,
            Some(r) => {
                let mut bps: Vec<f64> = r.breakpoints.iter().map(|b| (b - shift) / lambda).collect();
                let mut pieces: Vec<Piece> = r
                    .pieces
                    .iter()
                    .map(|p| {
                        Ok(match p.as_constant() {
                            Some(c) => Piece::constant(c),
                            None => Piece::custom(p.resolve()?.pullback(1, move |v| {
                                vec![v[0].scale(lambda).add_scalar(shift)]
                            })),
                        })
                    })
                    .collect::<Result<_>>()?;
                if lambda < 0.0 {
                    bps.reverse();
                    pieces.reverse();
                }
                Some(RegularPart {
                    breakpoints: bps,
                    pieces,
                })
            }
        };
        Ok(DistributionSpec {
            dim: Some(n as usize),
            singular,
            regular,
        })
    }

    /// Pullback along a smooth monotone diffeomorphism of the line with known
    /// inverse. Only Dirac terms of order zero are supported.
    pub fn pullback_smooth(&self, forward: &SmoothFn, inverse: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Result<DistributionSpec> {
        self.validate()?;
        if self.dimension() != 1 || forward.dim() != 1 {
            return Err(Error::UnsupportedDistribution("smooth pullbacks act on the line only".into()));
        }
        let mut singular = Vec::new();
        for t in &self.singular {
            if t.order() > 0 {
                return Err(Error::UnsupportedDistribution(
                    "pullback of Dirac derivatives along non-affine maps".into(),
                ));
            }
            let x0 = inverse(t.loc[0]);
            let d = forward.partial(&[1], &[x0])?;
            singular.push(DiracTerm {
                loc: vec![x0],
                multi_index: vec![0],
                weight: t.weight / d.abs(),
            });
        }
        let regular = match &self.regular {
            None => None,
            Some(r) => {
                let mut bps: Vec<f64> = r.breakpoints.iter().map(|b| inverse(*b)).collect();
                let fw = forward.clone();
                let mut pieces: Vec<Piece> = r
                    .pieces
                    .iter()
                    .map(|p| Ok(Piece::custom(p.resolve()?.compose(&[fw.clone()]))))
                    .collect::<Result<_>>()?;
                if bps.first() > bps.last() {
                    bps.reverse();
                    pieces.reverse();
                }
                Some(RegularPart {
                    breakpoints: bps,
                    pieces,
                })
            }
        };
        Ok(DistributionSpec {
            dim: Some(1),
            singular,
            regular,
        })
    }
}

/// All multi-indices `γ ≤ β`.
pub fn sub_indices(beta: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for &b in beta {
        let mut next = Vec::new();
        for p in &out {
            for g in 0..=b {
                let mut q = p.clone();
                q.push(g);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// A diffeomorphism of the line used by pullback experiments.
#[derive(Clone)]
pub enum Diffeo {
    Affine {
        scale: f64,
        shift: f64,
    },
    Smooth {
        forward: SmoothFn,
        inverse: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for Diffeo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diffeo::Affine { scale, shift } => write!(f, "Affine({scale} x + {shift})"),
            Diffeo::Smooth { .. } => write!(f, "Smooth(..)"),
        }
    }
}

impl Diffeo {
    pub fn identity() -> Diffeo {
        Diffeo::Affine { scale: 1.0, shift: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Diffeo::Affine { scale, shift } if *scale == 1.0 && *shift == 0.0)
    }

    /// The map as a smooth function of one variable.
    pub fn forward(&self) -> SmoothFn {
        match self {
            Diffeo::Affine { scale, shift } => {
                let (l, c) = (*scale, *shift);
                SmoothFn::new(1, UNLIMITED, move |x, k| Jet::variable(1, k, 0, x[0]).scale(l).add_scalar(c))
            }
            Diffeo::Smooth { forward, .. } => forward.clone(),
        }
    }

    pub fn pull_distribution(&self, w: &DistributionSpec) -> Result<DistributionSpec> {
        match self {
            Diffeo::Affine { scale, shift } => w.pullback_affine(*scale, *shift),
            Diffeo::Smooth { forward, inverse } => w.pullback_smooth(forward, inverse.as_ref()),
        }
    }

    /// `f ∘ μ`.
    pub fn pull_function(&self, f: &SmoothFn) -> SmoothFn {
        f.compose(&[self.forward()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> SmoothFn {
        SmoothFn::polynomial(1, vec![(vec![0], 1.0), (vec![1], 2.0), (vec![3], -1.0)])
    }

    #[test]
    fn json_round_trip() {
        let s = r#"{"singular":[{"loc":[0.5],"multi_index":[1],"weight":2.0}],
                    "regular":{"breakpoints":[-1,0,1],"pieces":[{"id":"const","params":[0.5]},{"id":"sin","params":[1,2,0]}]}}"#;
        let d = DistributionSpec::from_json(s).unwrap();
        assert_eq!(d.dimension(), 1);
        let back: DistributionSpec = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back.singular, d.singular);
        assert!(DistributionSpec::from_json(r#"{"regular":{"breakpoints":[0,1],"pieces":[{"id":"nope"}]}}"#).is_err());
        assert!(DistributionSpec::from_json(r#"{"regular":{"breakpoints":[0,1,2],"pieces":[{"id":"const"}]}}"#).is_err());
    }

    #[test]
    fn pairing_of_dirac_derivative() {
        let d = DistributionSpec::dirac(vec![0.5], vec![1], 2.0);
        // ⟨2δ′_{1/2}, φ⟩ = −2 φ′(1/2)
        let v = d.pair(&cubic()).unwrap();
        assert!((v + 2.0 * (2.0 - 3.0 * 0.25)).abs() < 1e-14);
    }

    #[test]
    fn multiplication_by_x_kills_delta_and_turns_derivative_into_minus_delta() {
        let x = SmoothFn::coordinate(1, 0);
        let xd = DistributionSpec::delta(1).mul_smooth(&x).unwrap();
        assert!(xd.singular.iter().all(|t| t.weight == 0.0));
        let xdp = DistributionSpec::dirac(vec![0.0], vec![1], 1.0).mul_smooth(&x).unwrap();
        let phi = cubic();
        assert!((xdp.pair(&phi).unwrap() + phi.eval(&[0.0])).abs() < 1e-14);
    }

    #[test]
    fn affine_pullback_of_delta() {
        // μ(x) = 2x: μ*δ = δ/2
        let p = DistributionSpec::delta(1).pullback_affine(2.0, 0.0).unwrap();
        assert_eq!(p.singular[0].weight, 0.5);
        let phi = cubic();
        let w = DistributionSpec::heaviside(1.0);
        let direct = w.pullback_affine(-2.0, 0.5).unwrap().pair(&phi).unwrap();
        // ∫ H(−2x + 1/2) 1_{[-1,1]}(−2x+1/2) φ(x) dx over x ∈ [−1/4, 1/4]
        let q = integrate(|x| phi.eval(&[x]), -0.25, 0.25, &[], &QuadOptions::default()).unwrap();
        assert!((direct - q.value).abs() < 1e-10);
    }

    #[test]
    fn sums_merge_regular_parts() {
        let a = DistributionSpec::heaviside(1.0);
        let b = DistributionSpec::regular(vec![-0.5, 0.5], vec![Piece::new("poly", vec![0.0, 1.0])]);
        let s = a.add(&b).unwrap();
        let phi = cubic();
        let lhs = s.pair(&phi).unwrap();
        let rhs = a.pair(&phi).unwrap() + b.pair(&phi).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
