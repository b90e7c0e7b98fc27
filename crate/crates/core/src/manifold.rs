//! Charts, atlases, partitions of unity and generalized points for the
//! built-in manifolds `ℝⁿ`, `S¹` and `T²`.
//!
//! Points are stored by ambient parameters: Euclidean coordinates, or
//! angles (defined mod 2π) for the circle factors. Every chart is a product
//! of one-dimensional factor charts, so transitions act axis by axis.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::asymptotic::{classify_scalar_net, AsymptoticFit};
use crate::domain::{cartesian, BoxDomain};
use crate::error::{Error, Result};
use crate::estimate::Settings;
use crate::jet::Jet;
use crate::smooth::{smooth_step, SmoothFn, UNLIMITED};

const TAU: f64 = 2.0 * PI;

/// Distance between two angles on the circle.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartFactor {
    /// Identity on a Euclidean axis.
    Line,
    /// Angle with values in `(offset, offset + 2π)`; excludes `θ = offset`.
    Angle { offset: f64 },
    /// `u = tan(θ/2)`; excludes `θ = π`.
    Stereo,
}

impl ChartFactor {
    fn is_periodic(&self) -> bool {
        !matches!(self, ChartFactor::Line)
    }

    /// Distance from `θ` to the excluded point, or `∞` for lines.
    fn clearance(&self, theta: f64) -> f64 {
        match self {
            ChartFactor::Line => f64::INFINITY,
            ChartFactor::Angle { offset } => angle_distance(theta, *offset),
            ChartFactor::Stereo => angle_distance(theta, PI),
        }
    }

    fn forward(&self, theta: &Jet) -> Jet {
        match self {
            ChartFactor::Line => theta.clone(),
            ChartFactor::Angle { offset } => {
                let k = ((theta.value() - offset) / TAU).floor();
                theta.add_scalar(-k * TAU)
            }
            ChartFactor::Stereo => {
                let k = ((theta.value() + PI) / TAU).floor();
                theta.add_scalar(-k * TAU).scale(0.5).tan()
            }
        }
    }

    fn inverse(&self, y: &Jet) -> Jet {
        match self {
            ChartFactor::Line | ChartFactor::Angle { .. } => y.clone(),
            ChartFactor::Stereo => y.atan().scale(2.0),
        }
    }

    /// Compact coordinate interval used for sampling inside the chart.
    fn work_interval(&self, line_half_width: f64) -> (f64, f64) {
        match self {
            ChartFactor::Line => (-line_half_width, line_half_width),
            ChartFactor::Angle { offset } => (offset + PI / 16.0, offset + TAU - PI / 16.0),
            ChartFactor::Stereo => (-3.0, 3.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub name: String,
    pub factors: Vec<ChartFactor>,
}

impl Chart {
    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// `ψ` on ambient parameter jets.
    pub fn forward_jets(&self, p: &[Jet]) -> Vec<Jet> {
        self.factors.iter().zip(p).map(|(f, v)| f.forward(v)).collect()
    }

    /// `ψ^{−1}` on coordinate jets.
    pub fn inverse_jets(&self, y: &[Jet]) -> Vec<Jet> {
        self.factors.iter().zip(y).map(|(f, v)| f.inverse(v)).collect()
    }

    pub fn forward(&self, p: &[f64]) -> Vec<f64> {
        let jets: Vec<Jet> = p.iter().map(|v| Jet::constant(1, 0, *v)).collect();
        self.forward_jets(&jets).iter().map(Jet::value).collect()
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let jets: Vec<Jet> = y.iter().map(|v| Jet::constant(1, 0, *v)).collect();
        self.inverse_jets(&jets).iter().map(Jet::value).collect()
    }

    /// Whether the ambient point lies in the chart domain, at least
    /// `margin` away from its excluded set.
    pub fn contains(&self, p: &[f64], margin: f64) -> bool {
        self.factors.iter().zip(p).all(|(f, v)| f.clearance(*v) > margin)
    }
}

/// Bumps `χ_j` summing to one and plateaus `ζ_j` equal to one on `supp χ_j`,
/// both as functions of the ambient parameters.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    pub chi: Vec<SmoothFn>,
    pub zeta: Vec<SmoothFn>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AtlasSpec {
    Euclidean { dim: usize },
    Circle,
    Torus2,
}

#[derive(Clone, Debug)]
pub struct Atlas {
    pub spec: AtlasSpec,
    pub charts: Vec<Chart>,
    pub pou: PartitionOfUnity,
    /// Half-width of the working box on Euclidean axes.
    pub line_half_width: f64,
}

fn circle_factors() -> Vec<(ChartFactor, &'static str)> {
    vec![
        (ChartFactor::Angle { offset: -PI }, "t"),
        (ChartFactor::Angle { offset: 0.0 }, "s"),
        (ChartFactor::Stereo, "u"),
    ]
}

/// `S(g(cos θ))` where `S` is the smooth step.
fn cos_step(lo: f64, hi: f64, increasing: bool) -> impl Fn(&Jet) -> Jet + Send + Sync + Clone {
    move |theta: &Jet| {
        let c = theta.cos();
        let t = if increasing {
            c.add_scalar(-lo).scale(1.0 / (hi - lo))
        } else {
            c.neg().add_scalar(hi).scale(1.0 / (hi - lo))
        };
        smooth_step(&t)
    }
}

/// Per-factor bump and plateau functions of one angle, for charts t, s, u.
fn circle_pou_factors() -> (Vec<Arc<dyn Fn(&Jet) -> Jet + Send + Sync>>, Vec<Arc<dyn Fn(&Jet) -> Jet + Send + Sync>>) {
    let c = |a: f64| a.cos();
    // χ_t = 1 for |t| ≤ π/4, 0 for |t| ≥ 3π/4; χ_s = 1 − χ_t
    let chi_t = cos_step(c(3.0 * PI / 4.0), c(PI / 4.0), true);
    let chi_t2 = chi_t.clone();
    // ζ_t = 1 for |t| ≤ 3π/4, 0 beyond 7π/8; ζ_s = 1 for |t| ≥ π/4, 0 for |t| ≤ π/8
    let zeta_t = cos_step(c(7.0 * PI / 8.0), c(3.0 * PI / 4.0), true);
    let zeta_s = cos_step(c(PI / 4.0), c(PI / 8.0), false);
    let chi: Vec<Arc<dyn Fn(&Jet) -> Jet + Send + Sync>> = vec![
        Arc::new(chi_t),
        Arc::new(move |th: &Jet| chi_t2(th).neg().add_scalar(1.0)),
        Arc::new(|th: &Jet| Jet::zero(th.dim(), th.order())),
    ];
    let zeta: Vec<Arc<dyn Fn(&Jet) -> Jet + Send + Sync>> = vec![
        Arc::new(zeta_t),
        Arc::new(zeta_s),
        Arc::new(|th: &Jet| Jet::zero(th.dim(), th.order())),
    ];
    (chi, zeta)
}

impl Atlas {
    pub fn euclidean(dim: usize) -> Atlas {
        Atlas {
            spec: AtlasSpec::Euclidean { dim },
            charts: vec![Chart {
                name: "id".into(),
                factors: vec![ChartFactor::Line; dim],
            }],
            pou: PartitionOfUnity {
                chi: vec![SmoothFn::constant(dim, 1.0)],
                zeta: vec![SmoothFn::constant(dim, 1.0)],
            },
            line_half_width: 1.0,
        }
    }

    pub fn circle() -> Atlas {
        let (chi, zeta) = circle_pou_factors();
        let charts = circle_factors()
            .into_iter()
            .map(|(f, name)| Chart {
                name: name.into(),
                factors: vec![f],
            })
            .collect();
        let lift = |g: &Arc<dyn Fn(&Jet) -> Jet + Send + Sync>| {
            let g = g.clone();
            SmoothFn::new(1, UNLIMITED, move |x, k| g(&Jet::variable(1, k, 0, x[0])))
        };
        Atlas {
            spec: AtlasSpec::Circle,
            charts,
            pou: PartitionOfUnity {
                chi: chi.iter().map(lift).collect(),
                zeta: zeta.iter().map(lift).collect(),
            },
            line_half_width: 1.0,
        }
    }

    pub fn torus2() -> Atlas {
        let (chi, zeta) = circle_pou_factors();
        let f = circle_factors();
        let mut charts = Vec::new();
        let mut pchi = Vec::new();
        let mut pzeta = Vec::new();
        for i in 0..f.len() {
            for j in 0..f.len() {
                charts.push(Chart {
                    name: format!("{}{}", f[i].1, f[j].1),
                    factors: vec![f[i].0, f[j].0],
                });
                let prod = |a: &Arc<dyn Fn(&Jet) -> Jet + Send + Sync>, b: &Arc<dyn Fn(&Jet) -> Jet + Send + Sync>| {
                    let (a, b) = (a.clone(), b.clone());
                    SmoothFn::new(2, UNLIMITED, move |x, k| {
                        let v = Jet::variables(x, k);
                        a(&v[0]).mul(&b(&v[1]))
                    })
                };
                pchi.push(prod(&chi[i], &chi[j]));
                pzeta.push(prod(&zeta[i], &zeta[j]));
            }
        }
        Atlas {
            spec: AtlasSpec::Torus2,
            charts,
            pou: PartitionOfUnity { chi: pchi, zeta: pzeta },
            line_half_width: 1.0,
        }
    }

    pub fn from_spec(spec: AtlasSpec) -> Atlas {
        match spec {
            AtlasSpec::Euclidean { dim } => Atlas::euclidean(dim),
            AtlasSpec::Circle => Atlas::circle(),
            AtlasSpec::Torus2 => Atlas::torus2(),
        }
    }

    /// Parses a registry descriptor such as `{"name": "circle"}`.
    pub fn from_json(s: &str) -> Result<Atlas> {
        let spec: AtlasSpec = serde_json::from_str(s)?;
        Ok(Atlas::from_spec(spec))
    }

    pub fn dim(&self) -> usize {
        self.charts[0].dim()
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn same_as(&self, other: &Atlas) -> bool {
        self.spec == other.spec
    }

    /// Compact coordinate box used for sampling in chart `a`.
    pub fn work_box(&self, a: usize) -> BoxDomain {
        let (lo, hi): (Vec<f64>, Vec<f64>) = self.charts[a]
            .factors
            .iter()
            .map(|f| f.work_interval(self.line_half_width))
            .unzip();
        BoxDomain::new(lo, hi).expect("work box is valid")
    }

    /// `ψ_b ∘ ψ_a^{−1}` on coordinate jets.
    pub fn transition_jets(&self, a: usize, b: usize, y: &[Jet]) -> Vec<Jet> {
        let p = self.charts[a].inverse_jets(y);
        self.charts[b].forward_jets(&p)
    }

    pub fn transition(&self, a: usize, b: usize, y: &[f64]) -> Vec<f64> {
        self.charts[b].forward(&self.charts[a].inverse(y))
    }

    /// `∂(ψ_b ∘ ψ_a^{−1})/∂y` at `y`.
    pub fn jacobian(&self, a: usize, b: usize, y: &[f64]) -> DMatrix<f64> {
        let n = y.len();
        let out = self.transition_jets(a, b, &Jet::variables(y, 1));
        DMatrix::from_fn(n, n, |i, j| {
            let mut alpha = vec![0u8; n];
            alpha[j] = 1;
            out[i].derivative(&alpha)
        })
    }

    /// Smooth function of the ambient parameters, pulled to chart `a`.
    pub fn in_chart(&self, a: usize, f: &SmoothFn) -> SmoothFn {
        let chart = self.charts[a].clone();
        f.pullback(self.dim(), move |y| chart.inverse_jets(y))
    }

    /// Ambient parameter lattice: `count` points per axis.
    pub fn ambient_lattice(&self, count: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self.charts[0]
            .factors
            .iter()
            .map(|f| {
                if f.is_periodic() {
                    (0..count).map(|i| TAU * (i as f64 + 0.5) / count as f64 - PI).collect()
                } else {
                    let w = self.line_half_width;
                    (0..count).map(|i| -w + 2.0 * w * i as f64 / (count - 1).max(1) as f64).collect()
                }
            })
            .collect();
        cartesian(&axes)
    }

    /// Ambient lattice points inside both charts (with margin), expressed in
    /// chart `a` coordinates and restricted to its work box.
    pub fn overlap_samples(&self, a: usize, b: usize, count: usize, margin: f64) -> Vec<Vec<f64>> {
        let wb = self.work_box(a);
        let wb_b = self.work_box(b);
        self.ambient_lattice(count)
            .into_iter()
            .filter(|p| self.charts[a].contains(p, margin) && self.charts[b].contains(p, margin))
            .map(|p| self.charts[a].forward(&p))
            .filter(|y| wb.contains(y) && wb_b.contains(&self.transition(a, b, y)))
            .collect()
    }

    /// Pairs of distinct charts with a nonempty overlap sample.
    pub fn overlapping_pairs(&self, count: usize, margin: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.len() {
            for b in 0..self.len() {
                if a != b && !self.overlap_samples(a, b, count, margin).is_empty() {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Max cocycle defect `|t_bc(t_ab(y)) − t_ac(y)|` over triple overlaps.
    pub fn cocycle_defect(&self, count: usize) -> f64 {
        let mut worst = 0.0f64;
        for p in self.ambient_lattice(count) {
            let inside: Vec<usize> = (0..self.len()).filter(|&c| self.charts[c].contains(&p, 0.1)).collect();
            for &a in &inside {
                let y = self.charts[a].forward(&p);
                for &b in &inside {
                    for &c in &inside {
                        let via = self.transition(b, c, &self.transition(a, b, &y));
                        let direct = self.transition(a, c, &y);
                        for (u, v) in via.iter().zip(&direct) {
                            worst = worst.max((u - v).abs() / (1.0 + v.abs()));
                        }
                    }
                }
            }
        }
        worst
    }

    /// Checks the partition of unity on an ambient lattice: `Σχ = 1`,
    /// `ζ_j = 1` where `χ_j ≠ 0`, and `supp ζ_j` inside chart `j`.
    pub fn check_partition(&self, count: usize) -> Result<f64> {
        if self.pou.chi.len() != self.len() || self.pou.zeta.len() != self.len() {
            return Err(Error::PartitionMismatch(format!(
                "{} charts, {} bumps, {} plateaus",
                self.len(),
                self.pou.chi.len(),
                self.pou.zeta.len()
            )));
        }
        let mut worst = 0.0f64;
        for p in self.ambient_lattice(count) {
            let mut sum = 0.0;
            for j in 0..self.len() {
                let chi = self.pou.chi[j].eval(&p);
                let zeta = self.pou.zeta[j].eval(&p);
                sum += chi;
                if chi != 0.0 && (zeta - 1.0).abs() > 1e-12 {
                    return Err(Error::PartitionMismatch(format!("ζ_{j} ≠ 1 on supp χ_{j} at {p:?}")));
                }
                if zeta != 0.0 && !self.charts[j].contains(&p, 1e-9) {
                    return Err(Error::PartitionMismatch(format!("supp ζ_{j} leaves chart {j} at {p:?}")));
                }
            }
            worst = worst.max((sum - 1.0).abs());
        }
        if worst > 1e-10 {
            return Err(Error::PartitionMismatch(format!("Σχ deviates from 1 by {worst:e}")));
        }
        Ok(worst)
    }
}

/// The built-in manifolds.
pub fn builtin_manifolds() -> Vec<Atlas> {
    vec![Atlas::euclidean(1), Atlas::euclidean(2), Atlas::euclidean(3), Atlas::circle(), Atlas::torus2()]
}

/// Net of ambient points with a compact-support witness.
#[derive(Clone)]
pub struct GeneralizedPoint {
    net: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    pub chart: usize,
    /// Box in chart coordinates containing the point for `ε ≤ eps_threshold`.
    pub witness: BoxDomain,
    pub eps_threshold: f64,
}

impl std::fmt::Debug for GeneralizedPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralizedPoint")
            .field("chart", &self.chart)
            .field("witness", &self.witness)
            .finish_non_exhaustive()
    }
}

impl GeneralizedPoint {
    pub fn new<F>(net: F, chart: usize, witness: BoxDomain, eps_threshold: f64) -> GeneralizedPoint
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        GeneralizedPoint {
            net: Arc::new(net),
            chart,
            witness,
            eps_threshold,
        }
    }

    /// The constant net of an ambient point, witnessed in chart `chart`.
    pub fn classical(atlas: &Atlas, chart: usize, p: Vec<f64>) -> GeneralizedPoint {
        let y = atlas.charts[chart].forward(&p);
        let witness = BoxDomain::new(y.iter().map(|v| v - 1e-6).collect(), y.iter().map(|v| v + 1e-6).collect())
            .expect("finite point");
        GeneralizedPoint::new(move |_| p.clone(), chart, witness, 1.0)
    }

    pub fn at(&self, eps: f64) -> Vec<f64> {
        (self.net)(eps)
    }

    /// Chart coordinates at ε, if inside the witness box of chart `c`.
    pub fn coords_in(&self, atlas: &Atlas, c: usize, witness: &BoxDomain, eps: f64) -> Option<Vec<f64>> {
        let p = self.at(eps);
        if !atlas.charts[c].contains(&p, 0.0) {
            return None;
        }
        let y = atlas.charts[c].forward(&p);
        witness.contains(&y).then_some(y)
    }

    /// Checks the witness on the grid values below the threshold.
    pub fn witness_holds(&self, atlas: &Atlas, grid: &[f64]) -> bool {
        grid.iter()
            .filter(|&&e| e <= self.eps_threshold)
            .all(|&e| self.coords_in(atlas, self.chart, &self.witness, e).is_some())
    }
}

/// Equivalence of generalized points by chart coordinates: the distance of
/// `ψ(p_ε)` and `ψ(q_ε)` must be negligible.
pub fn point_equiv(atlas: &Atlas, p: &GeneralizedPoint, q: &GeneralizedPoint, settings: &Settings) -> Result<(bool, AsymptoticFit)> {
    let grid = settings.grid.values();
    let threshold = p.eps_threshold.min(q.eps_threshold);
    let small: Vec<f64> = grid.iter().copied().filter(|&e| e <= threshold).collect();
    let candidates = [(p.chart, &p.witness), (q.chart, &q.witness)];
    let common = candidates.iter().find(|(c, w)| {
        small
            .iter()
            .all(|&e| p.coords_in(atlas, *c, w, e).is_some() && q.coords_in(atlas, *c, w, e).is_some())
    });
    let Some(&(c, w)) = common else {
        return Err(Error::NotComparable("no chart contains both points for small ε".into()));
    };
    let sub = crate::asymptotic::EpsGrid::new(small.clone())
        .map_err(|_| Error::NotComparable("too few grid values below the witness threshold".into()))?;
    let dist = |e: f64| {
        let a = p.coords_in(atlas, c, w, e).unwrap_or_default();
        let b = q.coords_in(atlas, c, w, e).unwrap_or_default();
        a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
    };
    let fit = classify_scalar_net(dist, &sub, &settings.order)?;
    Ok((fit.is_negligible(), fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cocycles_and_partitions() {
        for atlas in builtin_manifolds() {
            assert!(atlas.cocycle_defect(24) < 1e-10, "{:?}", atlas.spec);
            assert!(atlas.check_partition(64).unwrap() < 1e-10, "{:?}", atlas.spec);
        }
    }

    #[test]
    fn circle_transitions() {
        let c = Atlas::circle();
        assert!((c.transition(0, 1, &[-1.0])[0] - (TAU - 1.0)).abs() < 1e-15);
        assert!((c.transition(0, 1, &[1.0])[0] - 1.0).abs() < 1e-15);
        let j = c.jacobian(0, 2, &[0.5]);
        // du/dt = ½ sec²(t/2)
        assert!((j[(0, 0)] - 0.5 / (0.25f64).cos().powi(2)).abs() < 1e-14);
        let back = c.transition(2, 0, &c.transition(0, 2, &[0.5]));
        assert!((back[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn euclidean_is_single_identity_chart() {
        let e = Atlas::euclidean(1);
        assert_eq!(e.len(), 1);
        assert_eq!(e.transition(0, 0, &[0.3]), vec![0.3]);
    }

    #[test]
    fn point_equivalence_examples() {
        let atlas = Atlas::euclidean(1);
        let s = Settings::default();
        let w = BoxDomain::interval(-1.0, 1.0);
        let p = GeneralizedPoint::new(|e| vec![e], 0, w.clone(), 1.0);
        let q = GeneralizedPoint::new(|e| vec![e + (-1.0 / e).exp()], 0, w.clone(), 1.0);
        let r = GeneralizedPoint::new(|e| vec![2.0 * e], 0, w.clone(), 1.0);
        assert!(point_equiv(&atlas, &p, &p, &s).unwrap().0);
        assert!(point_equiv(&atlas, &p, &q, &s).unwrap().0);
        let (eq, fit) = point_equiv(&atlas, &p, &r, &s).unwrap();
        assert!(!eq);
        assert!((fit.slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn point_equivalence_is_chart_independent_on_circle() {
        let atlas = Atlas::circle();
        let s = Settings::default();
        let theta0 = 1.0;
        let mk = |f: fn(f64) -> f64, chart: usize| {
            let y = atlas.charts[chart].forward(&[theta0]);
            let w = BoxDomain::interval(y[0] - 0.5, y[0] + 0.5);
            GeneralizedPoint::new(move |e| vec![theta0 + f(e)], chart, w, 1.0)
        };
        for chart in 0..3 {
            let p = mk(|e| e, chart);
            let q = mk(|e| e + (-1.0 / e).exp(), chart);
            let r = mk(|e| 2.0 * e, chart);
            assert!(point_equiv(&atlas, &p, &q, &s).unwrap().0);
            assert!(!point_equiv(&atlas, &p, &r, &s).unwrap().0);
        }
    }

    #[test]
    fn atlas_registry() {
        let a = Atlas::from_json(r#"{"name":"euclidean","dim":2}"#).unwrap();
        assert_eq!(a.dim(), 2);
        assert!(Atlas::from_json(r#"{"name":"sphere"}"#).is_err());
    }
}
