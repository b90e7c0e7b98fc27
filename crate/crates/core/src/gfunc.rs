//! Generalized functions on manifolds as coherent families of chart nets.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotic::{classify_scalar_net, AsymptoticFit, Verdict};
use crate::distribution::DistributionSpec;
use crate::domain::{sup_norm_on_box, BoxDomain};
use crate::embed::embed_rn;
use crate::error::{Error, Result};
use crate::estimate::{classify_net, fit_sups, NetFit, Settings};
use crate::jet::Jet;
use crate::manifold::{Atlas, GeneralizedPoint};
use crate::mollifier::Mollifier;
use crate::net::{map_grid, GeneralizedNumber, Net};
use crate::pairing::{associate_net, focus_breakpoints, AssociationVerdict, TestDensity};
use crate::quad::integrate_box;
use crate::smooth::{compose_jets, SmoothFn};

/// Half-width of the interval carrying a smooth function on a Euclidean
/// chart when it is handed to the embedding.
pub const LINE_SUPPORT: f64 = 8.0;

/// Uniform tolerance on the last sup of a Cᵏ-association residual.
pub const CK_TOLERANCE: f64 = 1e-6;

/// ε at which net members are probed for their derivative capability.
const PROBE_EPS: f64 = 0.0625;

/// Clearance from the excluded set of a chart used for overlap samples.
const OVERLAP_MARGIN: f64 = 0.05;

/// An element of `G(X)` given by one net per chart.
#[derive(Clone, Debug)]
pub struct GeneralizedFunction {
    atlas: Arc<Atlas>,
    nets: Vec<Net>,
}

impl GeneralizedFunction {
    pub fn new(atlas: Arc<Atlas>, nets: Vec<Net>) -> Result<GeneralizedFunction> {
        if nets.len() != atlas.len() {
            return Err(Error::AtlasMismatch);
        }
        for n in &nets {
            if n.dim() != atlas.dim() {
                return Err(Error::DimensionMismatch {
                    expected: atlas.dim(),
                    found: n.dim(),
                });
            }
        }
        Ok(GeneralizedFunction { atlas, nets })
    }

    /// A net on `ℝⁿ` as a generalized function on the Euclidean atlas.
    pub fn on_rn(net: Net) -> GeneralizedFunction {
        let atlas = Arc::new(Atlas::euclidean(net.dim()));
        GeneralizedFunction { atlas, nets: vec![net] }
    }

    /// Chart nets of a net of functions of the ambient parameters. The
    /// focus points are given in ambient parameters.
    pub fn from_ambient(atlas: Arc<Atlas>, ambient: Net) -> GeneralizedFunction {
        let n = atlas.dim();
        let nets = (0..atlas.len())
            .map(|c| {
                let chart = atlas.charts[c].clone();
                let focus = map_focus(&atlas, ambient.focus(), None, c);
                ambient
                    .map(move |f| {
                        let chart = chart.clone();
                        f.pullback(n, move |y| chart.inverse_jets(y))
                    })
                    .with_focus(focus)
            })
            .collect();
        GeneralizedFunction { atlas, nets }
    }

    pub fn atlas(&self) -> &Arc<Atlas> {
        &self.atlas
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn net(&self, chart: usize) -> &Net {
        &self.nets[chart]
    }

    pub fn dim(&self) -> usize {
        self.atlas.dim()
    }

    fn check_same(&self, other: &GeneralizedFunction) -> Result<()> {
        if Arc::ptr_eq(&self.atlas, &other.atlas) || self.atlas.same_as(&other.atlas) {
            Ok(())
        } else {
            Err(Error::AtlasMismatch)
        }
    }

    fn zip_with(&self, other: &GeneralizedFunction, op: fn(&Net, &Net) -> Net) -> Result<GeneralizedFunction> {
        self.check_same(other)?;
        Ok(GeneralizedFunction {
            atlas: self.atlas.clone(),
            nets: self.nets.iter().zip(&other.nets).map(|(a, b)| op(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &GeneralizedFunction) -> Result<GeneralizedFunction> {
        self.zip_with(other, Net::add)
    }

    pub fn sub(&self, other: &GeneralizedFunction) -> Result<GeneralizedFunction> {
        self.zip_with(other, Net::sub)
    }

    pub fn mul(&self, other: &GeneralizedFunction) -> Result<GeneralizedFunction> {
        self.zip_with(other, Net::mul)
    }

    pub fn scale(&self, s: f64) -> GeneralizedFunction {
        self.map_nets(|n| n.scale(s))
    }

    pub fn map_nets<F: Fn(&Net) -> Net>(&self, f: F) -> GeneralizedFunction {
        GeneralizedFunction {
            atlas: self.atlas.clone(),
            nets: self.nets.iter().map(f).collect(),
        }
    }

    /// Transformation-law residuals `U_a − U_b ∘ t_ab` on overlap samples.
    pub fn coherence(&self, settings: &Settings) -> Result<CoherenceReport> {
        let mut pairs = Vec::new();
        for (a, b) in self.atlas.overlapping_pairs(settings.overlap_lattice_for(self.dim()), OVERLAP_MARGIN) {
            if a > b {
                continue;
            }
            let (ua, ub) = (self.nets[a].clone(), self.nets[b].clone());
            let atlas = self.atlas.clone();
            let r = overlap_residual(&self.atlas, a, b, self.nets[a].focus(), settings, move |e| {
                let (fa, fb) = (ua.at(e), ub.at(e));
                let atlas = atlas.clone();
                Box::new(move |y: &[f64]| {
                    let va = fa.eval(y);
                    let vb = fb.eval(&atlas.transition(a, b, y));
                    ((va - vb).abs(), va.abs().max(vb.abs()))
                })
            })?;
            pairs.push(r);
        }
        Ok(CoherenceReport::from_pairs(pairs))
    }
}

/// Maps focus points to chart `c` coordinates. With `from = Some(j)` they
/// are chart `j` coordinates, otherwise ambient parameters.
fn map_focus(atlas: &Atlas, focus: &[Vec<f64>], from: Option<usize>, c: usize) -> Vec<Vec<f64>> {
    focus
        .iter()
        .map(|y| match from {
            Some(j) => atlas.charts[j].inverse(y),
            None => y.clone(),
        })
        .filter(|p| atlas.charts[c].contains(p, 0.0))
        .map(|p| atlas.charts[c].forward(&p))
        .collect()
}

fn overlap_count(dim: usize) -> usize {
    Settings::default().overlap_lattice_for(dim)
}

/// Residual of one chart pair over the grid.
#[derive(Clone, Debug, Serialize)]
pub struct OverlapResidual {
    pub from: usize,
    pub to: usize,
    pub samples: usize,
    pub sups: Vec<f64>,
    pub reference: f64,
    pub fit: AsymptoticFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoherenceReport {
    pub pairs: Vec<OverlapResidual>,
    pub coherent: bool,
    pub worst_slope: f64,
}

impl CoherenceReport {
    pub fn from_pairs(pairs: Vec<OverlapResidual>) -> CoherenceReport {
        let coherent = pairs.iter().all(|p| p.fit.is_negligible());
        let worst_slope = pairs.iter().map(|p| p.fit.slope).fold(f64::INFINITY, f64::min);
        CoherenceReport {
            pairs,
            coherent,
            worst_slope,
        }
    }
}

type PointResidual = Box<dyn Fn(&[f64]) -> (f64, f64)>;

/// Sup over overlap samples (chart `a` coordinates) of a residual, fitted
/// with a roundoff floor relative to the largest compared magnitude.
///
/// `residual(ε)` returns a closure giving `(|residual|, magnitude)` at a
/// point.
pub fn overlap_residual<F>(atlas: &Atlas, a: usize, b: usize, focus_a: &[Vec<f64>], settings: &Settings, residual: F) -> Result<OverlapResidual>
where
    F: Fn(f64) -> PointResidual + Sync + Send,
{
    let base = atlas.overlap_samples(a, b, settings.overlap_lattice_for(atlas.dim()), OVERLAP_MARGIN);
    let wa = atlas.work_box(a);
    let wb = atlas.work_box(b);
    let grid = settings.grid.values();
    let rows = map_grid(grid, settings.parallel, |e| {
        let r = residual(e);
        let mut pts = base.clone();
        for y in crate::estimate::focus_points(focus_a, e, &wa) {
            let p = atlas.charts[a].inverse(&y);
            if atlas.charts[b].contains(&p, OVERLAP_MARGIN) && wb.contains(&atlas.transition(a, b, &y)) {
                pts.push(y);
            }
        }
        let mut sup = 0.0f64;
        let mut mag = 0.0f64;
        for y in &pts {
            let (d, m) = r(y);
            sup = if d.is_nan() { f64::NAN } else { sup.max(d) };
            mag = mag.max(m);
        }
        (sup, mag)
    });
    let sups: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let reference = rows.iter().map(|r| r.1).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let fit = fit_sups(grid, &sups, &settings.order, Some(settings.noise_rel * reference))?;
    Ok(OverlapResidual {
        from: a,
        to: b,
        samples: base.len(),
        sups,
        reference,
        fit,
    })
}

/// `σ(f)` from chart-local representatives, after checking that they agree
/// on overlaps.
pub fn sigma_embed(atlas: Arc<Atlas>, f: Vec<SmoothFn>) -> Result<GeneralizedFunction> {
    if f.len() != atlas.len() {
        return Err(Error::AtlasMismatch);
    }
    for (a, b) in atlas.overlapping_pairs(overlap_count(atlas.dim()), OVERLAP_MARGIN) {
        for y in atlas.overlap_samples(a, b, overlap_count(atlas.dim()), OVERLAP_MARGIN) {
            let va = f[a].eval(&y);
            let vb = f[b].eval(&atlas.transition(a, b, &y));
            if (va - vb).abs() > 1e-10 * (1.0 + va.abs()) {
                return Err(Error::CoherenceFailure(format!(
                    "charts {a} and {b} disagree at {y:?}: {va} vs {vb}"
                )));
            }
        }
    }
    let nets = f.into_iter().map(Net::constant).collect();
    GeneralizedFunction::new(atlas, nets)
}

/// `σ(f)` for a function of the ambient parameters.
pub fn sigma_ambient(atlas: Arc<Atlas>, f: &SmoothFn) -> GeneralizedFunction {
    GeneralizedFunction::from_ambient(atlas, Net::constant(f.clone()))
}

/// Chart-local representatives of an ambient function.
pub fn chart_functions(atlas: &Atlas, f: &SmoothFn) -> Vec<SmoothFn> {
    (0..atlas.len()).map(|c| atlas.in_chart(c, f)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ChartFit {
    pub chart: usize,
    pub chart_name: String,
    pub domain: BoxDomain,
    #[serde(flatten)]
    pub fit: NetFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassifyReport {
    pub rows: Vec<ChartFit>,
    pub summary: Verdict,
    /// Negligibility was concluded from order-0 sups together with
    /// moderateness at the requested orders.
    pub order0_shortcut: bool,
}

/// Sup-norm fits per chart and multi-index on the chart work boxes.
pub fn classify(u: &GeneralizedFunction, orders: &[Vec<u8>], settings: &Settings) -> Result<ClassifyReport> {
    let boxes: Vec<BoxDomain> = (0..u.atlas.len()).map(|c| u.atlas.work_box(c)).collect();
    classify_on(u, orders, &boxes, settings, None)
}

/// As [`classify`] on explicit boxes, one per chart. With `reference`
/// the net is treated as a residual of quantities of that size.
pub fn classify_on(
    u: &GeneralizedFunction,
    orders: &[Vec<u8>],
    boxes: &[BoxDomain],
    settings: &Settings,
    reference: Option<f64>,
) -> Result<ClassifyReport> {
    if boxes.len() != u.atlas.len() {
        return Err(Error::AtlasMismatch);
    }
    let mut rows = Vec::new();
    for (c, b) in boxes.iter().enumerate() {
        for alpha in orders {
            let fit = classify_net(&u.nets[c], alpha, b, settings, reference)?;
            rows.push(ChartFit {
                chart: c,
                chart_name: u.atlas.charts[c].name.clone(),
                domain: b.clone(),
                fit,
            });
        }
    }
    let (summary, order0_shortcut) = summarize(&rows, settings.order.m_max);
    Ok(ClassifyReport {
        rows,
        summary,
        order0_shortcut,
    })
}

fn summarize(rows: &[ChartFit], m_max: i32) -> (Verdict, bool) {
    if rows.iter().any(|r| r.fit.fit.verdict == Verdict::Divergent) {
        return (Verdict::Divergent, false);
    }
    if rows.iter().all(|r| r.fit.fit.is_negligible()) {
        return (Verdict::Negligible { m_max }, false);
    }
    let order0: Vec<&ChartFit> = rows.iter().filter(|r| r.fit.alpha.iter().all(|&a| a == 0)).collect();
    if !order0.is_empty() && order0.iter().all(|r| r.fit.fit.is_negligible()) {
        return (Verdict::Negligible { m_max }, true);
    }
    let n = rows.iter().filter_map(|r| r.fit.fit.verdict.order()).max().unwrap_or(0);
    (Verdict::Moderate { n }, false)
}

/// `L_ξ U` chartwise, with `xi[c]` the components of `ξ` in chart `c`.
pub fn lie_derivative(u: &GeneralizedFunction, xi: &[Vec<SmoothFn>]) -> Result<GeneralizedFunction> {
    if xi.len() != u.atlas.len() {
        return Err(Error::AtlasMismatch);
    }
    let mut nets = Vec::with_capacity(xi.len());
    for (c, comps) in xi.iter().enumerate() {
        if comps.len() != u.dim() {
            return Err(Error::DimensionMismatch {
                expected: u.dim(),
                found: comps.len(),
            });
        }
        let available = u.nets[c].at(PROBE_EPS).max_order();
        if available < 1 {
            return Err(Error::DerivativeUnavailable { requested: 1, available });
        }
        let comps = comps.clone();
        nets.push(u.nets[c].map(move |f| {
            let mut acc = SmoothFn::zero(f.dim());
            for (i, x) in comps.iter().enumerate() {
                acc = acc.add(&x.mul(&f.d(i)));
            }
            acc
        }));
    }
    GeneralizedFunction::new(u.atlas.clone(), nets)
}

/// `ε ↦ u_ε(p_ε)` in the witness chart of `p`.
pub fn point_value(u: &GeneralizedFunction, p: &GeneralizedPoint, settings: &Settings) -> Result<GeneralizedNumber> {
    if p.chart >= u.atlas.len() {
        return Err(Error::NotComparable(format!("witness chart {} is not in the atlas", p.chart)));
    }
    if !p.witness_holds(&u.atlas, settings.grid.values()) {
        return Err(Error::NotComparable("point leaves its witness box on the grid".into()));
    }
    let net = u.nets[p.chart].clone();
    let atlas = u.atlas.clone();
    let p = p.clone();
    Ok(GeneralizedNumber::new(move |e| {
        let y = atlas.charts[p.chart].forward(&p.at(e));
        net.at(e).eval(&y)
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct PointProbe {
    pub kind: String,
    /// Ambient parameters of the point at ε = 0 (the drift centre).
    pub base: Vec<f64>,
    pub chart: usize,
    pub values: Vec<f64>,
    pub fit: AsymptoticFit,
    pub negligible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroTestReport {
    pub tested: usize,
    pub probes: Vec<PointProbe>,
    /// Indices into `probes` of non-negligible point values.
    pub witnesses: Vec<usize>,
    pub nonzero_found: bool,
    pub note: String,
}

/// The chart in which `p` has the largest clearance.
fn best_chart(atlas: &Atlas, p: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for c in 0..atlas.len() {
        let y = atlas.charts[c].forward(p);
        let wb = atlas.work_box(c);
        // distance to the work box boundary in chart coordinates
        let d = y
            .iter()
            .zip(wb.lo.iter().zip(&wb.hi))
            .map(|(v, (l, h))| (v - l).min(h - v))
            .fold(f64::INFINITY, f64::min);
        if atlas.charts[c].contains(p, 0.0) && d > best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// One-sided test of `U = 0` through point values: classical points,
/// points drifting at rate ε (also from the focus points of `U`), and
/// oscillating drifts. Any non-negligible value is a witness of `U ≠ 0`.
pub fn zero_test_by_points(u: &GeneralizedFunction, count: usize, seed: u64, settings: &Settings) -> Result<ZeroTestReport> {
    let atlas = &u.atlas;
    let n = atlas.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut focus: Vec<Vec<f64>> = Vec::new();
    for (c, net) in u.nets.iter().enumerate() {
        for y in net.focus() {
            focus.push(atlas.charts[c].inverse(y));
        }
    }
    let wb0 = atlas.work_box(0);
    let random_base = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let y: Vec<f64> = wb0.lo.iter().zip(&wb0.hi).map(|(l, h)| rng.gen_range(*l..*h)).collect();
        atlas.charts[0].inverse(&y)
    };
    let mut probes = Vec::new();
    for i in 0..count {
        let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (kind, base, drift): (&str, Vec<f64>, fn(f64) -> f64) = match i % 3 {
            0 if i / 3 < focus.len() => ("drifting", focus[i / 3].clone(), |e| e),
            0 | 1 => ("classical", random_base(&mut rng), |_| 0.0),
            _ => ("oscillating", random_base(&mut rng), |e| e * (1.0 / e).sin()),
        };
        let chart = best_chart(atlas, &base);
        let y0 = atlas.charts[chart].forward(&base);
        let witness = BoxDomain::new(y0.iter().map(|v| v - 0.25).collect(), y0.iter().map(|v| v + 0.25).collect())?;
        let b2 = base.clone();
        let point = GeneralizedPoint::new(
            move |e| b2.iter().zip(&dir).map(|(b, d)| b + d * drift(e)).collect(),
            chart,
            witness,
            settings.grid.values()[0],
        );
        let value = match point_value(u, &point, settings) {
            Ok(v) => v,
            Err(Error::NotComparable(_)) => continue,
            Err(e) => return Err(e),
        };
        let fit = classify_scalar_net(|e| value.value(e), &settings.grid, &settings.order)?;
        probes.push(PointProbe {
            kind: kind.into(),
            base,
            chart,
            values: settings.grid.values().iter().map(|&e| value.value(e)).collect(),
            negligible: fit.is_negligible(),
            fit,
        });
    }
    let witnesses: Vec<usize> = probes.iter().enumerate().filter(|(_, p)| !p.negligible).map(|(i, _)| i).collect();
    Ok(ZeroTestReport {
        tested: probes.len(),
        nonzero_found: !witnesses.is_empty(),
        witnesses,
        probes,
        note: "one-sided: negligible values at finitely many points do not prove U = 0".into(),
    })
}

/// Seeded test densities, `count` per chart, inside the chart work boxes.
pub fn density_suite(atlas: &Atlas, count: usize, seed: u64) -> Vec<TestDensity> {
    (0..atlas.len())
        .flat_map(|c| TestDensity::suite(c, &atlas.work_box(c), count, seed))
        .collect()
}

/// Chartwise association: each density pairs with the net of its chart,
/// against the chart-local target `targets[chart]` (zero if `None`).
pub fn associate(
    u: &GeneralizedFunction,
    targets: Option<&[DistributionSpec]>,
    densities: &[TestDensity],
    settings: &Settings,
) -> Result<AssociationVerdict> {
    if let Some(t) = targets {
        if t.len() != u.atlas.len() {
            return Err(Error::AtlasMismatch);
        }
    }
    let mut parts = Vec::new();
    for c in 0..u.atlas.len() {
        let ds: Vec<TestDensity> = densities.iter().filter(|d| d.chart == c).cloned().collect();
        if ds.is_empty() {
            continue;
        }
        parts.push(associate_net(&u.nets[c], targets.map(|t| &t[c]), &ds, settings)?);
    }
    let shown = targets.and_then(|t| t.iter().find(|d| !d.is_zero()));
    Ok(AssociationVerdict::combine(parts, shown, settings.pairing_tol))
}

#[derive(Clone, Debug, Serialize)]
pub struct CkReport {
    pub k: usize,
    pub rows: Vec<ChartFit>,
    pub tolerance: f64,
    pub associated: bool,
}

/// All multi-indices in `dim` variables with `|α| ≤ k`.
pub fn multi_indices_up_to(dim: usize, k: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8; dim]];
    let mut frontier = out.clone();
    for _ in 0..k {
        let mut next = Vec::new();
        for a in &frontier {
            for i in 0..dim {
                let mut b = a.clone();
                b[i] += 1;
                if !next.contains(&b) {
                    next.push(b);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// `U ≈_k f`: sups of `∂^α(u_ε − f)` for `|α| ≤ k` on every chart box must
/// decay (positive slope) and end below [`CK_TOLERANCE`].
pub fn ck_associate(u: &GeneralizedFunction, f: &[SmoothFn], k: usize, settings: &Settings) -> Result<CkReport> {
    let boxes: Vec<BoxDomain> = (0..u.atlas.len()).map(|c| u.atlas.work_box(c)).collect();
    ck_associate_on(u, f, k, &boxes, settings)
}

pub fn ck_associate_on(u: &GeneralizedFunction, f: &[SmoothFn], k: usize, boxes: &[BoxDomain], settings: &Settings) -> Result<CkReport> {
    if f.len() != u.atlas.len() || boxes.len() != u.atlas.len() {
        return Err(Error::AtlasMismatch);
    }
    let mut rows = Vec::new();
    let mut ok = true;
    for c in 0..u.atlas.len() {
        let diff = u.nets[c].sub(&Net::constant(f[c].clone()));
        for alpha in multi_indices_up_to(u.dim(), k) {
            let reference = sup_norm_on_box(&f[c], &alpha, &boxes[c], settings.lattice_for(u.dim()))?.max(1.0);
            let fit = classify_net(&diff, &alpha, &boxes[c], settings, Some(reference))?;
            let last = *fit.sups.last().unwrap_or(&f64::NAN);
            ok &= fit.fit.slope > 0.0 && last <= CK_TOLERANCE;
            rows.push(ChartFit {
                chart: c,
                chart_name: u.atlas.charts[c].name.clone(),
                domain: boxes[c].clone(),
                fit,
            });
        }
    }
    Ok(CkReport {
        k,
        rows,
        tolerance: CK_TOLERANCE,
        associated: ok,
    })
}

/// `ε ↦ ∫_K u_ε μ` in chart `chart`, where `mu` is the density factor in
/// that chart. The grid values are computed eagerly so that quadrature
/// failures surface here.
pub fn integrate(u: &GeneralizedFunction, chart: usize, mu: &SmoothFn, k: &BoxDomain, settings: &Settings) -> Result<GeneralizedNumber> {
    if chart >= u.atlas.len() {
        return Err(Error::AtlasMismatch);
    }
    for corner in [&k.lo, &k.hi] {
        if !u.atlas.charts[chart].contains(&u.atlas.charts[chart].inverse(corner), 0.0) {
            return Err(Error::DomainError("integration box leaves the chart".into()));
        }
    }
    let net = u.nets[chart].clone();
    let mu = mu.clone();
    let k = k.clone();
    let opts = settings.quad;
    let eval = move |e: f64| -> Result<f64> {
        let f = net.at(e);
        let bps = focus_breakpoints(net.focus(), e, k.dim(), 256.0);
        Ok(integrate_box(|x| f.eval(x) * mu.eval(x), &k, &bps, &opts)?.value)
    };
    let mut cache = HashMap::new();
    for &e in settings.grid.values() {
        cache.insert(e.to_bits(), eval(e)?);
    }
    Ok(GeneralizedNumber::new(move |e| match cache.get(&e.to_bits()) {
        Some(v) => *v,
        None => eval(e).unwrap_or(f64::NAN),
    }))
}

/// Fit of `|r_ε − target|` with a roundoff floor relative to `reference`.
pub fn number_residual_fit(r: &GeneralizedNumber, target: f64, reference: f64, settings: &Settings) -> Result<AsymptoticFit> {
    let grid = settings.grid.values();
    let d: Vec<f64> = grid.iter().map(|&e| (r.value(e) - target).abs()).collect();
    fit_sups(grid, &d, &settings.order, Some(settings.noise_rel * reference))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductMode {
    /// `U = σ(f)`.
    Sigma,
    /// `U ≈_∞ f`, tested up to order three.
    CInfinity,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductReport {
    pub mode: ProductMode,
    pub hypotheses: Vec<HypothesisCheck>,
    pub hypotheses_met: bool,
    pub target: DistributionSpec,
    pub association: AssociationVerdict,
    /// Hypotheses hold and `UV ≈ f w`.
    pub consistent: bool,
}

/// Checks the hypotheses of the product rule for association (`U` equal
/// or `C^∞`-associated to `f`, `V ≈ w`) and whether `UV ≈ f w`. Both
/// outcomes are reported; failing hypotheses are not hidden.
pub fn product_consistency_check(
    u: &GeneralizedFunction,
    v: &GeneralizedFunction,
    f: &SmoothFn,
    w: &DistributionSpec,
    mode: ProductMode,
    densities: &[TestDensity],
    settings: &Settings,
) -> Result<ProductReport> {
    u.check_same(v)?;
    if u.atlas.len() != 1 {
        return Err(Error::UnsupportedDistribution("product check runs on a Euclidean atlas".into()));
    }
    let fs = vec![f.clone()];
    let mut hypotheses = Vec::new();
    match mode {
        ProductMode::Sigma => {
            let d = u.sub(&sigma_embed(u.atlas.clone(), fs.clone())?)?;
            let reference = sup_norm_on_box(f, &vec![0; u.dim()], &u.atlas.work_box(0), settings.lattice_for(u.dim()))?.max(1.0);
            let rep = classify_on(&d, &[vec![0; u.dim()]], &[u.atlas.work_box(0)], settings, Some(reference))?;
            hypotheses.push(HypothesisCheck {
                name: "U = sigma(f)".into(),
                holds: rep.summary.is_negligible(),
                detail: format!("order-0 residual slope {}", rep.rows[0].fit.fit.slope),
            });
        }
        ProductMode::CInfinity => {
            let k = u.nets[0].at(settings.grid.values()[0]).max_order().min(3);
            let rep = ck_associate(u, &fs, k, settings)?;
            let worst = rep.rows.iter().map(|r| r.fit.fit.slope).fold(f64::INFINITY, f64::min);
            hypotheses.push(HypothesisCheck {
                name: format!("U ~C^{k} f"),
                holds: rep.associated,
                detail: format!("worst residual slope {worst}"),
            });
        }
    }
    let vw = associate(v, Some(std::slice::from_ref(w)), densities, settings)?;
    hypotheses.push(HypothesisCheck {
        name: "V ~ w".into(),
        holds: vw.is_associated(),
        detail: format!("max deviation {:e}", vw.max_deviation()),
    });
    let target = w.mul_smooth(f)?;
    let association = associate(&u.mul(v)?, Some(std::slice::from_ref(&target)), densities, settings)?;
    let hypotheses_met = hypotheses.iter().all(|h| h.holds);
    Ok(ProductReport {
        mode,
        consistent: hypotheses_met && association.is_associated(),
        hypotheses,
        hypotheses_met,
        target,
        association,
    })
}

/// Chart-local representatives of a point mass at the ambient point `p`:
/// in chart `j` the Dirac measure at `ψ_j(p)` with weight `|det Dψ_j(p)|`,
/// so that all representatives act alike on densities.
pub fn dirac_family(atlas: &Atlas, p: &[f64], weight: f64) -> Vec<DistributionSpec> {
    let n = atlas.dim();
    (0..atlas.len())
        .map(|j| {
            let chart = &atlas.charts[j];
            if !chart.contains(p, 0.0) {
                return DistributionSpec::zero(n);
            }
            let jets = chart.forward_jets(&Jet::variables(p, 1));
            let jac = nalgebra::DMatrix::from_fn(n, n, |r, c| {
                let mut alpha = vec![0u8; n];
                alpha[c] = 1;
                jets[r].derivative(&alpha)
            });
            let loc: Vec<f64> = jets.iter().map(Jet::value).collect();
            DistributionSpec::dirac(loc, vec![0; n], weight * jac.determinant().abs())
        })
        .collect()
}

/// Chart-local representatives of a smooth function of the ambient angle
/// on a one-dimensional atlas. Charts whose bump vanishes get zero.
pub fn function_family(atlas: &Atlas, f: &SmoothFn) -> Result<Vec<DistributionSpec>> {
    if atlas.dim() != 1 {
        return Err(Error::UnsupportedDistribution("regular parts are one-dimensional".into()));
    }
    let lattice = atlas.ambient_lattice(256);
    (0..atlas.len())
        .map(|j| {
            if lattice.iter().all(|p| atlas.pou.chi[j].eval(p) == 0.0) {
                return Ok(DistributionSpec::zero(1));
            }
            let local = atlas.in_chart(j, f);
            let (a, b) = match atlas.charts[j].factors[0] {
                crate::manifold::ChartFactor::Line => (-LINE_SUPPORT, LINE_SUPPORT),
                crate::manifold::ChartFactor::Angle { offset } => (offset, offset + std::f64::consts::TAU),
                crate::manifold::ChartFactor::Stereo => {
                    return Err(Error::UnsupportedDistribution("stereographic chart carries a bump".into()))
                }
            };
            Ok(DistributionSpec::smooth_on(local, a, b))
        })
        .collect()
}

/// The atlas embedding `Σ_j ζ_j · (((χ_j∘ψ_j^{−1}) u_j) ∗ ρ_ε) ∘ ψ_j`, with
/// `family[j]` the representative of `u` in chart `j`.
pub fn embed_manifold(atlas: Arc<Atlas>, family: &[DistributionSpec], rho: &Mollifier) -> Result<GeneralizedFunction> {
    if family.len() != atlas.len() {
        return Err(Error::PartitionMismatch(format!(
            "{} chart representatives for {} charts",
            family.len(),
            atlas.len()
        )));
    }
    atlas.check_partition(match atlas.dim() {
        1 => 256,
        2 => 48,
        _ => 12,
    })?;
    let n = atlas.dim();
    let lattice = atlas.ambient_lattice(64);
    // (chart j, net of the mollified localized representative)
    let mut terms: Vec<(usize, Net)> = Vec::new();
    for (j, w) in family.iter().enumerate() {
        if w.is_zero() || lattice.iter().all(|p| atlas.pou.chi[j].eval(p) == 0.0) {
            continue;
        }
        let chi = atlas.in_chart(j, &atlas.pou.chi[j]);
        let local = w.mul_smooth(&chi)?;
        let net = embed_rn(&local, rho)?;
        let focus = local.singular_points();
        terms.push((j, net.with_focus(focus)));
    }
    let max_order = terms
        .iter()
        .map(|(_, net)| net.at(PROBE_EPS).max_order())
        .min()
        .unwrap_or(crate::smooth::UNLIMITED);
    let mut nets = Vec::with_capacity(atlas.len());
    for alpha in 0..atlas.len() {
        let mut focus = Vec::new();
        for (j, net) in &terms {
            focus.extend(map_focus(&atlas, net.focus(), Some(*j), alpha));
        }
        let atlas2 = atlas.clone();
        let terms2 = terms.clone();
        nets.push(
            Net::new(n, move |e| {
                let members: Vec<(usize, SmoothFn)> = terms2.iter().map(|(j, net)| (*j, net.at(e))).collect();
                let atlas = atlas2.clone();
                SmoothFn::new(n, max_order, move |y, k| {
                    let p = atlas.charts[alpha].inverse_jets(&Jet::variables(y, k));
                    let mut acc = Jet::zero(n, k);
                    for (j, member) in &members {
                        let z = compose_jets(&atlas.pou.zeta[*j], &p);
                        if z.is_zero() {
                            continue;
                        }
                        let yj = atlas.charts[*j].forward_jets(&p);
                        acc.add_assign(&z.mul(&compose_jets(member, &yj)));
                    }
                    acc
                })
            })
            .with_focus(focus),
        );
    }
    GeneralizedFunction::new(atlas, nets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mollifier::{build_mollifier, fourier_bump, MollifierKind};

    fn x() -> SmoothFn {
        SmoothFn::coordinate(1, 0)
    }

    #[test]
    fn sigma_of_one_is_moderate_zero() {
        let u = sigma_embed(Arc::new(Atlas::euclidean(1)), vec![SmoothFn::constant(1, 1.0)]).unwrap();
        let s = Settings::default().with_lattice(21);
        let r = classify(&u, &[vec![0], vec![1]], &s).unwrap();
        assert_eq!(r.rows[0].fit.fit.verdict, Verdict::Moderate { n: 0 });
        // derivative of a constant is exactly zero
        assert!(r.rows[1].fit.fit.is_negligible());
    }

    #[test]
    fn sigma_is_an_algebra_morphism() {
        let a = Arc::new(Atlas::circle());
        let f = x().sin();
        let g = x().cos().add_scalar(2.0);
        let lhs = sigma_ambient(a.clone(), &f).mul(&sigma_ambient(a.clone(), &g)).unwrap();
        let rhs = sigma_ambient(a.clone(), &f.mul(&g));
        for c in 0..3 {
            for &y in &[0.1, 0.7, -1.3] {
                assert_eq!(lhs.net(c).at(0.01).eval(&[y]), rhs.net(c).at(0.01).eval(&[y]));
            }
        }
    }

    #[test]
    fn sigma_sin_is_coherent_on_circle() {
        let a = Arc::new(Atlas::circle());
        let u = sigma_ambient(a, &x().sin());
        let rep = u.coherence(&Settings::default()).unwrap();
        assert!(rep.coherent);
        assert!(!rep.pairs.is_empty());
    }

    #[test]
    fn incoherent_sigma_is_rejected() {
        let a = Arc::new(Atlas::circle());
        let f = vec![x(), x(), x()];
        assert!(matches!(sigma_embed(a, f), Err(Error::CoherenceFailure(_))));
    }

    #[test]
    fn classify_delta_embedding() {
        let rho = fourier_bump();
        let u = GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::delta(1), &rho).unwrap());
        let r = classify(&u, &[vec![0], vec![1]], &Settings::default()).unwrap();
        assert!((r.rows[0].fit.fit.slope + 1.0).abs() < 0.05);
        assert!((r.rows[1].fit.fit.slope + 2.0).abs() < 0.05);
        assert_eq!(r.summary, Verdict::Moderate { n: 2 });

        let v = u.map_nets(|n| n.scale_by(|e| e));
        let r = classify(&v, &[vec![0]], &Settings::default()).unwrap();
        assert!(r.rows[0].fit.fit.slope.abs() < 0.05);
        assert!(!r.summary.is_negligible());
    }

    #[test]
    fn algebra_checks_atlas() {
        let a = sigma_ambient(Arc::new(Atlas::circle()), &x().sin());
        let b = GeneralizedFunction::on_rn(Net::zero(1));
        assert!(matches!(a.add(&b), Err(Error::AtlasMismatch)));
    }

    #[test]
    fn x_times_delta_point_values() {
        let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
        let d = GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::delta(1), &rho).unwrap());
        let xs = sigma_embed(d.atlas().clone(), vec![x()]).unwrap();
        let f = xs.mul(&d).unwrap();
        let s = Settings::default();
        let atlas = f.atlas().clone();
        for &p in &[0.3, -0.7] {
            let v = point_value(&f, &GeneralizedPoint::classical(&atlas, 0, vec![p]), &s).unwrap();
            assert!(v.fit().unwrap().is_negligible());
        }
        let drift = GeneralizedPoint::new(|e| vec![e], 0, BoxDomain::interval(-1.0, 1.0), 1.0);
        let v = point_value(&f, &drift, &s).unwrap();
        assert!((v.value(1e-4) - rho.value(1.0)).abs() < 1e-12);
        assert!(!v.fit().unwrap().is_negligible());

        let zt = zero_test_by_points(&f, 9, 3, &s).unwrap();
        assert!(zt.nonzero_found);
        let zero = GeneralizedFunction::on_rn(Net::zero(1));
        assert!(!zero_test_by_points(&zero, 9, 3, &s).unwrap().nonzero_found);
    }

    #[test]
    fn heaviside_derivative_associates_to_delta() {
        let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
        let h = GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::heaviside(1.0), &rho).unwrap());
        let dh = lie_derivative(&h, &[vec![SmoothFn::constant(1, 1.0)]]).unwrap();
        let dens = density_suite(h.atlas(), 5, 2);
        let v = associate(&dh, Some(&[DistributionSpec::delta(1)]), &dens, &Settings::default()).unwrap();
        assert!(v.is_associated(), "{}", v.max_deviation());
    }

    #[test]
    fn ck_association() {
        let s = Settings::default().with_lattice(41);
        let rho = fourier_bump();
        let f = x().sin();
        let u = GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::smooth_on(f.clone(), -LINE_SUPPORT, LINE_SUPPORT), &rho).unwrap());
        let r = ck_associate(&u, std::slice::from_ref(&f), 3, &s).unwrap();
        assert!(r.associated, "{:?}", r.rows.iter().map(|r| r.fit.fit.slope).collect::<Vec<_>>());
        let d = GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::delta(1), &rho).unwrap());
        assert!(!ck_associate(&d, &[SmoothFn::zero(1)], 0, &s).unwrap().associated);
    }

    #[test]
    fn integral_of_delta_is_one() {
        let rho = fourier_bump();
        let d = GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::delta(1), &rho).unwrap());
        let s = Settings::default();
        let k = BoxDomain::interval(-8.0, 8.0);
        let i = integrate(&d, 0, &SmoothFn::constant(1, 1.0), &k, &s).unwrap();
        let fit = number_residual_fit(&i, 1.0, 1.0, &s).unwrap();
        assert!(fit.is_negligible(), "{:?}", fit);
    }

    #[test]
    fn circle_embedding_of_sin_matches_sigma() {
        let a = Arc::new(Atlas::circle());
        let f = x().sin();
        let rho = fourier_bump();
        let u = embed_manifold(a.clone(), &function_family(&a, &f).unwrap(), &rho).unwrap();
        let d = u.sub(&sigma_ambient(a.clone(), &f)).unwrap();
        let s = Settings::default().with_lattice(41);
        let r = classify_on(&d, &[vec![0]], &(0..3).map(|c| a.work_box(c)).collect::<Vec<_>>(), &s, Some(1.0)).unwrap();
        for row in &r.rows {
            assert!(row.fit.fit.slope >= 5.75, "{} {:?}", row.chart_name, row.fit.sups);
        }
    }

    #[test]
    fn circle_dirac_associates_to_point_mass() {
        let a = Arc::new(Atlas::circle());
        let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
        let theta0 = 2.5;
        let fam = dirac_family(&a, &[theta0], 1.0);
        let u = embed_manifold(a.clone(), &fam, &rho).unwrap();
        let dens = density_suite(&a, 2, 5);
        let v = associate(&u, Some(&fam), &dens, &Settings::default()).unwrap();
        assert!(v.is_associated(), "{}", v.max_deviation());
        assert!(u.coherence(&Settings::default()).unwrap().coherent);
        let z = embed_manifold(a.clone(), &vec![DistributionSpec::zero(1); 3], &rho).unwrap();
        assert_eq!(z.net(0).at(0.01).eval(&[0.3]), 0.0);
    }

    #[test]
    fn product_rule_and_counterexample() {
        let rho = build_mollifier(MollifierKind::GaussPoly { m: 1 }).unwrap();
        let s = Settings::default();
        let atlas = Arc::new(Atlas::euclidean(1));
        let dens = density_suite(&atlas, 3, 9);
        let dp = GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::dirac(vec![0.0], vec![1], 1.0), &rho).unwrap());
        let xs = sigma_embed(atlas.clone(), vec![x()]).unwrap();
        let w = DistributionSpec::dirac(vec![0.0], vec![1], 1.0);
        let rep = product_consistency_check(&xs, &dp, &x(), &w, ProductMode::Sigma, &dens, &s).unwrap();
        assert!(rep.consistent, "{:?}", rep.hypotheses);

        let r2 = rho.clone();
        let u = GeneralizedFunction::on_rn(Net::new(1, move |e| {
            let r = r2.clone();
            SmoothFn::univariate(6, move |x, k| r.scaled(e).taylor(x, 0, k).iter().map(|c| c * e).collect())
        }));
        let v = GeneralizedFunction::on_rn(embed_rn(&DistributionSpec::delta(1), &rho).unwrap());
        let rep = product_consistency_check(&u, &v, &SmoothFn::zero(1), &DistributionSpec::delta(1), ProductMode::CInfinity, &dens, &s).unwrap();
        assert!(!rep.hypotheses_met);
        assert!(!rep.association.is_associated());
    }

    #[test]
    fn multi_indices() {
        assert_eq!(multi_indices_up_to(2, 2).len(), 6);
        assert_eq!(multi_indices_up_to(1, 3).len(), 4);
    }
}
