//! Asymptotic order estimation over a discretized regularization parameter.
//!
//! Moderateness (`O(ε^{−N})`) and negligibility (`O(ε^m)` for every `m`) are
//! judged from a least-squares slope of `log|magnitude|` against `log ε`.
//! Negligibility is only ever certified up to a finite order `m_max`.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Strictly decreasing regularization parameters in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EpsGrid(Vec<f64>);

impl EpsGrid {
    pub fn new(values: Vec<f64>) -> Result<EpsGrid> {
        if values.len() < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidGrid(format!("value {v} outside (0, 1]")));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidGrid("values must be strictly decreasing".into()));
        }
        Ok(EpsGrid(values))
    }

    /// `ε_k = 2^{−k}` for `k = k_min..=k_max`.
    pub fn dyadic(k_min: u32, k_max: u32) -> Result<EpsGrid> {
        if k_max < k_min {
            return Err(Error::InvalidGrid(format!("empty range {k_min}..{k_max}")));
        }
        EpsGrid::new((k_min..=k_max).map(|k| 2f64.powi(-(k as i32))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn smallest(&self) -> f64 {
        *self.0.last().expect("grid is nonempty")
    }

    /// The `n` smallest values, still decreasing.
    pub fn tail(&self, n: usize) -> &[f64] {
        &self.0[self.0.len().saturating_sub(n)..]
    }

    /// The grid restricted to values `≤ eps_max`, if at least 4 remain.
    pub fn below(&self, eps_max: f64) -> Result<EpsGrid> {
        EpsGrid::new(self.0.iter().copied().filter(|&e| e <= eps_max).collect())
    }
}

impl Default for EpsGrid {
    fn default() -> Self {
        EpsGrid::dyadic(4, 14).expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for EpsGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        EpsGrid::new(v)
    }
}

impl From<EpsGrid> for Vec<f64> {
    fn from(g: EpsGrid) -> Vec<f64> {
        g.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Moderate { n: u32 },
    Negligible { m_max: i32 },
    Divergent,
}

impl Verdict {
    pub fn is_negligible(&self) -> bool {
        matches!(self, Verdict::Negligible { .. })
    }

    pub fn is_moderate(&self) -> bool {
        !matches!(self, Verdict::Divergent)
    }

    /// Growth order `N` (zero for negligible nets).
    pub fn order(&self) -> Option<u32> {
        match self {
            Verdict::Moderate { n } => Some(*n),
            Verdict::Negligible { .. } => Some(0),
            Verdict::Divergent => None,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Moderate { n } => write!(f, "Moderate({n})"),
            Verdict::Negligible { m_max } => write!(f, "Negligible({m_max})"),
            Verdict::Divergent => write!(f, "Divergent"),
        }
    }
}

/// Thresholds for turning a fitted slope into a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderConfig {
    pub m_max: i32,
    pub slope_tolerance: f64,
    /// Zero magnitudes are clamped to this value before taking logs.
    pub floor: f64,
    /// Slopes below this count as faster-than-moderate growth.
    pub divergent_slope: f64,
}

impl Default for OrderConfig {
    fn default() -> Self {
        OrderConfig {
            m_max: 6,
            slope_tolerance: 0.25,
            floor: 1e-300,
            divergent_slope: -20.0,
        }
    }
}

impl OrderConfig {
    pub fn with_m_max(mut self, m_max: i32) -> Self {
        self.m_max = m_max;
        self
    }

    pub fn verdict(&self, slope: f64) -> Verdict {
        if slope < self.divergent_slope {
            Verdict::Divergent
        } else if slope >= self.m_max as f64 - self.slope_tolerance {
            Verdict::Negligible { m_max: self.m_max }
        } else {
            let n = (-slope - self.slope_tolerance).max(0.0).ceil();
            Verdict::Moderate { n: n as u32 }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticFit {
    /// Exponent of magnitude against ε; `+∞` when every sample is zero.
    #[serde(serialize_with = "finite_or_tag")]
    pub slope: f64,
    /// Fitted natural-log magnitude at ε = 1.
    pub intercept: f64,
    /// Largest absolute deviation from the fitted line, in log space.
    pub residual: f64,
    pub verdict: Verdict,
    pub grid: Vec<f64>,
    /// Absolute level below which samples counted as roundoff, when used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_floor: Option<f64>,
}

fn finite_or_tag<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

impl AsymptoticFit {
    pub fn is_negligible(&self) -> bool {
        self.verdict.is_negligible()
    }
}

/// Least-squares log-log fit of `(ε, magnitude)` samples.
pub fn estimate_order(samples: &[(f64, f64)], cfg: &OrderConfig) -> Result<AsymptoticFit> {
    fit_loglog(samples, cfg, 4)
}

fn fit_loglog(samples: &[(f64, f64)], cfg: &OrderConfig, min_samples: usize) -> Result<AsymptoticFit> {
    if samples.len() < min_samples {
        return Err(Error::InsufficientSamples(samples.len()));
    }
    for &(eps, mag) in samples {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidSample(format!("ε = {eps} outside (0, 1]")));
        }
        if mag.is_nan() || mag < 0.0 {
            return Err(Error::InvalidSample(format!("magnitude {mag} at ε = {eps}")));
        }
    }
    let mut eps_sorted: Vec<f64> = samples.iter().map(|s| s.0).collect();
    eps_sorted.sort_by(|a, b| a.total_cmp(b));
    if eps_sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidSample("duplicate ε values".into()));
    }
    let grid: Vec<f64> = samples.iter().map(|s| s.0).collect();
    if samples.iter().all(|s| s.1 <= cfg.floor) {
        return Ok(AsymptoticFit {
            slope: f64::INFINITY,
            intercept: cfg.floor.ln(),
            residual: 0.0,
            verdict: Verdict::Negligible { m_max: cfg.m_max },
            grid,
            noise_floor: None,
        });
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(e, m)| (e.ln(), m.max(cfg.floor).min(f64::MAX).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok(AsymptoticFit {
        slope,
        intercept,
        residual,
        verdict: cfg.verdict(slope),
        grid,
        noise_floor: None,
    })
}

/// Fit that treats magnitudes at or below `floor` as roundoff.
///
/// With no sample above the floor the net is reported as an exact zero.
/// With at least three resolved samples only those are fitted. With one or
/// two, unresolved samples are raised to the floor and the fit stops at the
/// first floored sample after the last resolved one; a flat tail of floored
/// samples would otherwise hide a fast decay. Raising can only lower the
/// fitted slope.
pub fn estimate_order_floored(samples: &[(f64, f64)], floor: f64, cfg: &OrderConfig) -> Result<AsymptoticFit> {
    if samples.len() < 4 {
        return Err(Error::InsufficientSamples(samples.len()));
    }
    if !(floor >= 0.0) {
        return Err(Error::InvalidSample(format!("noise floor {floor}")));
    }
    let resolved: Vec<(f64, f64)> = samples.iter().copied().filter(|s| s.1 > floor).collect();
    let mut fit = if resolved.is_empty() {
        let zeros: Vec<(f64, f64)> = samples.iter().map(|s| (s.0, 0.0)).collect();
        estimate_order(&zeros, cfg)?
    } else if resolved.len() >= 3 {
        let mut f = fit_loglog(&resolved, cfg, 3)?;
        f.grid = samples.iter().map(|s| s.0).collect();
        f
    } else {
        // samples are ordered by decreasing ε; a drop to the floor right after
        // the last resolved sample bounds the decay rate from below
        let last = samples.iter().rposition(|s| s.1 > floor).expect("some sample is resolved");
        let raised: Vec<(f64, f64)> = samples.iter().map(|s| (s.0, s.1.max(floor))).collect();
        if last + 1 < samples.len() && samples[0].0 > samples[samples.len() - 1].0 {
            let mut f = fit_loglog(&raised[..=last + 1], cfg, 2)?;
            f.grid = samples.iter().map(|s| s.0).collect();
            f
        } else {
            estimate_order(&raised, cfg)?
        }
    };
    // validate the raw magnitudes too
    estimate_order(samples, cfg)?;
    fit.noise_floor = Some(floor);
    Ok(fit)
}

/// Classifies the scalar net `ε ↦ f(ε)` by the growth of `|f(ε)|`.
pub fn classify_scalar_net<F>(f: F, grid: &EpsGrid, cfg: &OrderConfig) -> Result<AsymptoticFit>
where
    F: Fn(f64) -> f64,
{
    let samples: Vec<(f64, f64)> = grid.values().iter().map(|&e| (e, f(e).abs())).collect();
    estimate_order(&samples, cfg)
}

/// Treats magnitudes at roundoff level relative to `reference` as exact zeros.
pub fn suppress_roundoff(magnitude: f64, reference: f64, rel: f64) -> f64 {
    if magnitude <= rel * reference.abs().max(1.0) {
        0.0
    } else {
        magnitude
    }
}
