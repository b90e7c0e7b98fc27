//! Experiment configuration: a JSON file merged with command-line flags,
//! flags taking precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use colombeau::{EpsGrid, MollifierKind};
use serde::{Deserialize, Serialize};

use crate::experiments::Experiment;

/// Raw settings as read from a config file or collected from flags.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub experiment: Option<String>,
    pub grid: Option<String>,
    pub mollifier: Option<String>,
    pub mmax: Option<i32>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallel: Option<bool>,
    pub eps: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<PartialConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))
    }

    /// `self` with every field set in `over` replaced.
    pub fn merge(mut self, over: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($f:ident),*) => {$(
                if over.$f.is_some() {
                    self.$f = over.$f;
                }
            )*};
        }
        take!(experiment, grid, mollifier, mmax, out, seed, parallel, eps);
        self.tolerances.extend(over.tolerances);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GridRange {
    pub k_min: u32,
    pub k_max: u32,
}

impl GridRange {
    pub fn parse(s: &str) -> Result<GridRange, String> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("grid '{s}' is not of the form k_min..k_max"))?;
        let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("grid bound '{t}' is not a nonnegative integer"));
        let (k_min, k_max) = (parse(a)?, parse(b)?);
        if k_max > 60 {
            return Err(format!("grid bound {k_max} is too large"));
        }
        EpsGrid::dyadic(k_min, k_max).map_err(|e| e.to_string())?;
        Ok(GridRange { k_min, k_max })
    }

    pub fn grid(&self) -> EpsGrid {
        EpsGrid::dyadic(self.k_min, self.k_max).expect("validated at parse time")
    }
}

pub fn parse_mollifier(s: &str) -> Result<MollifierKind, String> {
    match s {
        "fourier" => Ok(MollifierKind::FourierBump),
        "bump" => Ok(MollifierKind::CompactBump),
        _ => {
            let m = s
                .strip_prefix("gausspoly:")
                .ok_or_else(|| format!("unknown mollifier '{s}' (expected fourier, bump or gausspoly:M)"))?;
            let m: u32 = m.parse().map_err(|_| format!("gausspoly order '{m}' is not a positive integer"))?;
            if m == 0 || m > 8 {
                return Err(format!("gausspoly order {m} outside 1..=8"));
            }
            Ok(MollifierKind::GaussPoly { m })
        }
    }
}

pub fn mollifier_name(kind: MollifierKind) -> String {
    match kind {
        MollifierKind::FourierBump => "fourier".into(),
        MollifierKind::CompactBump => "bump".into(),
        MollifierKind::GaussPoly { m } => format!("gausspoly:{m}"),
    }
}

/// A validated configuration for one run.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub grid: GridRange,
    #[serde(serialize_with = "ser_mollifier")]
    pub mollifier: MollifierKind,
    pub mmax: i32,
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub parallel: bool,
    pub eps: Vec<f64>,
    pub tolerances: BTreeMap<String, f64>,
}

fn ser_mollifier<S: serde::Serializer>(k: &MollifierKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&mollifier_name(*k))
}

impl ExperimentConfig {
    pub fn resolve(p: PartialConfig) -> Result<ExperimentConfig, String> {
        let name = p.experiment.ok_or("no experiment given; see `colombeau list`")?;
        let experiment = Experiment::from_id(&name).ok_or_else(|| format!("unknown experiment '{name}'; see `colombeau list`"))?;
        let grid = match &p.grid {
            Some(g) => GridRange::parse(g)?,
            None => GridRange { k_min: 4, k_max: 14 },
        };
        let mollifier = match &p.mollifier {
            Some(m) => parse_mollifier(m)?,
            None => experiment.default_mollifier(),
        };
        let mmax = p.mmax.unwrap_or(6);
        if !(1..=30).contains(&mmax) {
            return Err(format!("mmax {mmax} outside 1..=30"));
        }
        let eps = p.eps.unwrap_or_else(|| experiment.default_eps());
        if eps.is_empty() || eps.iter().any(|e| !(e.is_finite() && *e > 0.0 && *e < 1.0)) {
            return Err("eps values must lie in (0, 1)".into());
        }
        let mut tolerances = experiment.default_tolerances();
        for (k, v) in p.tolerances {
            if !tolerances.contains_key(&k) {
                let known: Vec<&str> = tolerances.keys().map(String::as_str).collect();
                return Err(format!("experiment {} has no tolerance '{k}' (known: {})", experiment.id(), known.join(", ")));
            }
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("tolerance '{k}' must be positive"));
            }
            tolerances.insert(k, v);
        }
        Ok(ExperimentConfig {
            out: p.out.unwrap_or_else(|| PathBuf::from("out").join(experiment.id())),
            experiment,
            grid,
            mollifier,
            mmax,
            seed: p.seed.unwrap_or(0),
            parallel: p.parallel.unwrap_or(false),
            eps,
            tolerances,
        })
    }

    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    pub fn settings(&self) -> colombeau::Settings {
        let mut s = colombeau::Settings::default().with_grid(self.grid.grid());
        s.order = s.order.with_m_max(self.mmax);
        s.parallel = self.parallel;
        s
    }
}

/// Parses `name=value`.
pub fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("tolerance '{s}' is not name=value"))?;
    let v: f64 = v.parse().map_err(|_| format!("tolerance value '{v}' is not a number"))?;
    Ok((k.to_string(), v))
}
