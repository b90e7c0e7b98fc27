//! Report and series artifacts.

use std::path::Path;

use serde::{Serialize, Serializer};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(serialize_with = "number")]
    pub value: f64,
    /// `<`, `>=`, or `holds` for boolean checks.
    pub relation: &'static str,
    #[serde(serialize_with = "number")]
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, bound: f64) -> Check {
        Check {
            name: name.into(),
            value,
            relation: "<",
            bound,
            pass: value < bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Check {
        Check {
            name: name.into(),
            value,
            relation: ">=",
            bound,
            pass: value >= bound,
        }
    }

    /// A boolean check; `value` is reported for context only.
    pub fn holds(name: impl Into<String>, value: f64, pass: bool) -> Check {
        Check {
            name: name.into(),
            value,
            relation: "holds",
            bound: f64::NAN,
            pass,
        }
    }
}

/// Non-finite numbers as strings so that reports stay valid JSON.
pub fn number<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_none()
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// One CSV file under `series/`.
#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub content: String,
}

impl Series {
    pub fn table(name: impl Into<String>, header: &[&str], rows: &[Vec<String>]) -> Series {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for r in rows {
            w.write_record(r).expect("in-memory write");
        }
        Series {
            name: name.into(),
            content: String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv"),
        }
    }

    /// Rows of serializable records, header taken from the field names.
    pub fn records<T: Serialize>(name: impl Into<String>, rows: &[T]) -> Series {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).expect("flat record");
        }
        Series {
            name: name.into(),
            content: String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv"),
        }
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// What an experiment hands back to the driver.
pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
    pub series: Vec<Series>,
}

#[derive(Serialize)]
struct Report<'a> {
    experiment: &'a str,
    anchor: &'a str,
    description: &'a str,
    config: &'a ExperimentConfig,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    checks: &'a [Check],
    results: &'a serde_json::Value,
    series: Vec<String>,
}

/// Writes `report.json` and `series/*.csv`; returns whether every check
/// passed.
pub fn write(cfg: &ExperimentConfig, outcome: Result<Outcome, String>, dir: &Path) -> std::io::Result<bool> {
    let (outcome, error) = match outcome {
        Ok(o) => (o, None),
        Err(e) => (
            Outcome {
                checks: Vec::new(),
                results: serde_json::Value::Null,
                series: Vec::new(),
            },
            Some(e),
        ),
    };
    let pass = error.is_none() && outcome.checks.iter().all(|c| c.pass);
    std::fs::create_dir_all(dir)?;
    if !outcome.series.is_empty() {
        let sdir = dir.join("series");
        std::fs::create_dir_all(&sdir)?;
        for s in &outcome.series {
            std::fs::write(sdir.join(format!("{}.csv", s.name)), &s.content)?;
        }
    }
    let e = cfg.experiment;
    let report = Report {
        experiment: e.id(),
        anchor: e.anchor(),
        description: e.description(),
        config: cfg,
        pass,
        error,
        checks: &outcome.checks,
        results: &outcome.results,
        series: outcome.series.iter().map(|s| format!("series/{}.csv", s.name)).collect(),
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    Ok(pass)
}
