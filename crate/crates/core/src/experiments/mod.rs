//! Seeded Monte Carlo studies.
//!
//! Every experiment derives one generator per trial from `(master seed, trial
//! index)`, runs trials in parallel, and assembles rows in trial order, so the
//! output is identical for any number of threads.
//!
//! Checks come in two kinds. Assertive checks test claims that are free of
//! unknown constants or exact by construction; descriptive checks only report.

mod counterexamples;
mod isometry;
mod isotropy;
mod scaling;
pub mod stats;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LipError, Result};

pub use counterexamples::{counterexample_suite, CounterexampleConfig};
pub use isometry::{deep_lower_event, near_isometry_check, DeepLowerConfig, NearIsometryConfig};
pub use isotropy::{isotropy_check, subgaussian_tail_check, IsotropyConfig, TailConfig};
pub use scaling::{scaling_shallow, LipMethod, ScalingConfig};

/// One measured quantity of one trial: a line of `rows.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub trial: u64,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub seed: u64,
    pub quantity: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Assertive,
    Descriptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub passed: bool,
    pub observed: f64,
    /// Human-readable acceptance condition.
    pub expected: String,
    /// How the acceptance threshold was constructed.
    pub tolerance: String,
}

impl Check {
    pub fn assertive(name: impl Into<String>, passed: bool, observed: f64, expected: impl Into<String>, tolerance: impl Into<String>) -> Self {
        Check { name: name.into(), kind: CheckKind::Assertive, passed, observed, expected: expected.into(), tolerance: tolerance.into() }
    }

    pub fn descriptive(name: impl Into<String>, passed: bool, observed: f64, expected: impl Into<String>, tolerance: impl Into<String>) -> Self {
        Check { name: name.into(), kind: CheckKind::Descriptive, passed, observed, expected: expected.into(), tolerance: tolerance.into() }
    }
}

/// Summary statistics of one quantity within one group of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub group: String,
    pub quantity: String,
    pub count: usize,
    pub mean: f64,
    pub std_err: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    pub fn of(group: impl Into<String>, quantity: impl Into<String>, values: &[f64]) -> Self {
        let s = stats::Summary::of(values);
        Aggregate {
            group: group.into(),
            quantity: quantity.into(),
            count: values.len(),
            mean: s.mean,
            std_err: s.std_err,
            median: s.median,
            q05: s.q05,
            q95: s.q95,
            min: s.min,
            max: s.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub trials: u64,
    #[serde(skip)]
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    /// Scalar statistics derived from the rows (fitted slopes, distances, …).
    pub derived: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub failures: Vec<TrialFailure>,
}

impl ExperimentReport {
    fn new<C: Serialize>(experiment: &str, config: &C, master_seed: u64, trials: u64) -> Result<Self> {
        Ok(ExperimentReport {
            experiment: experiment.to_string(),
            config: serde_json::to_value(config)?,
            master_seed,
            trials,
            rows: Vec::new(),
            aggregates: Vec::new(),
            derived: BTreeMap::new(),
            checks: Vec::new(),
            failures: Vec::new(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn row(&mut self, trial: u64, d: usize, n: usize, l: usize, seed: u64, quantity: &str, value: f64) {
        self.rows.push(Row {
            experiment: self.experiment.clone(),
            trial,
            d,
            n,
            l,
            seed,
            quantity: quantity.to_string(),
            value,
        });
    }

    /// Values of `quantity` in row order, optionally restricted by a row predicate.
    pub fn values(&self, quantity: &str, keep: impl Fn(&Row) -> bool) -> Vec<f64> {
        self.rows.iter().filter(|r| r.quantity == quantity && keep(r)).map(|r| r.value).collect()
    }

    /// True iff every assertive check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.kind == CheckKind::Assertive).all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.kind == CheckKind::Assertive && !c.passed).collect()
    }

    pub fn rows_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| LipError::Io(e.into_error()))
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v["row_count"] = self.rows.len().into();
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// Writes `rows.csv` and `summary.json` into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("rows.csv"), self.rows_csv()?)?;
        fs::write(dir.join("summary.json"), self.summary_json()? + "\n")?;
        Ok(())
    }
}

pub const EXPERIMENT_NAMES: [&str; 6] = [
    "scaling_shallow",
    "isotropy_check",
    "subgaussian_tail_check",
    "near_isometry_check",
    "deep_lower_event",
    "counterexample_suite",
];

fn parse<C: serde::de::DeserializeOwned + Default>(config: Option<&serde_json::Value>) -> Result<C> {
    match config {
        Some(v) => Ok(serde_json::from_value(v.clone())?),
        None => Ok(C::default()),
    }
}

/// Runs experiment `name` (hyphens and underscores are interchangeable) with a
/// JSON configuration; missing fields take their defaults.
pub fn run_experiment(name: &str, config: Option<&serde_json::Value>) -> Result<ExperimentReport> {
    match name.replace('-', "_").as_str() {
        "scaling_shallow" => scaling_shallow(&parse(config)?),
        "isotropy_check" => isotropy_check(&parse(config)?),
        "subgaussian_tail_check" => subgaussian_tail_check(&parse(config)?),
        "near_isometry_check" => near_isometry_check(&parse(config)?),
        "deep_lower_event" => deep_lower_event(&parse(config)?),
        "counterexample_suite" | "counterexamples" => counterexample_suite(&parse(config)?),
        other => Err(LipError::InvalidConfig(format!(
            "unknown experiment {other:?}; expected one of {}",
            EXPERIMENT_NAMES.join(", ")
        ))),
    }
}

/// Canonical `x₀ = e₁` when none is given.
fn fixed_point(x0: &Option<Vec<f64>>, dim: usize) -> Result<Vec<f64>> {
    let x = match x0 {
        Some(x) => x.clone(),
        None => {
            let mut e = vec![0.0; dim];
            e[0] = 1.0;
            e
        }
    };
    if x.len() != dim {
        return Err(LipError::Shape(format!("x0 has length {}, expected {dim}", x.len())));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(LipError::InvalidConfig("x0 must be nonzero".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_experiment_and_keys_rejected() {
        assert!(run_experiment("nope", None).is_err());
        let bad = serde_json::json!({"trials": 3, "bogus": 1});
        assert!(run_experiment("deep-lower-event", Some(&bad)).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut rep = ExperimentReport::new("t", &serde_json::json!({}), 1, 1).unwrap();
        rep.row(0, 2, 3, 1, 9, "lip", 0.1);
        let text = String::from_utf8(rep.rows_csv().unwrap()).unwrap();
        assert_eq!(text, "experiment,trial,d,N,L,seed,quantity,value\nt,0,2,3,1,9,lip,0.1\n");
        let summary: serde_json::Value = serde_json::from_str(&rep.summary_json().unwrap()).unwrap();
        assert_eq!(summary["row_count"], 1);
    }
}
