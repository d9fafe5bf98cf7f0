use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::HarnessError;

/// A named check: the estimate must lie in `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    #[serde(skip)]
    pub name: String,
    pub estimate: f64,
    /// Standard error for Monte Carlo checks, residual for algebraic ones.
    pub error: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    fn new(name: &str, estimate: f64, error: f64, lower: Option<f64>, upper: Option<f64>, tolerance: f64) -> Self {
        let pass = estimate.is_finite()
            && lower.is_none_or(|l| estimate >= l)
            && upper.is_none_or(|u| estimate <= u);
        Verdict { name: name.to_string(), estimate, error, lower, upper, tolerance, pass }
    }

    /// `|estimate − reference| ≤ k · se`.
    pub fn within_se(name: &str, estimate: f64, reference: f64, se: f64, k: f64) -> Self {
        let tol = k * se;
        Verdict::new(name, estimate, se, Some(reference - tol), Some(reference + tol), tol)
    }

    /// `|estimate − reference| ≤ tol`.
    pub fn within(name: &str, estimate: f64, reference: f64, tol: f64) -> Self {
        let mut v = Verdict::new(name, estimate, (estimate - reference).abs(), Some(reference - tol), Some(reference + tol), tol);
        v.pass &= (estimate - reference).abs() <= tol;
        v
    }

    /// An algebraic residual `≤ tol`.
    pub fn residual(name: &str, residual: f64, tol: f64) -> Self {
        Verdict::new(name, residual, residual, None, Some(tol), tol)
    }

    pub fn at_most(name: &str, estimate: f64, bound: f64, error: f64) -> Self {
        Verdict::new(name, estimate, error, None, Some(bound), bound)
    }

    pub fn at_least(name: &str, estimate: f64, bound: f64, error: f64) -> Self {
        Verdict::new(name, estimate, error, Some(bound), None, bound)
    }

    pub fn in_range(name: &str, estimate: f64, lo: f64, hi: f64, error: f64) -> Self {
        Verdict::new(name, estimate, error, Some(lo), Some(hi), 0.5 * (hi - lo))
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Verdict::new(name, v, 0.0, Some(1.0), None, 0.0)
    }
}

/// One point of a rate plot.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotRow {
    pub series: String,
    pub n: usize,
    pub error: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub verdicts: Vec<Verdict>,
    /// Reported numbers that carry no verdict.
    pub values: Vec<(String, f64)>,
    pub plot: Vec<PlotRow>,
}

impl Report {
    pub fn push(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    pub fn value(&mut self, name: impl Into<String>, v: f64) {
        self.values.push((name.into(), v));
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.verdicts.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect()
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn get_value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn results_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["name", "kind", "estimate", "error", "lower", "upper", "tolerance", "pass"])?;
        for v in &self.verdicts {
            wtr.write_record([
                v.name.clone(),
                "verdict".into(),
                format!("{:e}", v.estimate),
                format!("{:e}", v.error),
                opt(v.lower),
                opt(v.upper),
                format!("{:e}", v.tolerance),
                v.pass.to_string(),
            ])?;
        }
        for (name, x) in &self.values {
            let row = [name.clone(), "value".into(), format!("{x:e}"), String::new(), String::new(), String::new(), String::new(), String::new()];
            wtr.write_record(row)?;
        }
        wtr.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let verdicts: BTreeMap<&str, &Verdict> = self.verdicts.iter().map(|v| (v.name.as_str(), v)).collect();
        let values: BTreeMap<&str, f64> = self.values.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        serde_json::json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "pass": self.passed(),
            "failed": self.failures(),
            "config": self.config,
            "verdicts": verdicts,
            "values": values,
        })
    }

    pub fn plot_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for row in &self.plot {
            wtr.serialize(row)?;
        }
        wtr.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
    }

    /// Writes `results.csv`, `summary.json` and, when there are plot rows,
    /// `plotdata.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), self.results_csv()?)?;
        let json = serde_json::to_string_pretty(&self.summary_json()).expect("plain data serializes");
        fs::write(dir.join("summary.json"), json + "\n")?;
        if !self.plot.is_empty() {
            fs::write(dir.join("plotdata.csv"), self.plot_csv()?)?;
        }
        Ok(())
    }
}
