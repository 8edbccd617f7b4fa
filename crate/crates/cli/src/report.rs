use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use presence_core::EstimatorReport;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::table::Table;
use crate::verify::CriterionOutcome;

/// Engine diagnostics lifted into the run-level summary (worst case over reports).
const SUMMARY_KEYS: &[&str] = &["mass_loss", "grid_miss_rate", "truncation_dev_mean"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    #[serde(default)]
    pub reports: BTreeMap<String, EstimatorReport>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub criteria: Vec<CriterionOutcome>,
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(skip)]
    pub artifacts: Vec<(String, String)>,
}

impl RunReport {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        let mut echo = cfg.clone();
        echo.out = None;
        Self {
            seed: cfg.seed,
            config: Some(echo),
            ..Self::bare(command)
        }
    }

    pub fn bare(command: &str) -> Self {
        Self {
            command: command.to_string(),
            seed: 0,
            suite: None,
            config: None,
            reports: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            criteria: Vec::new(),
            files: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn diag(&mut self, key: &str, value: f64) {
        self.diagnostics.insert(key.to_string(), value);
    }

    pub fn report(&mut self, key: &str, r: EstimatorReport) {
        for k in SUMMARY_KEYS {
            if let Some(v) = r.diag(k) {
                let e = self.diagnostics.entry(k.to_string()).or_insert(v);
                *e = e.max(v);
            }
        }
        self.reports.insert(key.to_string(), r);
    }

    pub fn table(&mut self, name: &str, t: Table) {
        self.text(name, t.to_csv());
    }

    pub fn text(&mut self, name: &str, body: String) {
        self.files.push(name.to_string());
        self.artifacts.push((name.to_string(), body));
    }

    pub fn failed(&self) -> usize {
        self.criteria.iter().filter(|c| !c.pass).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `report.json`, the CSV artifacts and, separately, `wall_time.txt`
    /// (kept out of the report so that reruns compare byte for byte).
    pub fn write(&self, dir: &Path, wall: Option<Duration>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.artifacts {
            std::fs::write(dir.join(name), body)?;
        }
        std::fs::write(dir.join("report.json"), self.to_json())?;
        if let Some(w) = wall {
            std::fs::write(dir.join("wall_time.txt"), format!("{:.3}\n", w.as_secs_f64()))?;
        }
        Ok(())
    }
}
