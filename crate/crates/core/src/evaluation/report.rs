use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hypothesis::{GroupSummary, TestTable};
use crate::error::Result;
use crate::nonparametric::StepSurvivalCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `binary` or `survival`.
    pub setting: String,
    pub metric: String,
    pub model: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub model: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub models: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenPenalty {
    pub model: String,
    pub gamma: f64,
    pub eta: f64,
    /// Mean held-out score per grid point, aligned with `gamma_grid`.
    pub cv_mean: Vec<Option<f64>>,
    pub gamma_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCurve {
    pub name: String,
    pub curve: StepSurvivalCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub epsilon: f64,
    pub tau: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub excluded_train: usize,
    pub excluded_test: usize,
}

/// Everything one benchmark run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run: RunSummary,
    pub metrics: Vec<MetricRow>,
    pub covariates: Vec<String>,
    pub importance: Vec<ImportanceRow>,
    pub similarity: Option<SimilarityMatrix>,
    pub penalties: Vec<ChosenPenalty>,
    pub tests: Option<TestTable>,
    pub group_summaries: Vec<GroupSummary>,
    pub curves: Vec<NamedCurve>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl ComparisonReport {
    pub fn metric(&self, model: &str, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.model == model && m.metric == metric)
            .map(|m| m.score)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn metrics_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["setting", "metric", "model", "score"])?;
        for m in &self.metrics {
            w.write_record([m.setting.as_str(), &m.metric, &m.model, &m.score.to_string()])?;
        }
        finish(w)
    }

    pub fn importance_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["covariate".to_string()];
        header.extend(self.importance.iter().map(|r| r.model.clone()));
        w.write_record(&header)?;
        for (j, name) in self.covariates.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(self.importance.iter().map(|r| r.values[j].to_string()));
            w.write_record(&row)?;
        }
        finish(w)
    }

    pub fn similarity_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if let Some(s) = &self.similarity {
            let mut header = vec!["model".to_string()];
            header.extend(s.models.iter().cloned());
            w.write_record(&header)?;
            for (name, row) in s.models.iter().zip(&s.values) {
                let mut rec = vec![name.clone()];
                rec.extend(row.iter().map(|v| opt(*v)));
                w.write_record(&rec)?;
            }
        }
        finish(w)
    }

    pub fn tests_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["covariate", "kind", "scheme", "p_value", "corrected", "reject", "degenerate"])?;
        if let Some(t) = &self.tests {
            for r in &t.rows {
                let kind = serde_json::to_value(r.kind)?;
                let kind = kind.as_str().unwrap_or_default().to_string();
                for (k, scheme) in t.schemes.iter().enumerate() {
                    w.write_record([
                        r.covariate.clone(),
                        kind.clone(),
                        scheme.clone(),
                        opt(r.p_values[k]),
                        opt(r.corrected[k]),
                        r.reject[k].to_string(),
                        r.degenerate.to_string(),
                    ])?;
                }
            }
        }
        finish(w)
    }

    pub fn group_summaries_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "scheme", "covariate", "group", "count", "min", "q1", "median", "q3", "max", "proportion",
        ])?;
        for s in &self.group_summaries {
            let five = s.five_numbers.map_or_else(|| vec![String::new(); 5], |f| f.iter().map(f64::to_string).collect());
            let mut rec = vec![
                s.scheme.clone(),
                s.covariate.clone(),
                if s.in_group { "1".into() } else { "0".into() },
                s.count.to_string(),
            ];
            rec.extend(five);
            rec.push(opt(s.proportion));
            w.write_record(&rec)?;
        }
        finish(w)
    }

    /// Writes `report.json`, the CSV tables and one CSV per survival curve.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        self.write_tables(dir)
    }

    /// The CSV artifacts only (used when re-emitting from a saved report).
    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv()?)?;
        fs::write(dir.join("importance.csv"), self.importance_csv()?)?;
        fs::write(dir.join("similarity.csv"), self.similarity_csv()?)?;
        fs::write(dir.join("tests.csv"), self.tests_csv()?)?;
        fs::write(dir.join("group_summaries.csv"), self.group_summaries_csv()?)?;
        for c in &self.curves {
            let mut buf = Vec::new();
            c.curve.write_csv(&mut buf)?;
            fs::write(dir.join(format!("curve_{}.csv", c.name)), buf)?;
        }
        Ok(())
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
