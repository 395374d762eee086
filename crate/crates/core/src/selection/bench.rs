use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::cv::{default_gamma_grid, kfold_cv, CVResult, CvSettings, DEFAULT_ETA, DEFAULT_FOLDS};
use super::model::{fit_model, score_model, TrainedModel};
use super::synth::{synth_generate, SynthConfig};
use crate::binary::{make_binary_labels, ModelKind};
use crate::data::{fit_standardizer, impute_missing, read_csv_path, split_indices, CovariateKind, Dataset, RawTable};
use crate::error::{Error, Result};
use crate::evaluation::{
    auc, bridge_scores, group_test_battery, importance_similarity, ChosenPenalty, ComparisonReport, Grouping,
    ImportanceRow, MetricRow, NamedCurve, RunSummary, SimilarityMatrix,
};
use crate::longitudinal::{extract_features, read_long_csv, FeatureMatrix, FeatureOptions};
use crate::nonparametric::kaplan_meier;
use crate::survival::{mixture_marker, MixtureOptions};
use crate::FitOptions;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Survival table with `y`, `delta`, covariates and optionally
    /// `subject_id`. When absent the synthetic generator is used.
    pub survival: Option<PathBuf>,
    /// Long-format measurements joined on `subject_id`.
    pub longitudinal: Option<PathBuf>,
    /// Covariate kind overrides by column name.
    pub kinds: BTreeMap<String, CovariateKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyGrid {
    pub eta: f64,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    /// Replaces `gamma_grid` for the listed models.
    pub per_model: BTreeMap<ModelKind, Vec<f64>>,
}

impl Default for PenaltyGrid {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            gamma_grid: default_gamma_grid(),
            folds: DEFAULT_FOLDS,
            per_model: BTreeMap::new(),
        }
    }
}

impl PenaltyGrid {
    pub fn grid_for(&self, kind: ModelKind) -> &[f64] {
        self.per_model.get(&kind).unwrap_or(&self.gamma_grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub data: DataPaths,
    pub synth: SynthConfig,
    pub seed: u64,
    /// Horizon in days.
    pub epsilon: f64,
    /// C-index horizon; the largest test duration when absent.
    pub tau: Option<f64>,
    pub test_fraction: f64,
    pub alpha: f64,
    pub penalty: PenaltyGrid,
    pub models: Vec<ModelKind>,
    pub output_dir: PathBuf,
    pub fit: FitOptions,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub features: FeatureOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let em = MixtureOptions::default();
        Self {
            data: DataPaths::default(),
            synth: SynthConfig::default(),
            seed: 0,
            epsilon: 30.0,
            tau: None,
            test_fraction: 0.3,
            alpha: 0.05,
            penalty: PenaltyGrid::default(),
            models: ModelKind::ALL.to_vec(),
            output_dir: PathBuf::from("survbench-out"),
            fit: FitOptions::default(),
            em_tol: em.em_tol,
            em_max_iter: em.em_max_iter,
            features: FeatureOptions::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)".into());
        }
        let grids = std::iter::once(&self.penalty.gamma_grid).chain(self.penalty.per_model.values());
        for grid in grids {
            if grid.is_empty() || grid.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                return bad("penalty grids must be nonempty, finite and non-negative".into());
            }
        }
        if !(self.penalty.eta > 0.0 && self.penalty.eta < 1.0) {
            return bad("eta must lie in (0, 1)".into());
        }
        if self.penalty.folds < 2 {
            return bad("need at least 2 folds".into());
        }
        if self.models.is_empty() {
            return bad("model list is empty".into());
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return bad("model list contains duplicates".into());
        }
        Ok(())
    }

    pub fn mixture_options(&self) -> MixtureOptions {
        MixtureOptions {
            fit: self.fit.clone(),
            em_tol: self.em_tol,
            em_max_iter: self.em_max_iter,
            seed: self.seed,
        }
    }

    pub fn cv_settings(&self, kind: ModelKind) -> CvSettings {
        CvSettings {
            gamma_grid: self.penalty.grid_for(kind).to_vec(),
            eta: self.penalty.eta,
            folds: self.penalty.folds,
            seed: self.seed,
            epsilon: self.epsilon,
            options: self.mixture_options(),
        }
    }
}

/// Appends feature columns to `raw`, matching rows on `subject_id`. Subjects
/// without features get missing cells; columns with no observed value are
/// dropped.
pub fn join_features(raw: &mut RawTable, features: &FeatureMatrix) -> Result<()> {
    let ids = raw
        .ids
        .as_ref()
        .ok_or_else(|| Error::InvalidData("joining features needs a `subject_id` column".into()))?;
    let by_id: BTreeMap<&str, &Vec<Option<f64>>> =
        features.subjects.iter().map(String::as_str).zip(&features.values).collect();
    let rows: Vec<Option<&&Vec<Option<f64>>>> = ids.iter().map(|id| by_id.get(id.as_str())).collect();
    for (j, name) in features.columns.iter().enumerate() {
        if raw.names.contains(name) {
            return Err(Error::InvalidData(format!("duplicate column `{name}` after join")));
        }
        let column: Vec<Option<f64>> = rows.iter().map(|r| r.and_then(|v| v[j])).collect();
        if column.iter().all(Option::is_none) {
            warn!("feature `{name}` has no observed values; dropped");
            continue;
        }
        raw.names.push(name.clone());
        for (cells, v) in raw.cells.iter_mut().zip(column) {
            cells.push(v);
        }
    }
    Ok(())
}

/// Reads, joins and imputes the configured data, or draws the synthetic set.
/// Relative paths are resolved against `base`.
pub fn load_dataset(config: &BenchConfig, base: &Path) -> Result<Dataset> {
    let Some(path) = &config.data.survival else {
        return Ok(synth_generate(&config.synth)?.0);
    };
    let mut raw = read_csv_path(base.join(path))?;
    if let Some(long) = &config.data.longitudinal {
        let series = read_long_csv(std::fs::File::open(base.join(long))?)?;
        let opts = FeatureOptions {
            seed: config.seed,
            ..config.features.clone()
        };
        join_features(&mut raw, &extract_features(&series, &opts)?)?;
    }
    let kinds = raw.kinds_with_overrides(&config.data.kinds)?;
    impute_missing(&raw, &kinds)
}

/// A full run: the report plus the fitted models and CV traces behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub report: ComparisonReport,
    pub models: Vec<TrainedModel>,
    pub cv: Vec<CVResult>,
}

fn curve_name(label: &str) -> String {
    label.to_ascii_lowercase().replace([' ', '-'], "")
}

/// Split, standardize, tune, fit and evaluate every configured model.
pub fn run_benchmark(config: &BenchConfig, data: &Dataset) -> Result<BenchOutcome> {
    config.validate()?;
    let eps = config.epsilon;
    let (train_idx, test_idx) = split_indices(data.len(), config.test_fraction, config.seed)?;
    let (train_raw, test_raw) = (data.subset(&train_idx), data.subset(&test_idx));
    let scaler = fit_standardizer(&train_raw)?;
    let train = scaler.transform(&train_raw)?;
    let test = scaler.transform(&test_raw)?;
    let everyone = scaler.transform(data)?;

    let opts = config.mixture_options();
    let mut models = Vec::new();
    let mut cvs = Vec::new();
    let mut penalties = Vec::new();
    for &kind in &config.models {
        let settings = config.cv_settings(kind);
        info!("{}: cross-validating {} penalties", kind.label(), settings.gamma_grid.len());
        let cv = kfold_cv(&train.records, kind, &settings)?;
        let penalty = crate::optim::PenaltyConfig::new(cv.chosen_gamma, config.penalty.eta)?;
        let model = fit_model(kind, &train.records, eps, penalty, &opts)?;
        penalties.push(ChosenPenalty {
            model: kind.label().to_string(),
            gamma: cv.chosen_gamma,
            eta: config.penalty.eta,
            cv_mean: cv.mean_scores(),
            gamma_grid: cv.gamma_grid.clone(),
        });
        models.push(model);
        cvs.push(cv);
    }

    let tau = config
        .tau
        .unwrap_or_else(|| test.records.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max));
    let test_task = make_binary_labels(&test.records, eps)?;
    let train_task = make_binary_labels(&train.records, eps)?;
    let retained_rows: Vec<Vec<f64>> = test_task.retained.iter().map(|&i| test.records[i].x.clone()).collect();

    let mut metrics = Vec::new();
    for model in &models {
        let kind = model.kind();
        let name = kind.label().to_string();
        let auc_value = if kind.is_survival() {
            let scores = bridge_scores(|x, t| model.survival(x, t).unwrap_or(1.0), &retained_rows, eps)?;
            auc(&test_task.labels, &scores)
        } else {
            score_model(model, &test.records, eps, tau)
        }
        .map_err(|e| e.in_model(kind.label()))?;
        metrics.push(MetricRow {
            setting: "binary".into(),
            metric: "auc".into(),
            model: name.clone(),
            score: auc_value,
        });
        if kind.is_survival() {
            let c = score_model(model, &test.records, eps, tau).map_err(|e| e.in_model(kind.label()))?;
            metrics.push(MetricRow {
                setting: "survival".into(),
                metric: "c_index".into(),
                model: name,
                score: c,
            });
        }
    }

    let importance: Vec<ImportanceRow> = models
        .iter()
        .map(|m| ImportanceRow {
            model: m.kind().label().to_string(),
            values: m.importance(),
        })
        .collect();
    let similarity = if models.len() >= 2 && data.dim() >= 2 {
        Some(SimilarityMatrix {
            models: importance.iter().map(|r| r.model.clone()).collect(),
            values: importance_similarity(&importance.iter().map(|r| r.values.clone()).collect::<Vec<_>>())?,
        })
    } else {
        None
    };

    let cmix = models.iter().find_map(|m| match m {
        TrainedModel::Mixture(mm) if m.kind() == ModelKind::Cmix => Some(mm),
        _ => None,
    });
    let mut groupings = Vec::new();
    if let Some(mm) = cmix {
        groupings.push(Grouping {
            name: "cmix".into(),
            membership: everyone.records.iter().map(|r| Some(mixture_marker(mm, &r.x) > 0.5)).collect(),
        });
    }
    groupings.push(Grouping {
        name: "epsilon".into(),
        membership: make_binary_labels(&data.records, eps)?.label_of(data.len()),
    });
    groupings.retain(|g| {
        let both = g.membership.contains(&Some(true)) && g.membership.contains(&Some(false));
        if !both {
            warn!("grouping `{}` has an empty group; left out of the tests", g.name);
        }
        both
    });
    let (tests, group_summaries) = if groupings.is_empty() {
        (None, Vec::new())
    } else {
        let battery = group_test_battery(data, &groupings, config.alpha)?;
        (Some(battery.table), battery.summaries)
    };

    let mut curves = vec![NamedCurve {
        name: "km_all".into(),
        curve: kaplan_meier(&data.outcomes()),
    }];
    for model in &models {
        if let TrainedModel::Mixture(mm) = model {
            let base = curve_name(model.kind().label());
            curves.push(NamedCurve {
                name: format!("{base}_high"),
                curve: mm.km_high.clone(),
            });
            curves.push(NamedCurve {
                name: format!("{base}_low"),
                curve: mm.km_low.clone(),
            });
        }
    }
    if let Some(mm) = cmix {
        for high in [true, false] {
            let outcomes: Vec<(f64, bool)> = test
                .records
                .iter()
                .filter(|r| (mixture_marker(mm, &r.x) > 0.5) == high)
                .map(|r| (r.y, r.event))
                .collect();
            if !outcomes.is_empty() {
                curves.push(NamedCurve {
                    name: format!("km_test_cmix_{}", if high { "high" } else { "low" }),
                    curve: kaplan_meier(&outcomes),
                });
            }
        }
    }

    let report = ComparisonReport {
        run: RunSummary {
            seed: config.seed,
            epsilon: eps,
            tau,
            n_train: train.len(),
            n_test: test.len(),
            excluded_train: train_task.excluded.len(),
            excluded_test: test_task.excluded.len(),
        },
        metrics,
        covariates: data.names.clone(),
        importance,
        similarity,
        penalties,
        tests,
        group_summaries,
        curves,
    };
    Ok(BenchOutcome { report, models, cv: cvs })
}
