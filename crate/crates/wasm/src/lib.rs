//! WebAssembly bindings behind `www/index.html`. Every entry point takes plain
//! strings or numbers and returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use survbench_core::binary::{make_binary_labels, ModelKind};
use survbench_core::data::{fit_standardizer, impute_missing, read_csv, split_indices};
use survbench_core::evaluation::{auc, bridge_scores, c_index};
use survbench_core::nonparametric::{kaplan_meier, logrank_test, StepSurvivalCurve};
use survbench_core::optim::PenaltyConfig;
use survbench_core::selection::{duration_quantile, fit_model, synth_generate, SynthConfig, TrainedModel};
use survbench_core::survival::MixtureOptions;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js)
}

#[derive(Serialize)]
struct KmOutput {
    curves: Vec<(String, StepSurvivalCurve)>,
    logrank_p: Option<f64>,
}

/// Kaplan–Meier curve(s) with 95% bands from CSV text holding `y` and
/// `delta`. With a non-empty `group_by`, the rows are split on that 0/1
/// column and a log-rank p-value is added.
#[wasm_bindgen]
pub fn kaplan_meier_csv(text: &str, group_by: &str) -> Result<String, JsError> {
    let raw = read_csv(text.as_bytes()).map_err(js)?;
    let outcomes: Vec<(f64, bool)> = raw.y.iter().copied().zip(raw.event.iter().copied()).collect();
    if outcomes.is_empty() {
        return Err(JsError::new("no rows"));
    }
    let group_by = group_by.trim();
    if group_by.is_empty() {
        return to_json(&KmOutput {
            curves: vec![("all".into(), kaplan_meier(&outcomes))],
            logrank_p: None,
        });
    }
    let j = raw
        .names
        .iter()
        .position(|n| n == group_by)
        .ok_or_else(|| JsError::new(&format!("no column `{group_by}`")))?;
    let (mut ones, mut zeros) = (Vec::new(), Vec::new());
    for (o, row) in outcomes.iter().zip(&raw.cells) {
        match row[j] {
            Some(v) if v == 1.0 => ones.push(*o),
            Some(v) if v == 0.0 => zeros.push(*o),
            Some(_) => return Err(JsError::new(&format!("`{group_by}` must be 0/1"))),
            None => {}
        }
    }
    if ones.is_empty() || zeros.is_empty() {
        return Err(JsError::new("both groups need at least one row"));
    }
    to_json(&KmOutput {
        logrank_p: Some(logrank_test(&ones, &zeros).p_value),
        curves: vec![
            (format!("{group_by} = 1"), kaplan_meier(&ones)),
            (format!("{group_by} = 0"), kaplan_meier(&zeros)),
        ],
    })
}

#[derive(Serialize)]
struct SimOutput {
    epsilon: f64,
    cmix_auc: f64,
    lr_auc: f64,
    cmix_c_index: f64,
    recovery: f64,
    rate_high: f64,
    rate_low: f64,
    true_beta: Vec<f64>,
    cmix_beta: Vec<f64>,
    lr_beta: Vec<f64>,
    km_high: StepSurvivalCurve,
    km_low: StepSurvivalCurve,
}

/// Draws a synthetic mixture cohort, fits C-mix and logistic regression at a
/// fixed penalty on 70% of it and scores both on the rest. The horizon is the
/// 25th percentile of the observed durations.
#[wasm_bindgen]
pub fn simulate_and_fit(n: usize, censor_rate: f64, gamma: f64, seed: u32) -> Result<String, JsError> {
    let seed = u64::from(seed);
    let cfg = SynthConfig {
        n,
        censor_rate,
        seed,
        ..SynthConfig::default()
    };
    let (data, truth) = synth_generate(&cfg).map_err(js)?;
    let eps = duration_quantile(&data, 0.25);
    let (train_idx, test_idx) = split_indices(data.len(), 0.3, seed).map_err(js)?;
    let scaler = fit_standardizer(&data.subset(&train_idx)).map_err(js)?;
    let train = scaler.transform(&data.subset(&train_idx)).map_err(js)?;
    let test = scaler.transform(&data.subset(&test_idx)).map_err(js)?;
    let penalty = PenaltyConfig::new(gamma, 0.1).map_err(js)?;
    let opts = MixtureOptions { seed, ..MixtureOptions::default() };
    let cmix = fit_model(ModelKind::Cmix, &train.records, eps, penalty, &opts).map_err(js)?;
    let lr = fit_model(ModelKind::Logistic, &train.records, eps, penalty, &opts).map_err(js)?;

    let task = make_binary_labels(&test.records, eps).map_err(js)?;
    let rows: Vec<Vec<f64>> = task.retained.iter().map(|&i| test.records[i].x.clone()).collect();
    let bridged = bridge_scores(|x, t| cmix.survival(x, t).unwrap_or(1.0), &rows, eps).map_err(js)?;
    let direct = rows.iter().map(|x| lr.marker(x)).collect::<Result<Vec<_>, _>>().map_err(js)?;
    let markers = test.records.iter().map(|r| cmix.marker(&r.x)).collect::<Result<Vec<_>, _>>().map_err(js)?;
    let tau = test.records.iter().map(|r| r.y).fold(0.0, f64::max);
    let TrainedModel::Mixture(mm) = &cmix else {
        return Err(JsError::new("unexpected model family"));
    };
    let recovered = train_idx
        .iter()
        .zip(&train.records)
        .filter(|(&i, r)| (mm.posterior_high(r) > 0.5) == truth.groups[i])
        .count();
    to_json(&SimOutput {
        epsilon: eps,
        cmix_auc: auc(&task.labels, &bridged).map_err(js)?,
        lr_auc: auc(&task.labels, &direct).map_err(js)?,
        cmix_c_index: c_index(&test.outcomes(), &markers, tau).map_err(js)?,
        recovery: recovered as f64 / train_idx.len() as f64,
        rate_high: mm.rate_high,
        rate_low: mm.rate_low,
        true_beta: truth.beta.clone(),
        cmix_beta: mm.beta.clone(),
        lr_beta: lr.coefficients().to_vec(),
        km_high: mm.km_high.clone(),
        km_low: mm.km_low.clone(),
    })
}

#[derive(Serialize)]
struct Concordance {
    c_index: f64,
    auc: Option<f64>,
    retained: usize,
}

/// C-index of the `marker` column (higher = riskier) and, for a positive
/// `epsilon`, the AUC at that horizon after dropping subjects censored
/// before it.
#[wasm_bindgen]
pub fn concordance_csv(text: &str, epsilon: f64) -> Result<String, JsError> {
    let raw = read_csv(text.as_bytes()).map_err(js)?;
    let j = raw
        .names
        .iter()
        .position(|n| n == "marker")
        .ok_or_else(|| JsError::new("no `marker` column"))?;
    let kinds = raw.infer_kinds();
    let data = impute_missing(&raw, &kinds).map_err(js)?;
    let markers = data.column(j);
    let outcomes = data.outcomes();
    let c = c_index(&outcomes, &markers, f64::INFINITY).map_err(js)?;
    let (auc_value, retained) = if epsilon > 0.0 {
        let task = make_binary_labels(&data.records, epsilon).map_err(js)?;
        let scores: Vec<f64> = task.retained.iter().map(|&i| markers[i]).collect();
        (Some(auc(&task.labels, &scores).map_err(js)?), task.retained.len())
    } else {
        (None, data.len())
    };
    to_json(&Concordance {
        c_index: c,
        auc: auc_value,
        retained,
    })
}
