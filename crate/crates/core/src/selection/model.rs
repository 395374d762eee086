use serde::{Deserialize, Serialize};

use crate::binary::{logistic_fit, make_binary_labels, predict_score, svm_fit, FittedLinearModel, ModelKind};
use crate::data::SurvivalRecord;
use crate::error::Result;
use crate::evaluation::{auc, c_index};
use crate::optim::PenaltyConfig;
use crate::survival::{
    cmix_fit, cox_fit, cox_survival, mixture_marker, mixture_survival, CoxModel, MixtureDurationModel, MixtureMode,
    MixtureOptions,
};

/// Any of the five fitted models behind one interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrainedModel {
    Linear(FittedLinearModel),
    Cox(CoxModel),
    Mixture(MixtureDurationModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Linear(m) => m.kind,
            TrainedModel::Cox(_) => ModelKind::Cox,
            TrainedModel::Mixture(m) => match m.mode {
                MixtureMode::Cmix => ModelKind::Cmix,
                MixtureMode::Cure => ModelKind::Cure,
            },
        }
    }

    /// Larger means higher risk.
    pub fn marker(&self, x: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Linear(m) => predict_score(m, x),
            TrainedModel::Cox(m) => Ok(m.marker(x)),
            TrainedModel::Mixture(m) => Ok(mixture_marker(m, x)),
        }
    }

    /// Estimated `S(t | x)`; `None` for the binary classifiers.
    pub fn survival(&self, x: &[f64], t: f64) -> Option<f64> {
        match self {
            TrainedModel::Linear(_) => None,
            TrainedModel::Cox(m) => Some(cox_survival(m, x, t)),
            TrainedModel::Mixture(m) => Some(mixture_survival(m, x, t)),
        }
    }

    pub fn importance(&self) -> Vec<f64> {
        match self {
            TrainedModel::Linear(m) => m.importance(),
            TrainedModel::Cox(m) => m.importance(),
            TrainedModel::Mixture(m) => m.importance(),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            TrainedModel::Linear(m) => &m.beta,
            TrainedModel::Cox(m) => &m.beta,
            TrainedModel::Mixture(m) => &m.beta,
        }
    }
}

/// Fits `kind` on the training records. Binary classifiers see only the
/// subjects retained at horizon `epsilon`.
pub fn fit_model(
    kind: ModelKind,
    train: &[SurvivalRecord],
    epsilon: f64,
    penalty: PenaltyConfig,
    opts: &MixtureOptions,
) -> Result<TrainedModel> {
    let fitted = match kind {
        ModelKind::Logistic | ModelKind::Svm => {
            let task = make_binary_labels(train, epsilon)?;
            let rows: Vec<SurvivalRecord> = task.retained.iter().map(|&i| train[i].clone()).collect();
            let x = super::design(&rows);
            if kind == ModelKind::Logistic {
                logistic_fit(x.view(), &task.labels, penalty, &opts.fit)
            } else {
                svm_fit(x.view(), &task.labels, penalty, &opts.fit)
            }
            .map(TrainedModel::Linear)
        }
        ModelKind::Cox => cox_fit(train, penalty, &opts.fit).map(TrainedModel::Cox),
        ModelKind::Cure => cmix_fit(train, penalty, MixtureMode::Cure, opts).map(TrainedModel::Mixture),
        ModelKind::Cmix => cmix_fit(train, penalty, MixtureMode::Cmix, opts).map(TrainedModel::Mixture),
    };
    fitted.map_err(|e| e.in_model(kind.label()))
}

/// AUC over the retained subjects at `epsilon` for the classifiers; C-index
/// restricted to `tau` for the survival models.
pub fn score_model(model: &TrainedModel, test: &[SurvivalRecord], epsilon: f64, tau: f64) -> Result<f64> {
    if model.kind().is_survival() {
        let outcomes: Vec<(f64, bool)> = test.iter().map(|r| (r.y, r.event)).collect();
        let markers = test.iter().map(|r| model.marker(&r.x)).collect::<Result<Vec<_>>>()?;
        c_index(&outcomes, &markers, tau)
    } else {
        let task = make_binary_labels(test, epsilon)?;
        let scores = task
            .retained
            .iter()
            .map(|&i| model.marker(&test[i].x))
            .collect::<Result<Vec<_>>>()?;
        auc(&task.labels, &scores)
    }
}

/// Whether a train/validation pair can be used for `kind` at all, regardless
/// of the penalty.
pub(crate) fn fold_usable(kind: ModelKind, train: &[SurvivalRecord], valid: &[SurvivalRecord], epsilon: f64) -> bool {
    if kind.is_survival() {
        let outcomes: Vec<(f64, bool)> = valid.iter().map(|r| (r.y, r.event)).collect();
        train.iter().any(|r| r.event) && c_index(&outcomes, &vec![0.0; valid.len()], f64::INFINITY).is_ok()
    } else {
        let two_classes = |rs: &[SurvivalRecord]| {
            make_binary_labels(rs, epsilon).is_ok_and(|t| t.labels.iter().any(|&l| l) && t.labels.iter().any(|&l| !l))
        };
        two_classes(train) && two_classes(valid)
    }
}
