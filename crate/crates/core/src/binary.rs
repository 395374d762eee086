//! Binary-outcome setting: horizon labels and penalized linear classifiers.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalRecord;
use crate::error::{Error, Result};
use crate::optim::{fista_minimize, PenaltyConfig, SmoothObjective};
use crate::FitOptions;

/// Subjects usable at horizon `epsilon`, with their labels.
///
/// A censored subject whose duration does not reach the horizon cannot be
/// labelled and is excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryTask {
    pub epsilon: f64,
    pub labels: Vec<bool>,
    pub retained: Vec<usize>,
    pub excluded: Vec<usize>,
}

impl BinaryTask {
    /// Label per original index, `None` when excluded.
    pub fn label_of(&self, n: usize) -> Vec<Option<bool>> {
        let mut out = vec![None; n];
        for (&i, &l) in self.retained.iter().zip(&self.labels) {
            out[i] = Some(l);
        }
        out
    }
}

pub fn make_binary_labels_from_outcomes(outcomes: &[(f64, bool)], epsilon: f64) -> Result<BinaryTask> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let mut task = BinaryTask {
        epsilon,
        labels: Vec::new(),
        retained: Vec::new(),
        excluded: Vec::new(),
    };
    for (i, &(y, event)) in outcomes.iter().enumerate() {
        if !event && y <= epsilon {
            task.excluded.push(i);
        } else {
            task.retained.push(i);
            task.labels.push(event && y <= epsilon);
        }
    }
    if task.retained.is_empty() {
        return Err(Error::AllExcluded);
    }
    Ok(task)
}

pub fn make_binary_labels(records: &[SurvivalRecord], epsilon: f64) -> Result<BinaryTask> {
    let outcomes: Vec<(f64, bool)> = records.iter().map(|r| (r.y, r.event)).collect();
    make_binary_labels_from_outcomes(&outcomes, epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Svm,
    Cox,
    Cure,
    Cmix,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Logistic,
        ModelKind::Svm,
        ModelKind::Cox,
        ModelKind::Cure,
        ModelKind::Cmix,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Logistic => "LR",
            ModelKind::Svm => "SVM",
            ModelKind::Cox => "Cox PH",
            ModelKind::Cure => "CURE",
            ModelKind::Cmix => "C-mix",
        }
    }

    pub fn is_survival(&self) -> bool {
        matches!(self, ModelKind::Cox | ModelKind::Cure | ModelKind::Cmix)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" | "lr" => Ok(ModelKind::Logistic),
            "svm" => Ok(ModelKind::Svm),
            "cox" => Ok(ModelKind::Cox),
            "cure" => Ok(ModelKind::Cure),
            "cmix" | "c-mix" => Ok(ModelKind::Cmix),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

/// Coefficients and intercept of a penalized linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLinearModel {
    pub kind: ModelKind,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub penalty: PenaltyConfig,
}

impl FittedLinearModel {
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                actual: x.len(),
            });
        }
        Ok(x.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
    }

    /// Absolute coefficients.
    pub fn importance(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.abs()).collect()
    }
}

/// Risk score: probability for logistic regression, decision value for the
/// SVM. Larger means higher risk.
pub fn predict_score(model: &FittedLinearModel, x: &[f64]) -> Result<f64> {
    let eta = model.linear_predictor(x)?;
    Ok(match model.kind {
        ModelKind::Logistic => sigmoid(eta),
        _ => eta,
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn linear_scores(x: ArrayView2<f64>, w: &[f64]) -> Array1<f64> {
    let d = x.ncols();
    x.dot(&ArrayView1::from(&w[..d])) + w[d]
}

/// Mean (optionally weighted) Bernoulli negative log-likelihood of
/// `sigmoid(x' beta + b)`; targets may be soft labels in `[0, 1]`.
pub struct LogisticLoss<'a> {
    pub x: ArrayView2<'a, f64>,
    pub targets: &'a [f64],
    pub weights: Option<&'a [f64]>,
}

impl SmoothObjective for LogisticLoss<'_> {
    fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    fn has_intercept(&self) -> bool {
        true
    }

    fn value(&self, w: &[f64]) -> f64 {
        let eta = linear_scores(self.x, w);
        let n = self.targets.len() as f64;
        eta.iter()
            .zip(self.targets)
            .enumerate()
            .map(|(i, (&e, &t))| self.weights.map_or(1.0, |wt| wt[i]) * (softplus(e) - t * e))
            .sum::<f64>()
            / n
    }

    fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let eta = linear_scores(self.x, w);
        let n = self.targets.len() as f64;
        let mut loss = 0.0;
        let mut resid = Array1::zeros(eta.len());
        for (i, (&e, &t)) in eta.iter().zip(self.targets).enumerate() {
            let wt = self.weights.map_or(1.0, |wt| wt[i]);
            loss += wt * (softplus(e) - t * e);
            resid[i] = wt * (sigmoid(e) - t) / n;
        }
        let d = self.x.ncols();
        let g = self.x.t().dot(&resid);
        grad[..d].copy_from_slice(g.as_slice().expect("contiguous"));
        grad[d] = resid.sum();
        loss / n
    }
}

/// Mean squared hinge loss `max(0, 1 - s (x' beta + b))^2` with `s = +-1`.
pub struct SquaredHingeLoss<'a> {
    pub x: ArrayView2<'a, f64>,
    pub signs: &'a [f64],
    pub weights: Option<&'a [f64]>,
}

impl SmoothObjective for SquaredHingeLoss<'_> {
    fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    fn has_intercept(&self) -> bool {
        true
    }

    fn value(&self, w: &[f64]) -> f64 {
        let eta = linear_scores(self.x, w);
        let n = self.signs.len() as f64;
        eta.iter()
            .zip(self.signs)
            .enumerate()
            .map(|(i, (&e, &s))| self.weights.map_or(1.0, |wt| wt[i]) * (1.0 - s * e).max(0.0).powi(2))
            .sum::<f64>()
            / n
    }

    fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let eta = linear_scores(self.x, w);
        let n = self.signs.len() as f64;
        let mut loss = 0.0;
        let mut resid = Array1::zeros(eta.len());
        for (i, (&e, &s)) in eta.iter().zip(self.signs).enumerate() {
            let wt = self.weights.map_or(1.0, |wt| wt[i]);
            let m = (1.0 - s * e).max(0.0);
            loss += wt * m * m;
            resid[i] = -2.0 * wt * m * s / n;
        }
        let d = self.x.ncols();
        let g = self.x.t().dot(&resid);
        grad[..d].copy_from_slice(g.as_slice().expect("contiguous"));
        grad[d] = resid.sum();
        loss / n
    }
}

fn check_classes(x: ArrayView2<f64>, labels: &[bool]) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Inverse class-frequency weights normalised to mean one.
fn balanced_weights(labels: &[bool]) -> Vec<f64> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    labels
        .iter()
        .map(|&l| if l { n / (2.0 * pos) } else { n / (2.0 * (n - pos)) })
        .collect()
}

fn solve<F: SmoothObjective>(
    kind: ModelKind,
    f: &F,
    penalty: PenaltyConfig,
    opts: &FitOptions,
) -> Result<FittedLinearModel> {
    let init = vec![0.0; f.dim()];
    let res = fista_minimize(f, &penalty, &init, opts.tol, opts.max_iter)?;
    if !res.converged {
        log::warn!(
            "{} solver stopped at max_iter={} (objective {:.6e})",
            kind.label(),
            opts.max_iter,
            res.objective()
        );
    }
    let d = f.dim() - 1;
    Ok(FittedLinearModel {
        kind,
        beta: res.solution[..d].to_vec(),
        intercept: res.solution[d],
        penalty,
    })
}

/// Elastic-Net penalized logistic regression.
pub fn logistic_fit(
    x: ArrayView2<f64>,
    labels: &[bool],
    penalty: PenaltyConfig,
    opts: &FitOptions,
) -> Result<FittedLinearModel> {
    check_classes(x, labels)?;
    let targets: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let weights = opts.balance_classes.then(|| balanced_weights(labels));
    let f = LogisticLoss {
        x,
        targets: &targets,
        weights: weights.as_deref(),
    };
    solve(ModelKind::Logistic, &f, penalty, opts)
}

/// Elastic-Net penalized linear SVM with squared hinge loss.
pub fn svm_fit(
    x: ArrayView2<f64>,
    labels: &[bool],
    penalty: PenaltyConfig,
    opts: &FitOptions,
) -> Result<FittedLinearModel> {
    check_classes(x, labels)?;
    let signs: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let weights = opts.balance_classes.then(|| balanced_weights(labels));
    let f = SquaredHingeLoss {
        x,
        signs: &signs,
        weights: weights.as_deref(),
    };
    solve(ModelKind::Svm, &f, penalty, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::kkt_violation;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(y: f64, event: bool) -> SurvivalRecord {
        SurvivalRecord::new(y, event, vec![]).unwrap()
    }

    #[test]
    fn horizon_labels() {
        let recs = vec![rec(10.0, true), rec(40.0, false), rec(10.0, false), rec(30.0, true), rec(31.0, true)];
        let task = make_binary_labels(&recs, 30.0).unwrap();
        assert_eq!(task.retained, vec![0, 1, 3, 4]);
        assert_eq!(task.excluded, vec![2]);
        assert_eq!(task.labels, vec![true, false, true, false]);
        assert_eq!(task.label_of(5)[2], None);
    }

    #[test]
    fn all_excluded_is_error() {
        assert!(matches!(make_binary_labels(&[rec(1.0, false)], 30.0), Err(Error::AllExcluded)));
        assert!(make_binary_labels(&[rec(1.0, true)], 0.0).is_err());
    }

    fn random_problem(seed: u64, n: usize, d: usize) -> (Array2<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let labels = x
            .rows()
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().enumerate().map(|(j, v)| v * (1.0 - 0.5 * j as f64)).sum();
                rng.random::<f64>() < sigmoid(s)
            })
            .collect();
        (x, labels)
    }

    #[test]
    fn separable_data_stays_finite() {
        let x = Array2::from_shape_vec((6, 1), vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        let labels = [false, false, false, true, true, true];
        let m = logistic_fit(x.view(), &labels, PenaltyConfig::new(0.01, 0.1).unwrap(), &FitOptions::default()).unwrap();
        assert!(m.beta[0].is_finite() && m.beta[0] > 0.0 && m.beta[0] < 100.0);
    }

    #[test]
    fn no_signal_gives_near_zero() {
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        let labels = [true, false, true, false];
        let m = logistic_fit(x.view(), &labels, PenaltyConfig::new(0.0, 0.1).unwrap(), &FitOptions::default()).unwrap();
        assert!(m.beta[0].abs() < 1e-4 && m.intercept.abs() < 1e-4);
    }

    #[test]
    fn single_class_is_error() {
        let x = Array2::zeros((3, 2));
        let p = PenaltyConfig::new(0.1, 0.1).unwrap();
        assert!(matches!(logistic_fit(x.view(), &[true; 3], p, &FitOptions::default()), Err(Error::SingleClass)));
        assert!(matches!(svm_fit(x.view(), &[false; 3], p, &FitOptions::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn svm_separates_far_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40;
        let x = Array2::from_shape_fn((n, 2), |(i, _)| {
            let centre = if i < n / 2 { -5.0 } else { 5.0 };
            centre + rng.random_range(-1.0..1.0)
        });
        let labels: Vec<bool> = (0..n).map(|i| i >= n / 2).collect();
        let m = svm_fit(x.view(), &labels, PenaltyConfig::new(1e-3, 0.1).unwrap(), &FitOptions::default()).unwrap();
        let correct = (0..n)
            .filter(|&i| (predict_score(&m, &x.row(i).to_vec()).unwrap() > 0.0) == labels[i])
            .count();
        assert_eq!(correct, n);
    }

    #[test]
    fn huge_penalty_zeroes_both_models() {
        let (x, labels) = random_problem(4, 60, 3);
        let p = PenaltyConfig::new(1e4, 0.1).unwrap();
        for m in [
            logistic_fit(x.view(), &labels, p, &FitOptions::default()).unwrap(),
            svm_fit(x.view(), &labels, p, &FitOptions::default()).unwrap(),
        ] {
            assert!(m.beta.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn fits_satisfy_kkt() {
        for seed in 0..5 {
            let (x, labels) = random_problem(seed, 120, 6);
            let p = PenaltyConfig::new(0.02, 0.1).unwrap();
            let opts = FitOptions::default();
            let lr = logistic_fit(x.view(), &labels, p, &opts).unwrap();
            let targets: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
            let f = LogisticLoss { x: x.view(), targets: &targets, weights: None };
            let mut w = lr.beta.clone();
            w.push(lr.intercept);
            let mut g = vec![0.0; 7];
            f.value_and_gradient(&w, &mut g);
            assert!(kkt_violation(&g, &w, &p, 6) < 1e-4);

            let svm = svm_fit(x.view(), &labels, p, &opts).unwrap();
            let signs: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
            let f = SquaredHingeLoss { x: x.view(), signs: &signs, weights: None };
            let mut w = svm.beta.clone();
            w.push(svm.intercept);
            f.value_and_gradient(&w, &mut g);
            assert!(kkt_violation(&g, &w, &p, 6) < 1e-4);
        }
    }

    #[test]
    fn score_examples() {
        let p = PenaltyConfig::new(0.0, 0.1).unwrap();
        let zero = FittedLinearModel { kind: ModelKind::Logistic, beta: vec![0.0; 3], intercept: 0.0, penalty: p };
        assert_eq!(predict_score(&zero, &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        let m = FittedLinearModel { kind: ModelKind::Logistic, beta: vec![0.5, -1.0, 2.0], intercept: 0.25, penalty: p };
        // 0.5*1.2 - 1.0*(-0.4) + 2.0*0.1 + 0.25 = 1.45
        let s = predict_score(&m, &[1.2, -0.4, 0.1]).unwrap();
        assert!((s - 1.0 / (1.0 + (-1.45f64).exp())).abs() < 1e-15);
        assert!(matches!(predict_score(&m, &[1.0]), Err(Error::DimensionMismatch { .. })));
        let svm = FittedLinearModel { kind: ModelKind::Svm, ..m };
        assert!((predict_score(&svm, &[1.2, -0.4, 0.1]).unwrap() - 1.45).abs() < 1e-15);
    }

    #[test]
    fn balanced_weights_average_one() {
        let w = balanced_weights(&[true, false, false, false]);
        assert!((w.iter().sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
        assert!(w[0] > w[1]);
    }
}
