use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalRecord;
use crate::error::{Error, Result};
use crate::nonparametric::{breslow_from_linear_predictor, BaselineHazard};
use crate::optim::{fista_minimize, PenaltyConfig, SmoothObjective};
use crate::FitOptions;

/// Mean negative log partial likelihood with Breslow handling of ties.
pub struct CoxPartialLikelihood<'a> {
    x: ArrayView2<'a, f64>,
    events: Vec<bool>,
    /// Row indices grouped by tied duration, longest duration first.
    groups: Vec<Vec<usize>>,
}

impl<'a> CoxPartialLikelihood<'a> {
    pub fn new(x: ArrayView2<'a, f64>, outcomes: &[(f64, bool)]) -> Self {
        let mut order: Vec<usize> = (0..outcomes.len()).collect();
        order.sort_by(|&a, &b| outcomes[b].0.total_cmp(&outcomes[a].0));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if outcomes[g[0]].0 == outcomes[i].0 => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        Self {
            x,
            events: outcomes.iter().map(|o| o.1).collect(),
            groups,
        }
    }

    fn eval(&self, w: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let d = self.x.ncols();
        let eta = self.x.dot(&ArrayView1::from(w));
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = eta.len() as f64;
        let mut s0 = 0.0;
        let mut s1 = Array1::<f64>::zeros(d);
        let mut loss = 0.0;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for group in &self.groups {
            for &i in group {
                let e = (eta[i] - shift).exp();
                s0 += e;
                if grad.is_some() {
                    s1.scaled_add(e, &self.x.row(i));
                }
            }
            let log_s0 = shift + s0.ln();
            for &i in group.iter().filter(|&&i| self.events[i]) {
                loss -= eta[i] - log_s0;
                if let Some(g) = grad.as_deref_mut() {
                    for j in 0..d {
                        g[j] -= (self.x[[i, j]] - s1[j] / s0) / n;
                    }
                }
            }
        }
        loss / n
    }
}

impl SmoothObjective for CoxPartialLikelihood<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn has_intercept(&self) -> bool {
        false
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.eval(w, None)
    }

    fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(w, Some(grad))
    }
}

/// Elastic-Net Cox proportional hazards model with its Breslow baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    pub baseline: BaselineHazard,
    pub penalty: PenaltyConfig,
}

impl CoxModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }

    /// Risk marker `exp(x' beta)`.
    pub fn marker(&self, x: &[f64]) -> f64 {
        self.linear_predictor(x).exp()
    }

    pub fn importance(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.abs()).collect()
    }
}

pub(crate) fn design(records: &[SurvivalRecord]) -> Array2<f64> {
    let d = records.first().map_or(0, |r| r.x.len());
    Array2::from_shape_fn((records.len(), d), |(i, j)| records[i].x[j])
}

pub fn cox_fit(train: &[SurvivalRecord], penalty: PenaltyConfig, opts: &FitOptions) -> Result<CoxModel> {
    if !train.iter().any(|r| r.event) {
        return Err(Error::NoEvents);
    }
    let x = design(train);
    let outcomes: Vec<(f64, bool)> = train.iter().map(|r| (r.y, r.event)).collect();
    let f = CoxPartialLikelihood::new(x.view(), &outcomes);
    let res = fista_minimize(&f, &penalty, &vec![0.0; x.ncols()], opts.tol, opts.max_iter)?;
    if !res.converged {
        return Err(Error::NotConverged {
            iterations: res.iterations,
            trace_tail: res.trace_tail(),
        });
    }
    let beta = res.solution;
    let linear: Vec<f64> = x.dot(&ArrayView1::from(&beta)).to_vec();
    if linear.iter().any(|l| !l.exp().is_finite()) {
        return Err(Error::NonFinite {
            iteration: res.iterations,
        });
    }
    Ok(CoxModel {
        baseline: breslow_from_linear_predictor(&outcomes, &linear),
        beta,
        penalty,
    })
}

/// `S_0(t) ^ exp(x' beta)` with `S_0` the Breslow baseline survival.
pub fn cox_survival(model: &CoxModel, x: &[f64], t: f64) -> f64 {
    (-model.baseline.cumulative_at(t) * model.marker(x)).exp()
}
