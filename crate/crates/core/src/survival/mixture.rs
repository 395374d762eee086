//! Two-group censored mixture of exponential durations with a logistic gate.
//!
//! In `cmix` mode both groups have a positive event rate; in `cure` mode the
//! low-risk group never experiences the event (rate pinned at zero).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cox::design;
use crate::binary::{sigmoid, softplus, LogisticLoss};
use crate::data::{median, SurvivalRecord};
use crate::error::{Error, Result};
use crate::nonparametric::{kaplan_meier, StepSurvivalCurve};
use crate::optim::{fista_minimize, PenaltyConfig};
use crate::FitOptions;

const COLLAPSE: f64 = 1e-12;
const MAX_RESTARTS: usize = 5;
/// Keeps the low rate strictly positive in cmix mode.
const RATE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureMode {
    Cmix,
    Cure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureOptions {
    pub fit: FitOptions,
    pub em_tol: f64,
    pub em_max_iter: usize,
    /// Seeds the perturbed restarts after a degenerate collapse.
    pub seed: u64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            em_tol: 1e-8,
            em_max_iter: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDurationModel {
    pub mode: MixtureMode,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub rate_high: f64,
    pub rate_low: f64,
    pub km_high: StepSurvivalCurve,
    pub km_low: StepSurvivalCurve,
    pub penalty: PenaltyConfig,
    /// Penalized observed-data log-likelihood after initialisation and after
    /// every EM iteration of the accepted run.
    #[serde(skip)]
    pub trace: Vec<f64>,
    #[serde(skip)]
    pub restarts: usize,
}

impl MixtureDurationModel {
    pub fn importance(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.abs()).collect()
    }

    /// Posterior probability of high-risk membership given the observed
    /// duration as well as the covariates.
    pub fn posterior_high(&self, record: &SurvivalRecord) -> f64 {
        let p = Params {
            beta: self.beta.clone(),
            intercept: self.intercept,
            rate_high: self.rate_high,
            rate_low: self.rate_low,
        };
        let eta = p.gate(&record.x);
        let (_, q) = p.point(self.mode, eta, record.y, record.event);
        q
    }
}

/// Probability of belonging to the high-risk group.
pub fn mixture_marker(model: &MixtureDurationModel, x: &[f64]) -> f64 {
    let eta: f64 = x.iter().zip(&model.beta).map(|(a, b)| a * b).sum::<f64>() + model.intercept;
    sigmoid(eta)
}

/// `pi(x) S_high(t) + (1 - pi(x)) S_low(t)` from the subgroup curves.
pub fn mixture_survival(model: &MixtureDurationModel, x: &[f64], t: f64) -> f64 {
    let pi = mixture_marker(model, x);
    let low = match model.mode {
        MixtureMode::Cure => 1.0,
        MixtureMode::Cmix => model.km_low.eval(t),
    };
    pi * model.km_high.eval(t) + (1.0 - pi) * low
}

#[derive(Debug, Clone)]
struct Params {
    beta: Vec<f64>,
    intercept: f64,
    rate_high: f64,
    rate_low: f64,
}

fn log_density(rate: f64, y: f64, event: bool) -> f64 {
    // rate^delta * exp(-rate * y)
    if event {
        if rate > 0.0 {
            rate.ln() - rate * y
        } else {
            f64::NEG_INFINITY
        }
    } else {
        -rate * y
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Params {
    fn gate(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>() + self.intercept
    }

    /// `(log L_i, q_i)` for one subject.
    fn point(&self, mode: MixtureMode, eta: f64, y: f64, event: bool) -> (f64, f64) {
        let low_rate = match mode {
            MixtureMode::Cure => 0.0,
            MixtureMode::Cmix => self.rate_low,
        };
        let high = -softplus(-eta) + log_density(self.rate_high, y, event);
        let low = -softplus(eta) + log_density(low_rate, y, event);
        let ll = log_add(high, low);
        (ll, (high - ll).exp())
    }

    /// Penalized mean log-likelihood and responsibilities.
    fn evaluate(&self, mode: MixtureMode, train: &[SurvivalRecord], penalty: &PenaltyConfig) -> (f64, Vec<f64>) {
        let mut total = 0.0;
        let q = train
            .iter()
            .map(|r| {
                let (ll, q) = self.point(mode, self.gate(&r.x), r.y, r.event);
                total += ll;
                q
            })
            .collect();
        (total / train.len() as f64 - penalty.value(&self.beta), q)
    }
}

fn initial_params(train: &[SurvivalRecord], mode: MixtureMode) -> Params {
    let ys: Vec<f64> = train.iter().map(|r| r.y).collect();
    let m = median(&ys);
    let rate = |keep: &dyn Fn(f64) -> bool| {
        let (events, exposure) = train
            .iter()
            .filter(|r| keep(r.y))
            .fold((0.0, 0.0), |(e, s), r| (e + f64::from(u8::from(r.event)), s + r.y));
        if exposure > 0.0 {
            events / exposure
        } else {
            0.0
        }
    };
    let overall = rate(&|_| true).max(f64::MIN_POSITIVE);
    let mut rate_high = rate(&|y| y <= m);
    let mut rate_low = rate(&|y| y > m);
    if !(rate_high > 0.0) {
        rate_high = 2.0 * overall;
    }
    match mode {
        MixtureMode::Cure => rate_low = 0.0,
        MixtureMode::Cmix => {
            if rate_high < rate_low {
                std::mem::swap(&mut rate_high, &mut rate_low);
            }
            rate_low = rate_low.max(0.01 * rate_high);
            if rate_low >= rate_high {
                rate_low = 0.5 * rate_high;
            }
        }
    }
    let below = ys.iter().filter(|&&y| y < m).count() as f64 / ys.len() as f64;
    let below = below.clamp(0.01, 0.99);
    Params {
        beta: vec![0.0; train[0].x.len()],
        intercept: (below / (1.0 - below)).ln(),
        rate_high,
        rate_low,
    }
}

fn perturb(p: &mut Params, rng: &mut ChaCha8Rng) {
    p.rate_high *= rng.random_range(0.5f64..2.0);
    if p.rate_low > 0.0 {
        p.rate_low *= rng.random_range(0.5f64..2.0);
        if p.rate_low >= p.rate_high {
            std::mem::swap(&mut p.rate_low, &mut p.rate_high);
        }
    }
    p.intercept += rng.random_range(-1.0..1.0);
    for b in &mut p.beta {
        *b = rng.random_range(-0.1..0.1);
    }
}

enum EmOutcome {
    Done(Params, Vec<f64>),
    Collapsed,
}

fn run_em(
    train: &[SurvivalRecord],
    x: &ndarray::Array2<f64>,
    mode: MixtureMode,
    penalty: &PenaltyConfig,
    opts: &MixtureOptions,
    mut p: Params,
) -> Result<EmOutcome> {
    let d = x.ncols();
    let events: Vec<f64> = train.iter().map(|r| f64::from(u8::from(r.event))).collect();
    let (mut objective, mut q) = p.evaluate(mode, train, penalty);
    let mut trace = vec![objective];
    for _ in 0..opts.em_max_iter {
        if q.iter().all(|&v| v < COLLAPSE) || q.iter().all(|&v| v > 1.0 - COLLAPSE) {
            return Ok(EmOutcome::Collapsed);
        }
        let (mut eh, mut sh, mut el, mut sl) = (0.0, 0.0, 0.0, 0.0);
        for ((r, &qi), &di) in train.iter().zip(&q).zip(&events) {
            eh += qi * di;
            sh += qi * r.y;
            el += (1.0 - qi) * di;
            sl += (1.0 - qi) * r.y;
        }
        p.rate_high = if sh > 0.0 { eh / sh } else { 0.0 };
        if mode == MixtureMode::Cmix {
            p.rate_low = if sl > 0.0 { (el / sl).max(RATE_FLOOR) } else { RATE_FLOOR };
            if p.rate_high < p.rate_low {
                std::mem::swap(&mut p.rate_high, &mut p.rate_low);
                q.iter_mut().for_each(|v| *v = 1.0 - *v);
                p.beta.iter_mut().for_each(|b| *b = -*b);
                p.intercept = -p.intercept;
            }
            if p.rate_high == p.rate_low {
                return Ok(EmOutcome::Collapsed);
            }
        }
        if !(p.rate_high > 0.0) {
            return Ok(EmOutcome::Collapsed);
        }

        let gate = LogisticLoss {
            x: x.view(),
            targets: &q,
            weights: None,
        };
        let mut init = p.beta.clone();
        init.push(p.intercept);
        let res = fista_minimize(&gate, penalty, &init, opts.fit.tol, opts.fit.max_iter)?;
        p.beta.copy_from_slice(&res.solution[..d]);
        p.intercept = res.solution[d];

        let previous = objective;
        (objective, q) = p.evaluate(mode, train, penalty);
        if !objective.is_finite() {
            return Err(Error::NonFinite {
                iteration: trace.len(),
            });
        }
        trace.push(objective);
        if (objective - previous).abs() <= opts.em_tol * previous.abs() {
            break;
        }
    }
    Ok(EmOutcome::Done(p, trace))
}

/// Generalized EM fit: closed-form rate updates and one penalized logistic
/// solve for the gate per iteration.
pub fn cmix_fit(
    train: &[SurvivalRecord],
    penalty: PenaltyConfig,
    mode: MixtureMode,
    opts: &MixtureOptions,
) -> Result<MixtureDurationModel> {
    if !train.iter().any(|r| r.event) {
        return Err(Error::NoEvents);
    }
    let x = design(train);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let base = initial_params(train, mode);
    let mut start = base.clone();
    for restarts in 0..=MAX_RESTARTS {
        if let EmOutcome::Done(p, trace) = run_em(train, &x, mode, &penalty, opts, start.clone())? {
            return Ok(finish(train, mode, penalty, p, trace, restarts));
        }
        log::warn!("mixture responsibilities collapsed; restarting ({})", restarts + 1);
        start = base.clone();
        perturb(&mut start, &mut rng);
    }
    Err(Error::DegenerateMixture {
        restarts: MAX_RESTARTS,
    })
}

fn finish(
    train: &[SurvivalRecord],
    mode: MixtureMode,
    penalty: PenaltyConfig,
    p: Params,
    trace: Vec<f64>,
    restarts: usize,
) -> MixtureDurationModel {
    let (mut high, mut low) = (Vec::new(), Vec::new());
    for r in train {
        if sigmoid(p.gate(&r.x)) > 0.5 {
            high.push((r.y, r.event));
        } else {
            low.push((r.y, r.event));
        }
    }
    let curve = |g: &[(f64, bool)]| {
        if g.is_empty() {
            StepSurvivalCurve::constant_one()
        } else {
            kaplan_meier(g)
        }
    };
    MixtureDurationModel {
        mode,
        km_high: curve(&high),
        km_low: match mode {
            MixtureMode::Cmix => curve(&low),
            MixtureMode::Cure => StepSurvivalCurve::constant_one(),
        },
        beta: p.beta,
        intercept: p.intercept,
        rate_high: p.rate_high,
        rate_low: match mode {
            MixtureMode::Cmix => p.rate_low,
            MixtureMode::Cure => 0.0,
        },
        penalty,
        trace,
        restarts,
    }
}
