use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binary::sigmoid;
use crate::data::{CovariateKind, Dataset, SurvivalRecord};
use crate::error::{Error, Result};

const CALIBRATION_STEPS: usize = 50;
const CALIBRATION_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub sparsity: usize,
    pub rate_high: f64,
    pub rate_low: f64,
    pub censor_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 400,
            d: 20,
            sparsity: 5,
            rate_high: 1.0 / 5.0,
            rate_low: 1.0 / 80.0,
            censor_rate: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("n and d must be positive".into()));
        }
        if self.sparsity > self.d {
            return Err(Error::InvalidArgument(format!("sparsity {} exceeds d = {}", self.sparsity, self.d)));
        }
        if !(self.rate_high > self.rate_low && self.rate_low > 0.0) || !self.rate_high.is_finite() {
            return Err(Error::InvalidArgument("need rate_high > rate_low > 0".into()));
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return Err(Error::InvalidArgument("censor_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Latent quantities behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub beta: Vec<f64>,
    /// `true` for the high-risk group.
    pub groups: Vec<bool>,
    pub event_times: Vec<f64>,
    /// Rate of the exponential censoring times (0 when uncensored).
    pub censoring_rate_param: f64,
    pub rate_high: f64,
    pub rate_low: f64,
}

impl SynthTruth {
    pub fn prob_high(&self, x: &[f64]) -> f64 {
        sigmoid(x.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }

    /// Generating survival function.
    pub fn survival(&self, x: &[f64], t: f64) -> f64 {
        let p = self.prob_high(x);
        p * (-self.rate_high * t).exp() + (1.0 - p) * (-self.rate_low * t).exp()
    }
}

/// Draws a two-group exponential mixture with a sparse logistic gate and
/// independent exponential censoring tuned to the requested fraction.
pub fn synth_generate(config: &SynthConfig) -> Result<(Dataset, SynthTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let beta: Vec<f64> = (0..config.d)
        .map(|j| match j {
            j if j >= config.sparsity => 0.0,
            j if j % 2 == 0 => 1.0,
            _ => -1.0,
        })
        .collect();
    let mut xs = Vec::with_capacity(config.n);
    let mut groups = Vec::with_capacity(config.n);
    let mut times = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let x: Vec<f64> = (0..config.d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let high = rng.random::<f64>() < sigmoid(eta);
        let rate = if high { config.rate_high } else { config.rate_low };
        let e: f64 = Exp1.sample(&mut rng);
        xs.push(x);
        groups.push(high);
        times.push(e / rate);
    }
    // unit exponentials shared by every candidate rate keep the censored
    // fraction monotone in the rate
    let unit: Vec<f64> = (0..config.n).map(|_| Exp1.sample(&mut rng)).collect();
    let censored_fraction =
        |c: f64| unit.iter().zip(&times).filter(|(u, t)| *u / c < **t).count() as f64 / config.n as f64;

    let c = if config.censor_rate == 0.0 {
        0.0
    } else {
        let target = config.censor_rate;
        let mut hi = config.rate_low;
        while censored_fraction(hi) < target {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Calibration { target, achieved: 1.0 });
            }
        }
        let mut lo = 0.0;
        let mut best = (hi, censored_fraction(hi));
        for _ in 0..CALIBRATION_STEPS {
            if (best.1 - target).abs() <= CALIBRATION_TOL * 0.5 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let f = censored_fraction(mid);
            if (f - target).abs() < (best.1 - target).abs() {
                best = (mid, f);
            }
            if f < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (best.1 - target).abs() > CALIBRATION_TOL {
            return Err(Error::Calibration { target, achieved: best.1 });
        }
        best.0
    };

    let records = xs
        .into_iter()
        .zip(&times)
        .zip(&unit)
        .map(|((x, &t), &u)| {
            let censor = if c > 0.0 { u / c } else { f64::INFINITY };
            SurvivalRecord::new(t.min(censor), t <= censor, x)
        })
        .collect::<Result<Vec<_>>>()?;
    let names = (0..config.d).map(|j| format!("x{j}")).collect();
    let data = Dataset::new(records, names, vec![CovariateKind::Continuous; config.d])?;
    Ok((
        data,
        SynthTruth {
            beta,
            groups,
            event_times: times,
            censoring_rate_param: c,
            rate_high: config.rate_high,
            rate_low: config.rate_low,
        },
    ))
}

/// Type-7 quantile of the observed durations.
pub fn duration_quantile(data: &Dataset, q: f64) -> f64 {
    let mut y: Vec<f64> = data.records.iter().map(|r| r.y).collect();
    y.sort_by(f64::total_cmp);
    let h = (y.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    y[lo] + (h - lo as f64) * (y[hi] - y[lo])
}
