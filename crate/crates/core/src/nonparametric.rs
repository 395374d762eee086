//! Kaplan–Meier curves with Greenwood bands, the Breslow cumulative baseline
//! hazard and the two-sample log-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::SurvivalRecord;
use crate::error::Result;

const Z_975: f64 = 1.959_963_984_540_054;

/// Right-continuous step estimate of a survival function.
///
/// `survival[k]` holds on `[times[k], times[k + 1])`; before `times[0]` the
/// curve equals 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub lower95: Option<Vec<f64>>,
    pub upper95: Option<Vec<f64>>,
}

impl StepSurvivalCurve {
    /// Curve identically equal to one.
    pub fn constant_one() -> Self {
        Self {
            times: Vec::new(),
            survival: Vec::new(),
            lower95: None,
            upper95: None,
        }
    }

    fn index_at(&self, t: f64) -> Option<usize> {
        // number of grid points <= t
        let k = self.times.partition_point(|&s| s <= t);
        k.checked_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.index_at(t).map_or(1.0, |k| self.survival[k])
    }

    /// `(lower, upper)` band at `t`, when bands were computed.
    pub fn band(&self, t: f64) -> Option<(f64, f64)> {
        let (lo, hi) = (self.lower95.as_ref()?, self.upper95.as_ref()?);
        Some(self.index_at(t).map_or((1.0, 1.0), |k| (lo[k], hi[k])))
    }

    /// CSV with columns `time,survival,lower95,upper95`, starting at time 0.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "survival", "lower95", "upper95"])?;
        let band = |k: usize| match (&self.lower95, &self.upper95) {
            (Some(lo), Some(hi)) => (lo[k].to_string(), hi[k].to_string()),
            _ => (String::new(), String::new()),
        };
        if self.times.first().map_or(true, |&t| t > 0.0) {
            w.write_record(["0", "1", "1", "1"])?;
        }
        for k in 0..self.times.len() {
            let (lo, hi) = band(k);
            w.write_record([self.times[k].to_string(), self.survival[k].to_string(), lo, hi])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per distinct event time: `(time, events, at_risk)`, with a censoring tied
/// to an event time still counted at risk.
fn event_table(outcomes: &[(f64, bool)]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<(f64, bool)> = outcomes.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut table = Vec::new();
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        let t = sorted[i].0;
        let mut j = i;
        let mut events = 0;
        while j < n && sorted[j].0 == t {
            events += usize::from(sorted[j].1);
            j += 1;
        }
        if events > 0 {
            table.push((t, events, n - i));
        }
        i = j;
    }
    table
}

/// Product-limit estimate with 95% log(-log) Greenwood bands.
pub fn kaplan_meier(outcomes: &[(f64, bool)]) -> StepSurvivalCurve {
    let table = event_table(outcomes);
    let mut times = Vec::with_capacity(table.len());
    let mut survival = Vec::with_capacity(table.len());
    let mut lower = Vec::with_capacity(table.len());
    let mut upper = Vec::with_capacity(table.len());
    let mut s = 1.0;
    let mut greenwood = 0.0;
    for (t, d, n) in table {
        s *= 1.0 - d as f64 / n as f64;
        times.push(t);
        survival.push(s);
        if d < n {
            greenwood += d as f64 / (n as f64 * (n - d) as f64);
        }
        if s <= 0.0 {
            lower.push(0.0);
            upper.push(0.0);
        } else {
            let se = greenwood.sqrt() / s.ln().abs();
            lower.push(s.powf((Z_975 * se).exp()).clamp(0.0, 1.0));
            upper.push(s.powf((-Z_975 * se).exp()).clamp(0.0, 1.0));
        }
    }
    StepSurvivalCurve {
        times,
        survival,
        lower95: Some(lower),
        upper95: Some(upper),
    }
}

/// Step estimate of the cumulative baseline hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl BaselineHazard {
    pub fn cumulative_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Baseline survival `exp(-Lambda_0(t))`.
    pub fn survival_at(&self, t: f64) -> f64 {
        (-self.cumulative_at(t)).exp()
    }
}

/// Breslow estimator from per-subject linear predictors `x_j' beta`.
pub fn breslow_from_linear_predictor(outcomes: &[(f64, bool)], linear: &[f64]) -> BaselineHazard {
    assert_eq!(outcomes.len(), linear.len());
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[a].0.total_cmp(&outcomes[b].0));
    // risk-set sums accumulated from the longest duration down
    let shift = linear.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let n = order.len();
    let mut tail = vec![0.0; n + 1];
    for k in (0..n).rev() {
        tail[k] = tail[k + 1] + (linear[order[k]] - shift).exp();
    }
    let mut times = Vec::new();
    let mut cumulative = Vec::new();
    let mut acc = 0.0;
    let mut k = 0;
    while k < n {
        let t = outcomes[order[k]].0;
        let mut j = k;
        let mut events = 0usize;
        while j < n && outcomes[order[j]].0 == t {
            events += usize::from(outcomes[order[j]].1);
            j += 1;
        }
        if events > 0 {
            acc += events as f64 / tail[k] * (-shift).exp();
            times.push(t);
            cumulative.push(acc);
        }
        k = j;
    }
    BaselineHazard { times, cumulative }
}

pub fn breslow_baseline(records: &[SurvivalRecord], beta: &[f64]) -> BaselineHazard {
    let outcomes: Vec<(f64, bool)> = records.iter().map(|r| (r.y, r.event)).collect();
    let linear: Vec<f64> = records
        .iter()
        .map(|r| r.x.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    breslow_from_linear_predictor(&outcomes, &linear)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Observed minus expected events in the first group.
    pub observed_minus_expected: f64,
    pub variance: f64,
}

/// Two-sample log-rank test, chi-square with one degree of freedom.
pub fn logrank_test(group_a: &[(f64, bool)], group_b: &[(f64, bool)]) -> LogRankResult {
    let pooled: Vec<(f64, bool, bool)> = group_a
        .iter()
        .map(|&(y, e)| (y, e, true))
        .chain(group_b.iter().map(|&(y, e)| (y, e, false)))
        .collect();
    let mut sorted = pooled;
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_total = sorted.len();
    let mut at_risk_a = group_a.len();
    let mut o_minus_e = 0.0;
    let mut variance = 0.0;
    let mut i = 0;
    while i < n_total {
        let t = sorted[i].0;
        let n = (n_total - i) as f64;
        let na = at_risk_a as f64;
        let (mut d, mut da, mut leaving_a) = (0usize, 0usize, 0usize);
        let mut j = i;
        while j < n_total && sorted[j].0 == t {
            let (_, e, in_a) = sorted[j];
            d += usize::from(e);
            da += usize::from(e && in_a);
            leaving_a += usize::from(in_a);
            j += 1;
        }
        if d > 0 {
            let d = d as f64;
            o_minus_e += da as f64 - d * na / n;
            if n > 1.0 {
                variance += na * (n - na) * d * (n - d) / (n * n * (n - 1.0));
            }
        }
        at_risk_a -= leaving_a;
        i = j;
    }
    if !(variance > 0.0) {
        return LogRankResult {
            statistic: 0.0,
            p_value: 1.0,
            observed_minus_expected: o_minus_e,
            variance: 0.0,
        };
    }
    let statistic = o_minus_e * o_minus_e / variance;
    let chi2 = ChiSquared::new(1.0).expect("valid degrees of freedom");
    LogRankResult {
        statistic,
        p_value: chi2.sf(statistic).clamp(0.0, 1.0),
        observed_minus_expected: o_minus_e,
        variance,
    }
}
