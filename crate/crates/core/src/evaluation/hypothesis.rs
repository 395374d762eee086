//! Two-group hypothesis tests and the per-covariate testing battery.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{median, CovariateKind, Dataset};
use crate::error::{Error, Result};
use crate::nonparametric::logrank_test;

/// Unnormalised hypergeometric weights `C(r1, x) C(r2, c1 - x)` for every
/// feasible top-left cell `x`, starting at `lo`.
fn hypergeometric_weights(r1: u64, r2: u64, c1: u64) -> (u64, Vec<BigUint>) {
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let binom = |n: u64, k: u64| -> BigUint {
        let mut acc = BigUint::one();
        for i in 0..k {
            acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
        }
        acc
    };
    let mut weights = Vec::with_capacity((hi - lo + 1) as usize);
    // walk x upward with exact ratio updates
    let mut a = binom(r1, lo);
    let mut b = binom(r2, c1 - lo);
    for x in lo..=hi {
        weights.push(&a * &b);
        if x < hi {
            a = a * BigUint::from(r1 - x) / BigUint::from(x + 1);
            b = b * BigUint::from(c1 - x) / BigUint::from(r2 - (c1 - x) + 1);
        }
    }
    (lo, weights)
}

/// Two-sided Fisher exact p-value as an exact rational: the total probability
/// of tables (same margins) no more probable than the observed one.
pub fn fisher_exact_rational(table: [[u64; 2]; 2]) -> BigRational {
    let [[a, b], [c, d]] = table;
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return BigRational::one();
    }
    let (lo, weights) = hypergeometric_weights(r1, r2, c1);
    let observed = &weights[(a - lo) as usize];
    let mut tail = BigUint::zero();
    let mut total = BigUint::zero();
    for w in &weights {
        if w <= observed {
            tail += w;
        }
        total += w;
    }
    BigRational::new(BigInt::from(tail), BigInt::from(total))
}

pub fn fisher_exact(table: [[u64; 2]; 2]) -> f64 {
    fisher_exact_rational(table).to_f64().unwrap_or(1.0).clamp(0.0, 1.0)
}

/// Two-sided rank-sum test: normal approximation with tie-corrected variance
/// and continuity correction.
pub fn wilcoxon_rank_sum(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::InvalidArgument("rank-sum test needs two nonempty samples".into()));
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let mut pooled: Vec<(f64, bool)> = sample_a
        .iter()
        .map(|&v| (v, true))
        .chain(sample_b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = pooled.len();
    let mut rank_sum = 0.0;
    let mut tie_term = 0.0;
    let mut k = 0;
    while k < n {
        let mut end = k;
        while end < n && pooled[end].0 == pooled[k].0 {
            end += 1;
        }
        let t = (end - k) as f64;
        let mid = (k + 1 + end) as f64 / 2.0;
        rank_sum += mid * pooled[k..end].iter().filter(|p| p.1).count() as f64;
        tie_term += t * t * t - t;
        k = end;
    }
    let nf = n as f64;
    let mean = na * (nf + 1.0) / 2.0;
    let var = na * nb / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if !(var > 0.0) {
        return Ok(1.0);
    }
    let z = ((rank_sum - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * normal.sf(z)).clamp(0.0, 1.0))
}

/// Bonferroni-corrected p-values and rejection flags at level `alpha`.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> (Vec<f64>, Vec<bool>) {
    let m = p_values.len() as f64;
    let corrected: Vec<f64> = p_values.iter().map(|p| (p * m).min(1.0)).collect();
    let reject = corrected.iter().map(|&p| p < alpha).collect();
    (corrected, reject)
}

/// Named two-group split of the subjects; `None` leaves a subject out.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub name: String,
    pub membership: Vec<Option<bool>>,
}

/// Column of the test table that uses survival times rather than a grouping.
pub const LOGRANK_SCHEME: &str = "logrank";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub covariate: String,
    pub kind: CovariateKind,
    /// Constant covariate: every test skipped.
    pub degenerate: bool,
    /// One entry per scheme, in [`TestTable::schemes`] order.
    pub p_values: Vec<Option<f64>>,
    pub corrected: Vec<Option<f64>>,
    pub reject: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestTable {
    pub schemes: Vec<String>,
    pub alpha: f64,
    pub rows: Vec<TestRow>,
}

impl TestTable {
    /// Index of the row with the smallest corrected p-value in `scheme`.
    pub fn most_significant(&self, scheme: usize) -> Option<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.corrected[scheme].map(|p| (i, p, r.p_values[scheme].unwrap_or(1.0))))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)))
            .map(|(i, _, _)| i)
    }
}

/// Descriptive statistics of one covariate within one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub scheme: String,
    pub covariate: String,
    pub in_group: bool,
    pub count: usize,
    /// `[min, q1, median, q3, max]` for continuous covariates.
    pub five_numbers: Option<[f64; 5]>,
    /// Share of ones for binary covariates.
    pub proportion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryResult {
    pub table: TestTable,
    pub summaries: Vec<GroupSummary>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn five_numbers(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&v, q))
}

fn group_test(kind: CovariateKind, column: &[f64], membership: &[Option<bool>]) -> Result<Option<f64>> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (&v, g) in column.iter().zip(membership) {
        match g {
            Some(true) => a.push(v),
            Some(false) => b.push(v),
            None => {}
        }
    }
    Ok(Some(match kind {
        CovariateKind::Binary => {
            let ones = |s: &[f64]| s.iter().filter(|&&v| v == 1.0).count() as u64;
            let (a1, b1) = (ones(&a), ones(&b));
            fisher_exact([[a1, a.len() as u64 - a1], [b1, b.len() as u64 - b1]])
        }
        CovariateKind::Continuous => wilcoxon_rank_sum(&a, &b)?,
    }))
}

fn logrank_split(kind: CovariateKind, column: &[f64], outcomes: &[(f64, bool)]) -> Option<f64> {
    let cut = match kind {
        CovariateKind::Binary => 0.5,
        CovariateKind::Continuous => median(column),
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (&v, &o) in column.iter().zip(outcomes) {
        if v > cut {
            a.push(o);
        } else {
            b.push(o);
        }
    }
    if a.is_empty() || b.is_empty() {
        return None;
    }
    Some(logrank_test(&a, &b).p_value)
}

/// Per covariate: Fisher (binary) or rank-sum (continuous) across each
/// grouping, plus a log-rank test of survival between covariate levels
/// (median split for continuous covariates). Each scheme column is
/// Bonferroni-corrected over the covariates it tested.
pub fn group_test_battery(data: &Dataset, groupings: &[Grouping], alpha: f64) -> Result<BatteryResult> {
    let n = data.len();
    for g in groupings {
        if g.membership.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: g.membership.len(),
            });
        }
        let ones = g.membership.iter().filter(|m| **m == Some(true)).count();
        let zeros = g.membership.iter().filter(|m| **m == Some(false)).count();
        if ones == 0 || zeros == 0 {
            return Err(Error::InvalidData(format!("grouping `{}` has an empty group", g.name)));
        }
    }
    let outcomes = data.outcomes();
    let mut schemes: Vec<String> = groupings.iter().map(|g| g.name.clone()).collect();
    schemes.push(LOGRANK_SCHEME.to_string());
    let s = schemes.len();

    let mut rows = Vec::with_capacity(data.dim());
    let mut summaries = Vec::new();
    for j in 0..data.dim() {
        let column = data.column(j);
        let kind = data.kinds[j];
        let degenerate = column.iter().all(|&v| v == column[0]);
        let mut p_values = vec![None; s];
        if !degenerate {
            for (k, g) in groupings.iter().enumerate() {
                p_values[k] = group_test(kind, &column, &g.membership)?;
            }
            p_values[s - 1] = logrank_split(kind, &column, &outcomes);
        }
        for g in groupings {
            for in_group in [true, false] {
                let values: Vec<f64> = column
                    .iter()
                    .zip(&g.membership)
                    .filter(|(_, m)| **m == Some(in_group))
                    .map(|(v, _)| *v)
                    .collect();
                summaries.push(GroupSummary {
                    scheme: g.name.clone(),
                    covariate: data.names[j].clone(),
                    in_group,
                    count: values.len(),
                    five_numbers: (kind == CovariateKind::Continuous).then(|| five_numbers(&values)),
                    proportion: (kind == CovariateKind::Binary)
                        .then(|| values.iter().sum::<f64>() / values.len() as f64),
                });
            }
        }
        rows.push(TestRow {
            covariate: data.names[j].clone(),
            kind,
            degenerate,
            p_values,
            corrected: vec![None; s],
            reject: vec![false; s],
        });
    }
    for k in 0..s {
        let tested: Vec<(usize, f64)> = rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.p_values[k].map(|p| (i, p)))
            .collect();
        let raw: Vec<f64> = tested.iter().map(|t| t.1).collect();
        let (corrected, reject) = bonferroni(&raw, alpha);
        for ((i, _), (c, r)) in tested.iter().zip(corrected.into_iter().zip(reject)) {
            rows[*i].corrected[k] = Some(c);
            rows[*i].reject[k] = r;
        }
    }
    Ok(BatteryResult {
        table: TestTable { schemes, alpha, rows },
        summaries,
    })
}
