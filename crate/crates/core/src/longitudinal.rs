//! Fixed-length covariates from irregular per-subject time series.
//!
//! Times are hours relative to discharge (so usually `<= 0`); the window keeps
//! points with `t >= -window_hours`.

use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_HOURS: f64 = 48.0;
pub const DEFAULT_COVERAGE: f64 = 0.5;
const JITTER: f64 = 1e-10;
const GP_STARTS: usize = 8;
const GP_MAX_EVALS: usize = 500;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl LongitudinalSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidData(
                "series needs equal-length, nonempty times and values".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidData("series times must be strictly increasing".into()));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("series contains non-finite values".into()));
        }
        Ok(Self { times, values })
    }

    /// Sorts by time and averages measurements sharing a timestamp.
    pub fn from_unsorted(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut times, mut values): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        let mut k = 0;
        while k < points.len() {
            let mut end = k;
            while end < points.len() && points[end].0 == points[k].0 {
                end += 1;
            }
            times.push(points[k].0);
            values.push(points[k..end].iter().map(|p| p.1).sum::<f64>() / (end - k) as f64);
            k = end;
        }
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn window(&self, window_hours: f64) -> (Vec<f64>, Vec<f64>) {
        self.times
            .iter()
            .zip(&self.values)
            .filter(|(&t, _)| t >= -window_hours)
            .map(|(&t, &v)| (t, v))
            .unzip()
    }
}

/// Ordinary least squares `(slope, intercept)`; `None` with fewer than two
/// distinct times.
pub fn ols_line(times: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    let n = times.len() as f64;
    if times.len() < 2 {
        return None;
    }
    let tm = times.iter().sum::<f64>() / n;
    let vm = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in times.iter().zip(values) {
        sxy += (t - tm) * (v - vm);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, vm - slope * tm))
}

/// In-window mean and OLS slope (per hour); each is `None` when undefined.
pub fn window_mean_slope(series: &LongitudinalSeries, window_hours: f64) -> (Option<f64>, Option<f64>) {
    let (t, v) = series.window(window_hours);
    if t.is_empty() {
        return (None, None);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (Some(mean), ols_line(&t, &v).map(|l| l.0))
}

/// Value at the latest timestamp.
pub fn last_value(series: &LongitudinalSeries) -> f64 {
    *series.values.last().expect("series is nonempty by construction")
}

/// Concepts measured at least once for strictly more than `threshold` of the
/// subjects, sorted by name.
pub fn coverage_filter(
    all_series: &BTreeMap<String, BTreeMap<String, LongitudinalSeries>>,
    threshold: f64,
) -> Vec<String> {
    let n = all_series.len() as f64;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for concepts in all_series.values() {
        for (c, s) in concepts {
            if !s.is_empty() {
                *counts.entry(c.as_str()).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|&(_, k)| k as f64 / n > threshold)
        .map(|(c, _)| c.to_string())
        .collect()
}

/// Hyper-parameters of a GP with linear mean and constant + RBF + white kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPHyperParams {
    pub const_var: f64,
    pub rbf_var: f64,
    pub rbf_len: f64,
    pub noise_var: f64,
    pub mean_slope: f64,
    pub mean_intercept: f64,
}

/// Log-scale kernel parameters `(const_var, rbf_var, rbf_len, noise_var)`.
impl GPHyperParams {
    pub fn log_kernel(&self) -> [f64; 4] {
        [self.const_var.ln(), self.rbf_var.ln(), self.rbf_len.ln(), self.noise_var.ln()]
    }

    pub fn with_log_kernel(&self, theta: &[f64; 4]) -> Self {
        Self {
            const_var: theta[0].exp(),
            rbf_var: theta[1].exp(),
            rbf_len: theta[2].exp(),
            noise_var: theta[3].exp(),
            ..*self
        }
    }
}

fn kernel_matrix(times: &[f64], p: &GPHyperParams) -> DMatrix<f64> {
    let m = times.len();
    DMatrix::from_fn(m, m, |i, j| {
        let d = times[i] - times[j];
        let mut k = p.const_var + p.rbf_var * (-d * d / (2.0 * p.rbf_len * p.rbf_len)).exp();
        if i == j {
            k += p.noise_var + JITTER;
        }
        k
    })
}

fn residuals(times: &[f64], values: &[f64], p: &GPHyperParams) -> DVector<f64> {
    DVector::from_iterator(
        times.len(),
        times
            .iter()
            .zip(values)
            .map(|(t, v)| v - (p.mean_slope * t + p.mean_intercept)),
    )
}

/// Log marginal likelihood of the residuals around the linear mean; `None`
/// when the kernel matrix is not numerically positive definite.
pub fn gp_log_marginal_likelihood(times: &[f64], values: &[f64], p: &GPHyperParams) -> Option<f64> {
    let r = residuals(times, values, p);
    let chol = kernel_matrix(times, p).cholesky()?;
    let alpha = chol.solve(&r);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let value = -0.5 * r.dot(&alpha) - 0.5 * log_det - 0.5 * times.len() as f64 * LN_2PI;
    value.is_finite().then_some(value)
}

/// Gradient of the log marginal likelihood with respect to the logs of
/// `(const_var, rbf_var, rbf_len, noise_var)`.
pub fn gp_log_marginal_likelihood_grad(times: &[f64], values: &[f64], p: &GPHyperParams) -> Option<[f64; 4]> {
    let m = times.len();
    let r = residuals(times, values, p);
    let chol = kernel_matrix(times, p).cholesky()?;
    let alpha = chol.solve(&r);
    let k_inv = chol.inverse();
    let inner = &alpha * alpha.transpose() - k_inv;
    let mut grad = [0.0; 4];
    for i in 0..m {
        for j in 0..m {
            let d = times[i] - times[j];
            let rbf = p.rbf_var * (-d * d / (2.0 * p.rbf_len * p.rbf_len)).exp();
            let w = inner[(i, j)];
            grad[0] += w * p.const_var;
            grad[1] += w * rbf;
            grad[2] += w * rbf * d * d / (p.rbf_len * p.rbf_len);
            if i == j {
                grad[3] += w * p.noise_var;
            }
        }
    }
    Some(grad.map(|g| 0.5 * g))
}

/// Minimises `f` with the Nelder–Mead simplex method, stopping after
/// `max_evals` evaluations. Returns the best point and value.
fn nelder_mead<const N: usize>(f: impl Fn(&[f64; N]) -> f64, start: [f64; N], step: f64, max_evals: usize) -> ([f64; N], f64) {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for k in 0..N {
        let mut p = start;
        p[k] += step;
        simplex.push((p, f(&p)));
    }
    let mut evals = N + 1;
    let combine = |a: &[f64; N], b: &[f64; N], t: f64| -> [f64; N] {
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = a[k] + t * (b[k] - a[k]);
        }
        out
    };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[N].1;
        if (worst - best).abs() <= 1e-10 * (best.abs() + 1e-10) {
            break;
        }
        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for k in 0..N {
                centroid[k] += p[k] / N as f64;
            }
        }
        let xw = simplex[N].0;
        let xr = combine(&centroid, &xw, -1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = combine(&centroid, &xw, -2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = combine(&centroid, &xr, 0.5);
                (xc, f(&xc))
            } else {
                let xc = combine(&centroid, &xw, 0.5);
                (xc, f(&xc))
            };
            evals += 1;
            if fc < worst.min(fr) {
                simplex[N] = (xc, fc);
            } else {
                let x0 = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    v.0 = combine(&x0, &v.0, 0.5);
                    v.1 = f(&v.0);
                }
                evals += N;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Per-start outcome of [`gp_fit_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct GpStart {
    pub initial: GPHyperParams,
    pub initial_value: Option<f64>,
    pub fitted: GPHyperParams,
    pub fitted_value: Option<f64>,
}

/// Multi-start maximum-likelihood fit. The linear mean is fixed by OLS first;
/// kernel parameters are then optimised on a log scale from log-uniform
/// starts. `None` when fewer than three in-window points remain or every start
/// fails.
pub fn gp_fit(series: &LongitudinalSeries, window_hours: f64, seed: u64) -> Option<GPHyperParams> {
    let starts = gp_fit_detailed(series, window_hours, seed)?;
    starts
        .into_iter()
        .filter_map(|s| s.fitted_value.map(|v| (s.fitted, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p)
}

pub fn gp_fit_detailed(series: &LongitudinalSeries, window_hours: f64, seed: u64) -> Option<Vec<GpStart>> {
    let (t, v) = series.window(window_hours);
    if t.len() < 3 {
        return None;
    }
    let (slope, intercept) = ols_line(&t, &v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.random_range(lo.ln()..hi.ln());
    let base = GPHyperParams {
        const_var: 1.0,
        rbf_var: 1.0,
        rbf_len: 1.0,
        noise_var: 1.0,
        mean_slope: slope,
        mean_intercept: intercept,
    };
    // Length-scales below the sampling resolution are indistinguishable from
    // white noise, so the length-scale is kept above the median gap.
    let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let min_log_len = gaps[gaps.len() / 2].ln();
    let objective = |theta: &[f64; 4]| {
        if theta.iter().any(|x| !(-30.0..=15.0).contains(x)) || theta[2] < min_log_len {
            return f64::INFINITY;
        }
        gp_log_marginal_likelihood(&t, &v, &base.with_log_kernel(theta)).map_or(f64::INFINITY, |l| -l)
    };
    let mut out = Vec::with_capacity(GP_STARTS);
    for _ in 0..GP_STARTS {
        let theta0 = [
            log_uniform(&mut rng, 1e-3, 1e1),
            log_uniform(&mut rng, 1e-3, 1e1),
            log_uniform(&mut rng, 1.0, 96.0).max(min_log_len),
            log_uniform(&mut rng, 1e-3, 1e1),
        ];
        let f0 = objective(&theta0);
        let (theta, fval) = nelder_mead(objective, theta0, 1.0, GP_MAX_EVALS);
        let finite = |x: f64| x.is_finite().then_some(-x);
        out.push(GpStart {
            initial: base.with_log_kernel(&theta0),
            initial_value: finite(f0),
            fitted: base.with_log_kernel(&theta),
            fitted_value: finite(fval),
        });
    }
    Some(out)
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Per-series seed from the subject, the concept and the run seed.
pub fn series_seed(subject: &str, concept: &str, run_seed: u64) -> u64 {
    let mut key = Vec::with_capacity(subject.len() + concept.len() + 1);
    key.extend_from_slice(subject.as_bytes());
    key.push(0);
    key.extend_from_slice(concept.as_bytes());
    // splitmix64 finaliser
    let mut z = fnv1a(&key) ^ run_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub type SeriesMap = BTreeMap<String, BTreeMap<String, LongitudinalSeries>>;

/// Reads long-format rows `subject_id,concept,time_hours,value`.
pub fn read_long_csv<R: Read>(reader: R) -> Result<SeriesMap> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidData(format!("missing required column `{name}`")))
    };
    let (cs, cc, ct, cv) = (col("subject_id")?, col("concept")?, col("time_hours")?, col("value")?);
    let mut points: BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| {
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidData(format!("line {}: cannot parse `{}`", i + 2, &rec[c])))
        };
        let (t, v) = (parse(ct)?, parse(cv)?);
        points
            .entry(rec[cs].trim().to_string())
            .or_default()
            .entry(rec[cc].trim().to_string())
            .or_default()
            .push((t, v));
    }
    points
        .into_iter()
        .map(|(s, concepts)| {
            let concepts = concepts
                .into_iter()
                .map(|(c, pts)| Ok((c, LongitudinalSeries::from_unsorted(pts)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok((s, concepts))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    pub window_hours: f64,
    pub coverage: f64,
    pub seed: u64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            window_hours: DEFAULT_WINDOW_HOURS,
            coverage: DEFAULT_COVERAGE,
            seed: 0,
        }
    }
}

/// Wide feature table, one row per subject; `None` cells are missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub subjects: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

const PER_CONCEPT: usize = 8;

fn concept_features(series: Option<&LongitudinalSeries>, opts: &FeatureOptions, seed: u64) -> [Option<f64>; PER_CONCEPT] {
    let Some(s) = series else {
        return [None; PER_CONCEPT];
    };
    let (mean, slope) = window_mean_slope(s, opts.window_hours);
    let gp = gp_fit(s, opts.window_hours, seed);
    [
        mean,
        slope,
        Some(last_value(s)),
        gp.map(|g| g.const_var),
        gp.map(|g| g.rbf_var),
        gp.map(|g| g.rbf_len),
        gp.map(|g| g.noise_var),
        gp.map(|g| g.mean_slope),
    ]
}

pub fn extract_features(all_series: &SeriesMap, opts: &FeatureOptions) -> Result<FeatureMatrix> {
    if !(opts.coverage > 0.0 && opts.coverage < 1.0) {
        return Err(Error::InvalidArgument(format!("coverage must lie in (0, 1), got {}", opts.coverage)));
    }
    if !(opts.window_hours > 0.0) {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let concepts = coverage_filter(all_series, opts.coverage);
    let w = opts.window_hours;
    let columns = concepts
        .iter()
        .flat_map(|c| {
            [
                format!("{c}__mean{w}"),
                format!("{c}__slope{w}"),
                format!("{c}__last"),
                format!("{c}__gp_constvar"),
                format!("{c}__gp_rbfvar"),
                format!("{c}__gp_rbflen"),
                format!("{c}__gp_noisevar"),
                format!("{c}__gp_meanslope"),
            ]
        })
        .collect();
    let jobs: Vec<(&String, &BTreeMap<String, LongitudinalSeries>)> = all_series.iter().collect();
    let row = |(subject, by_concept): &(&String, &BTreeMap<String, LongitudinalSeries>)| -> Vec<Option<f64>> {
        concepts
            .iter()
            .flat_map(|c| concept_features(by_concept.get(c), opts, series_seed(subject, c, opts.seed)))
            .collect()
    };
    #[cfg(feature = "parallel")]
    let values = {
        use rayon::prelude::*;
        jobs.par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values = jobs.iter().map(row).collect();
    Ok(FeatureMatrix {
        subjects: all_series.keys().cloned().collect(),
        columns,
        values,
    })
}

impl FeatureMatrix {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["subject_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (s, row) in self.subjects.iter().zip(&self.values) {
            let mut rec = vec![s.clone()];
            rec.extend(row.iter().map(|v| v.map_or_else(String::new, |x| x.to_string())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
