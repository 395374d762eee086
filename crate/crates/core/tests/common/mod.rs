//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use survbench_core::optim::SmoothObjective;

fn binomial(n: u64, k: u64) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Two-sided Fisher exact p-value by enumerating every table with the
/// observed margins and summing those no more probable than the observed one.
pub fn fisher_oracle(t: [[u64; 2]; 2]) -> BigRational {
    let (r1, r2) = (t[0][0] + t[0][1], t[1][0] + t[1][1]);
    let c1 = t[0][0] + t[1][0];
    let n = r1 + r2;
    if r1 == 0 || r2 == 0 || c1 == 0 || c1 == n {
        return BigRational::one();
    }
    let total = binomial(n, c1);
    let prob = |a: u64| BigRational::new(binomial(r1, a) * binomial(r2, c1 - a), total.clone());
    let observed = prob(t[0][0]);
    let lo = c1.saturating_sub(r2);
    let hi = c1.min(r1);
    let mut p = BigRational::zero();
    for a in lo..=hi {
        let q = prob(a);
        if q <= observed {
            p += q;
        }
    }
    p
}

/// Concordance by direct enumeration of ordered pairs.
pub fn c_index_oracle(outcomes: &[(f64, bool)], markers: &[f64], tau: f64) -> Option<f64> {
    let (mut conc, mut ties, mut comparable) = (0u64, 0u64, 0u64);
    for i in 0..outcomes.len() {
        for j in 0..outcomes.len() {
            let ((yi, di), (yj, _)) = (outcomes[i], outcomes[j]);
            if yi < yj && di && yi < tau {
                comparable += 1;
                if markers[i] > markers[j] {
                    conc += 1;
                } else if markers[i] == markers[j] {
                    ties += 1;
                }
            }
        }
    }
    (comparable > 0).then(|| (conc as f64 + 0.5 * ties as f64) / comparable as f64)
}

/// AUC as the share of (positive, negative) pairs ranked correctly.
pub fn auc_oracle(labels: &[bool], scores: &[f64]) -> Option<f64> {
    let (mut wins, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] && !labels[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1;
                } else if scores[i] == scores[j] {
                    ties += 1;
                }
            }
        }
    }
    (pairs > 0).then(|| (wins as f64 + 0.5 * ties as f64) / pairs as f64)
}

/// Central finite-difference gradient of `f`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|k| {
            let (mut a, mut b) = (w.to_vec(), w.to_vec());
            a[k] += h;
            b[k] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// `max |fd - analytic| / max |analytic|`.
pub fn relative_gradient_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let err = analytic.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    err / scale.max(f64::MIN_POSITIVE)
}

pub fn objective_fd_error<F: SmoothObjective>(f: &F, w: &[f64]) -> f64 {
    let mut g = vec![0.0; w.len()];
    f.value_and_gradient(w, &mut g);
    relative_gradient_error(&g, &fd_gradient(|v| f.value(v), w, 1e-6))
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
