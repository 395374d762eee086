//! Proximal-gradient machinery shared by every Elastic-Net penalized fit.
//!
//! Parameter vectors are laid out as `[beta_0, .., beta_{d-1}, intercept?]`:
//! objectives that carry an intercept put it last, and it is never penalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 5000;
const BACKTRACK: f64 = 0.5;
const POWER_ITERATIONS: usize = 20;
/// Sup-norm bound on the proximal gradient mapping required to stop.
const MAPPING_TOL: f64 = 1e-6;

/// Elastic-Net pair: `gamma * ((1 - eta) * |b|_1 + eta / 2 * |b|_2^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub gamma: f64,
    pub eta: f64,
}

impl PenaltyConfig {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidArgument(format!("eta must lie in (0, 1), got {eta}")));
        }
        Ok(Self { gamma, eta })
    }

    pub fn l1_weight(&self) -> f64 {
        self.gamma * (1.0 - self.eta)
    }

    pub fn l2_weight(&self) -> f64 {
        self.gamma * self.eta
    }

    /// Penalty value on the coefficient part of `w`.
    pub fn value(&self, coefficients: &[f64]) -> f64 {
        let l1: f64 = coefficients.iter().map(|b| b.abs()).sum();
        let l2: f64 = coefficients.iter().map(|b| b * b).sum();
        self.l1_weight() * l1 + 0.5 * self.l2_weight() * l2
    }
}

/// Differentiable part of a penalized objective.
pub trait SmoothObjective {
    /// Length of the parameter vector, intercept included.
    fn dim(&self) -> usize;

    /// Whether the last coordinate is an unpenalized intercept.
    fn has_intercept(&self) -> bool;

    fn value(&self, w: &[f64]) -> f64;

    /// Fills `grad` and returns the objective value at `w`.
    fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64;

    /// Number of penalized coordinates.
    fn penalized_dim(&self) -> usize {
        self.dim() - usize::from(self.has_intercept())
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    z.signum() * (z.abs() - t).max(0.0)
}

/// Proximal map of `step * penalty` applied to the first `penalized` entries
/// of `v`; the remaining entries (the intercept) pass through.
pub fn prox_elastic_net(v: &mut [f64], step: f64, penalty: &PenaltyConfig, penalized: usize) {
    let t = step * penalty.l1_weight();
    let shrink = 1.0 + step * penalty.l2_weight();
    for vj in v.iter_mut().take(penalized) {
        *vj = soft_threshold(*vj, t) / shrink;
    }
}

/// Largest violation of the Elastic-Net optimality conditions at `w`, given
/// the smooth gradient there.
pub fn kkt_violation(grad: &[f64], w: &[f64], penalty: &PenaltyConfig, penalized: usize) -> f64 {
    let l1 = penalty.l1_weight();
    let l2 = penalty.l2_weight();
    grad.iter()
        .zip(w)
        .enumerate()
        .map(|(j, (&g, &b))| {
            if j >= penalized {
                g.abs()
            } else if b != 0.0 {
                (g + l2 * b + l1 * b.signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FistaResult {
    pub solution: Vec<f64>,
    /// Penalized objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FistaResult {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial objective")
    }

    pub fn trace_tail(&self) -> Vec<f64> {
        self.trace.iter().rev().take(5).rev().copied().collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest Hessian eigenvalue at `x`, by power iteration on finite
/// differences of the gradient.
fn lipschitz_estimate<F: SmoothObjective + ?Sized>(f: &F, x: &[f64]) -> f64 {
    let n = x.len();
    let mut v: Vec<f64> = (0..n).map(|j| 1.0 + 0.1 * (j % 7) as f64).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    let h = 1e-6 * (1.0 + norm(x));
    let mut g0 = vec![0.0; n];
    f.value_and_gradient(x, &mut g0);
    let mut g1 = vec![0.0; n];
    let mut probe = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        for j in 0..n {
            probe[j] = x[j] + h * v[j];
        }
        f.value_and_gradient(&probe, &mut g1);
        let hv: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| (a - b) / h).collect();
        let nh = norm(&hv);
        if !nh.is_finite() || nh == 0.0 {
            break;
        }
        lambda = nh;
        v = hv.into_iter().map(|e| e / nh).collect();
    }
    if lambda.is_finite() && lambda > 1e-12 {
        lambda
    } else {
        1.0
    }
}

/// Accelerated proximal gradient with backtracking line search.
///
/// Momentum is reset whenever a step would increase the penalized objective,
/// so the returned trace is non-increasing. Stops once the relative change of
/// the penalized objective falls below `tol` and the gradient mapping is
/// below `MAPPING_TOL`, or after `max_iter` steps.
pub fn fista_minimize<F: SmoothObjective + ?Sized>(
    f: &F,
    penalty: &PenaltyConfig,
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<FistaResult> {
    let n = f.dim();
    if init.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: init.len(),
        });
    }
    let penalized = f.penalized_dim();
    let objective = |w: &[f64], smooth: f64| smooth + penalty.value(&w[..penalized]);

    let mut x = init.to_vec();
    let mut fx = objective(&x, f.value(&x));
    if !fx.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut step = 1.0 / lipschitz_estimate(f, &x);
    let mut y = x.clone();
    let mut x_prev = x.clone();
    let mut theta = 1.0f64;
    let mut momentum = false;
    let mut trace = vec![fx];
    let mut grad = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let fy = f.value_and_gradient(&y, &mut grad);
        if !fy.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
            });
        }
        let fz = loop {
            for j in 0..n {
                z[j] = y[j] - step * grad[j];
            }
            prox_elastic_net(&mut z, step, penalty, penalized);
            let fz = f.value(&z);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for j in 0..n {
                let d = z[j] - y[j];
                lin += grad[j] * d;
                quad += d * d;
            }
            let bound = fy + lin + quad / (2.0 * step);
            if fz.is_finite() && fz <= bound + 1e-12 * fy.abs().max(1.0) {
                break fz;
            }
            step *= BACKTRACK;
            if step < 1e-300 {
                return Err(Error::NonFinite {
                    iteration: iterations,
                });
            }
        };
        let fz_total = objective(&z, fz);
        // composite gradient mapping at y; zero exactly at a minimizer
        let mapping = y.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / step;
        if fz_total > fx {
            if momentum {
                // restart from the last accepted point
                y.copy_from_slice(&x);
                theta = 1.0;
                momentum = false;
                continue;
            }
            // plain proximal step failed to descend: only rounding noise left
            converged = true;
            break;
        }
        x_prev.copy_from_slice(&x);
        x.copy_from_slice(&z);
        let previous = fx;
        fx = fz_total;
        trace.push(fx);

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        for j in 0..n {
            y[j] = x[j] + beta * (x[j] - x_prev[j]);
        }
        theta = theta_next;
        momentum = true;

        let change = (previous - fx).abs();
        if (change <= tol * previous.abs().max(fx.abs()) && mapping <= MAPPING_TOL) || change == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(FistaResult {
        solution: x,
        trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Quadratic {
        target: Vec<f64>,
        intercept: bool,
    }

    impl SmoothObjective for Quadratic {
        fn dim(&self) -> usize {
            self.target.len()
        }
        fn has_intercept(&self) -> bool {
            self.intercept
        }
        fn value(&self, w: &[f64]) -> f64 {
            0.5 * w.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        }
        fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
            for ((g, a), b) in grad.iter_mut().zip(w).zip(&self.target) {
                *g = a - b;
            }
            self.value(w)
        }
    }

    /// Mean logistic loss on a small dense design, intercept last.
    struct Logistic {
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
    }

    impl SmoothObjective for Logistic {
        fn dim(&self) -> usize {
            self.x[0].len() + 1
        }
        fn has_intercept(&self) -> bool {
            true
        }
        fn value(&self, w: &[f64]) -> f64 {
            let mut g = vec![0.0; w.len()];
            self.value_and_gradient(w, &mut g)
        }
        fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
            let d = w.len() - 1;
            let n = self.y.len() as f64;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for (row, &yi) in self.x.iter().zip(&self.y) {
                let eta: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[d];
                loss += eta.max(0.0) + (-eta.abs()).exp().ln_1p() - yi * eta;
                let r = 1.0 / (1.0 + (-eta).exp()) - yi;
                for j in 0..d {
                    grad[j] += r * row[j] / n;
                }
                grad[d] += r / n;
            }
            loss / n
        }
    }

    fn random_logistic(seed: u64, n: usize, d: usize) -> Logistic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y = x
            .iter()
            .map(|r| {
                let s: f64 = r.iter().enumerate().map(|(j, v)| v * (j as f64 - 2.0) * 0.7).sum();
                f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-s).exp()))
            })
            .collect();
        Logistic { x, y }
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-4.25, 0.0), -4.25);
    }

    #[test]
    fn prox_zero_gamma_is_identity() {
        let p = PenaltyConfig::new(0.0, 0.1).unwrap();
        let mut v = vec![1.5, -2.0, 0.3];
        prox_elastic_net(&mut v, 0.7, &p, 3);
        assert_eq!(v, vec![1.5, -2.0, 0.3]);
    }

    #[test]
    fn prox_pure_l1_reduces_to_soft_threshold() {
        // gamma * (1 - eta) = 1 with gamma * eta -> 0
        let p = PenaltyConfig { gamma: 1.0, eta: 0.0 };
        let mut v = vec![2.0];
        prox_elastic_net(&mut v, 1.0, &p, 1);
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn prox_leaves_intercept_alone() {
        let p = PenaltyConfig::new(10.0, 0.5).unwrap();
        let mut v = vec![1.0, -1.0, 3.0];
        prox_elastic_net(&mut v, 1.0, &p, 2);
        assert_eq!(v, vec![0.0, 0.0, 3.0]);
    }

    #[test]
    fn prox_matches_grid_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = PenaltyConfig::new(rng.random_range(0.0..3.0), rng.random_range(0.05..0.95)).unwrap();
            let step = rng.random_range(0.1..2.0);
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut out = v.clone();
            prox_elastic_net(&mut out, step, &p, 4);
            for (vj, uj) in v.iter().zip(&out) {
                let obj = |u: f64| {
                    0.5 * (u - vj).powi(2) / step + p.gamma * ((1.0 - p.eta) * u.abs() + 0.5 * p.eta * u * u)
                };
                // dense grid then a local refinement
                let mut best = (f64::INFINITY, 0.0);
                for k in -100_000..=100_000 {
                    let u = k as f64 * 6e-5;
                    let o = obj(u);
                    if o < best.0 {
                        best = (o, u);
                    }
                }
                assert!((best.1 - uj).abs() < 1e-4, "grid {} vs prox {}", best.1, uj);
                assert!(obj(*uj) <= best.0 + 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_without_penalty_hits_target() {
        let f = Quadratic {
            target: vec![1.0, -2.0, 0.5],
            intercept: false,
        };
        let p = PenaltyConfig::new(0.0, 0.1).unwrap();
        let r = fista_minimize(&f, &p, &[0.0; 3], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(r.converged);
        for (a, b) in r.solution.iter().zip(&f.target) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn large_penalty_zeroes_coefficients_but_not_intercept() {
        let f = Quadratic {
            target: vec![1.0, -2.0, 4.0],
            intercept: true,
        };
        let p = PenaltyConfig::new(100.0, 0.1).unwrap();
        let r = fista_minimize(&f, &p, &[0.5, 0.5, 0.0], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(&r.solution[..2], &[0.0, 0.0]);
        assert!((r.solution[2] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn lasso_logistic_large_gamma_is_zero() {
        let f = random_logistic(1, 60, 2);
        let p = PenaltyConfig::new(50.0, 0.1).unwrap();
        let r = fista_minimize(&f, &p, &[1.0, -1.0, 0.0], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(&r.solution[..2], &[0.0, 0.0]);
        let mean_y = f.y.iter().sum::<f64>() / f.y.len() as f64;
        assert!((r.solution[2] - (mean_y / (1.0 - mean_y)).ln()).abs() < 1e-4);
    }

    #[test]
    fn trace_non_increasing_and_below_init() {
        for seed in 0..10 {
            let f = random_logistic(seed, 80, 5);
            let p = PenaltyConfig::new(0.02, 0.1).unwrap();
            let r = fista_minimize(&f, &p, &[0.0; 6], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            for w in r.trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!(r.objective() <= r.trace[0]);
        }
    }

    /// Plain proximal gradient with the analytic Lipschitz constant, from
    /// several random starts.
    fn ista_oracle(f: &Logistic, p: &PenaltyConfig, seed: u64) -> f64 {
        let d = f.dim();
        let n = f.y.len() as f64;
        let frob: f64 = f.x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum();
        let step = 4.0 * n / frob;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = f64::INFINITY;
        let mut g = vec![0.0; d];
        for _ in 0..4 {
            let mut w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            for _ in 0..25_000 {
                f.value_and_gradient(&w, &mut g);
                for j in 0..d {
                    w[j] -= step * g[j];
                }
                prox_elastic_net(&mut w, step, p, d - 1);
            }
            best = best.min(f.value(&w) + p.value(&w[..d - 1]));
        }
        best
    }

    #[test]
    fn penalized_logistic_matches_multistart_oracle() {
        let f = random_logistic(11, 100, 5);
        let p = PenaltyConfig::new(0.01, 0.1).unwrap();
        let r = fista_minimize(&f, &p, &[0.0; 6], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let oracle = ista_oracle(&f, &p, 5);
        assert!((r.objective() - oracle).abs() < 1e-6, "{} vs {}", r.objective(), oracle);
        let mut g = vec![0.0; 6];
        f.value_and_gradient(&r.solution, &mut g);
        assert!(kkt_violation(&g, &r.solution, &p, 5) < 1e-4);
    }

    #[test]
    fn non_finite_objective_reports_iteration() {
        struct Bad;
        impl SmoothObjective for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn has_intercept(&self) -> bool {
                false
            }
            fn value(&self, _: &[f64]) -> f64 {
                f64::NAN
            }
            fn value_and_gradient(&self, _: &[f64], g: &mut [f64]) -> f64 {
                g[0] = 0.0;
                f64::NAN
            }
        }
        let p = PenaltyConfig::new(0.0, 0.5).unwrap();
        assert!(matches!(fista_minimize(&Bad, &p, &[0.0], 1e-8, 10), Err(Error::NonFinite { iteration: 0 })));
    }

    #[test]
    fn penalty_config_validation() {
        assert!(PenaltyConfig::new(-1.0, 0.1).is_err());
        assert!(PenaltyConfig::new(1.0, 0.0).is_err());
        assert!(PenaltyConfig::new(1.0, 1.0).is_err());
        assert!(PenaltyConfig::new(0.0, 0.1).is_ok());
    }

    proptest! {
        #[test]
        fn soft_threshold_odd_and_nonexpansive(a in -10.0f64..10.0, b in -10.0f64..10.0, t in 0.0f64..5.0) {
            prop_assert_eq!(soft_threshold(-a, t), -soft_threshold(a, t));
            prop_assert!((soft_threshold(a, t) - soft_threshold(b, t)).abs() <= (a - b).abs() + 1e-12 * (1.0 + a.abs() + b.abs()));
        }
    }
}
