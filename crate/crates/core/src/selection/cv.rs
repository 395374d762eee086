use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{fit_model, fold_usable, score_model};
use crate::binary::ModelKind;
use crate::data::SurvivalRecord;
use crate::error::{Error, Result};
use crate::optim::PenaltyConfig;
use crate::survival::MixtureOptions;

pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_FOLDS: usize = 5;

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// 30 points between 1e-4 and 1e2.
pub fn default_gamma_grid() -> Vec<f64> {
    log_grid(1e-4, 1e2, 30)
}

/// Fold index of every subject: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    pub gamma_grid: Vec<f64>,
    /// Folds that were evaluated; the rest lacked events or a class.
    pub folds_used: Vec<usize>,
    /// Held-out score per grid point and used fold. `None` marks a fit that
    /// failed numerically; such grid points cannot be chosen.
    pub fold_scores: Vec<Vec<Option<f64>>>,
    pub chosen_gamma: f64,
}

impl CVResult {
    /// Mean held-out score per grid point (`None` if any fold failed).
    pub fn mean_scores(&self) -> Vec<Option<f64>> {
        self.fold_scores
            .iter()
            .map(|row| {
                let vals: Option<Vec<f64>> = row.iter().copied().collect();
                vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub gamma_grid: Vec<f64>,
    pub eta: f64,
    pub folds: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub options: MixtureOptions,
}

/// Selects γ by k-fold cross-validation at fixed η. Ties go to the larger γ.
pub fn kfold_cv(train: &[SurvivalRecord], kind: ModelKind, settings: &CvSettings) -> Result<CVResult> {
    let k = settings.folds;
    if k < 2 || k > train.len() {
        return Err(Error::InvalidArgument(format!("need 2 <= k <= n, got k = {k}")));
    }
    if settings.gamma_grid.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    let penalties = settings
        .gamma_grid
        .iter()
        .map(|&g| PenaltyConfig::new(g, settings.eta))
        .collect::<Result<Vec<_>>>()?;
    let assignment = fold_assignment(train.len(), k, settings.seed);
    let mut splits = Vec::new();
    for f in 0..k {
        let (tr, va): (Vec<_>, Vec<_>) = (0..train.len()).partition(|&i| assignment[i] != f);
        let tr: Vec<SurvivalRecord> = tr.into_iter().map(|i| train[i].clone()).collect();
        let va: Vec<SurvivalRecord> = va.into_iter().map(|i| train[i].clone()).collect();
        if fold_usable(kind, &tr, &va, settings.epsilon) {
            splits.push((f, tr, va));
        } else {
            warn!("{}: fold {f} lacks events or a class; skipped", kind.label());
        }
    }
    if splits.is_empty() {
        return Err(Error::AllFoldsSkipped.in_model(kind.label()));
    }

    let cell = |(g, s): (usize, usize)| -> Option<f64> {
        let (f, tr, va) = &splits[s];
        let tau = va.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max);
        let scored = fit_model(kind, tr, settings.epsilon, penalties[g], &settings.options)
            .and_then(|m| score_model(&m, va, settings.epsilon, tau));
        match scored {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("{}: fold {f}, gamma {}: {e}", kind.label(), settings.gamma_grid[g]);
                None
            }
        }
    };
    let cells: Vec<(usize, usize)> = (0..penalties.len())
        .flat_map(|g| (0..splits.len()).map(move |s| (g, s)))
        .collect();
    #[cfg(feature = "parallel")]
    let flat: Vec<Option<f64>> = {
        use rayon::prelude::*;
        cells.par_iter().map(|&c| cell(c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let flat: Vec<Option<f64>> = cells.iter().map(|&c| cell(c)).collect();

    let fold_scores: Vec<Vec<Option<f64>>> = flat.chunks(splits.len()).map(<[_]>::to_vec).collect();
    let mut result = CVResult {
        gamma_grid: settings.gamma_grid.clone(),
        folds_used: splits.iter().map(|s| s.0).collect(),
        fold_scores,
        chosen_gamma: f64::NAN,
    };
    let best = result
        .mean_scores()
        .into_iter()
        .zip(&settings.gamma_grid)
        .filter_map(|(m, &g)| m.map(|m| (m, g)))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    match best {
        Some((_, g)) => {
            result.chosen_gamma = g;
            Ok(result)
        }
        None => Err(Error::InvalidArgument("every grid point failed to fit".into()).in_model(kind.label())),
    }
}
