use crate::error::{Error, Result};

/// Fenwick tree over marker ranks.
struct Counts {
    tree: Vec<u64>,
}

impl Counts {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of stored ranks strictly below `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Dense ranks of `values` (equal values share a rank).
fn dense_ranks(values: &[f64]) -> (Vec<usize>, usize) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup_by(|a, b| a.total_cmp(b).is_eq());
    let ranks = values
        .iter()
        .map(|v| sorted.partition_point(|s| s.total_cmp(v).is_lt()))
        .collect();
    (ranks, sorted.len())
}

/// Harrell's concordance restricted to `y_i < tau`.
///
/// A pair is comparable when the shorter duration `y_i < y_j` ends in an event
/// and `y_i < tau`; it is concordant when `M_i > M_j` and counts one half when
/// the markers tie.
pub fn c_index(outcomes: &[(f64, bool)], markers: &[f64], tau: f64) -> Result<f64> {
    if outcomes.len() != markers.len() {
        return Err(Error::DimensionMismatch {
            expected: outcomes.len(),
            actual: markers.len(),
        });
    }
    let n = outcomes.len();
    let (ranks, levels) = dense_ranks(markers);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| outcomes[b].0.total_cmp(&outcomes[a].0));

    let mut later = Counts::new(levels);
    let mut seen = 0u64;
    let (mut concordant, mut tied, mut comparable) = (0u64, 0u64, 0u64);
    let mut k = 0;
    while k < n {
        let t = outcomes[order[k]].0;
        let mut end = k;
        while end < n && outcomes[order[end]].0 == t {
            end += 1;
        }
        if t < tau {
            for &i in &order[k..end] {
                if outcomes[i].1 {
                    let below = later.below(ranks[i]);
                    let below_or_eq = later.below(ranks[i] + 1);
                    concordant += below;
                    tied += below_or_eq - below;
                    comparable += seen;
                }
            }
        }
        for &i in &order[k..end] {
            later.add(ranks[i]);
        }
        seen += (end - k) as u64;
        k = end;
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok((concordant as f64 + 0.5 * tied as f64) / comparable as f64)
}

/// Area under the ROC curve from the Mann–Whitney statistic; ties count 1/2.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives, using mid-ranks
    let mut rank_sum2 = 0u64;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end < order.len() && scores[order[end]].total_cmp(&scores[order[k]]).is_eq() {
            end += 1;
        }
        let mid2 = (k + 1 + end) as u64;
        let pos = order[k..end].iter().filter(|&&i| labels[i]).count() as u64;
        rank_sum2 += pos * mid2;
        k = end;
    }
    let u2 = rank_sum2 - (n_pos * (n_pos + 1)) as u64;
    Ok(0.5 * u2 as f64 / (n_pos * n_neg) as f64)
}

/// Horizon risk `1 - S(epsilon | x)` for every row.
pub fn bridge_scores<F>(survival: F, rows: &[Vec<f64>], epsilon: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> f64,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(rows.iter().map(|x| 1.0 - survival(x, epsilon)).collect())
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlations between absolute importance vectors, one per model.
/// Entries involving a constant vector are `None`.
pub fn importance_similarity(importances: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>> {
    let m = importances.len();
    let d = importances.first().map_or(0, Vec::len);
    if m < 2 || d < 2 {
        return Err(Error::InvalidArgument(
            "similarity needs at least two models and two covariates".into(),
        ));
    }
    if let Some(bad) = importances.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    let abs: Vec<Vec<f64>> = importances
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).collect())
        .collect();
    let mut out = vec![vec![None; m]; m];
    for a in 0..m {
        for b in a..m {
            let r = pearson(&abs[a], &abs[b]);
            let r = if a == b { r.map(|_| 1.0) } else { r };
            out[a][b] = r;
            out[b][a] = r;
        }
    }
    Ok(out)
}
