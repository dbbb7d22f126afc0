//! Multi-Krum.

use log::warn;

use super::{average_accepted, canonical, ClientUpdate, DefenseOutcome};
use crate::error::{Error, Result};

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Krum score of each update (ascending client id order): the sum of squared
/// L2 distances to its `k − f − 2` nearest other updates.
pub fn krum_scores(updates: &[ClientUpdate], f: usize) -> Result<Vec<(usize, f64)>> {
    let sorted = canonical(updates)?;
    let k = sorted.len();
    let neighbours = k.saturating_sub(f + 2).min(k - 1);
    let mut scores = Vec::with_capacity(k);
    for (i, u) in sorted.iter().enumerate() {
        let mut dists: Vec<f64> = sorted
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| squared_distance(u.delta.as_slice(), v.delta.as_slice()))
            .collect();
        dists.sort_by(f64::total_cmp);
        scores.push((u.client_id, dists[..neighbours].iter().sum()));
    }
    Ok(scores)
}

/// Accept the `select` lowest-scoring updates (lower id on ties) and average them.
///
/// The `k ≥ 2f + 3` condition is only warned about so its failure mode can be studied.
pub fn multi_krum(updates: &[ClientUpdate], f: usize, select: usize) -> Result<DefenseOutcome> {
    let k = updates.len();
    if select == 0 || select > k {
        return Err(Error::config(format!(
            "multi-krum select {select} must lie in [1, {k}]"
        )));
    }
    if k < 2 * f + 3 {
        warn!("multi-krum with k = {k}, f = {f} violates k >= 2f + 3");
    }
    let mut scores = krum_scores(updates, f)?;
    scores.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut accepted: Vec<usize> = scores[..select].iter().map(|s| s.0).collect();
    accepted.sort_unstable();
    let sorted = canonical(updates)?;
    Ok(DefenseOutcome {
        aggregated_delta: average_accepted(&sorted, &accepted, false)?,
        accepted,
        diagnostics: None,
        excluded: Vec::new(),
        fallback: false,
    })
}
