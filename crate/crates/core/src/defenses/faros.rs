//! Adaptive differential scaling followed by robust core-set filtering,
//! plus the static single-seed variant it is compared against.

use log::warn;

use super::{average_accepted, canonical, fedavg_fallback, ClientUpdate, DefenseConfig, DefenseOutcome, Diagnostics};
use crate::error::{Error, Result};
use crate::linalg::{cosine_distance, dispersion, mean_vector, normalize_with, ParamVector, DEGENERATE_DISPERSION};

/// `1 + (φ_max − 1)·exp(−κ·D_t)`.
pub fn adaptive_phi(d_t: f64, phi_max: f64, kappa: f64) -> Result<f64> {
    if !(d_t >= 0.0) {
        return Err(Error::config(format!("dispersion must be >= 0, got {d_t}")));
    }
    if !(phi_max > 1.0 && phi_max.is_finite()) {
        return Err(Error::config("phi_max must be > 1"));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::config("kappa must be > 0"));
    }
    Ok(1.0 + (phi_max - 1.0) * (-kappa * d_t).exp())
}

/// Element-wise `|x|^φ · sgn(x)`.
pub fn differential_scale(v: &ParamVector, phi: f64) -> ParamVector {
    let out: Vec<f64> = v
        .iter()
        .map(|&x| if x == 0.0 { 0.0 } else { x.abs().powf(phi).copysign(x) })
        .collect();
    ParamVector::new(out).expect("powers of finite values stay finite")
}

fn distance_matrix(vs: &[ParamVector]) -> Result<Vec<Vec<f64>>> {
    let k = vs.len();
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = cosine_distance(&vs[i], &vs[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

/// `δ_i = Σ_p (1 − cos(g_i, g_p))`; the self term contributes 0.
pub fn pairwise_scores(scaled: &[ParamVector]) -> Result<Vec<f64>> {
    if scaled.iter().any(ParamVector::is_zero) {
        return Err(Error::ZeroVector("scaled gradient"));
    }
    Ok(distance_matrix(scaled)?
        .into_iter()
        .map(|row| row.into_iter().sum())
        .collect())
}

/// Positions of the `n` smallest values; ties go to the lower id.
fn smallest(values: &[f64], ids: &[usize], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(ids[a].cmp(&ids[b])));
    order.truncate(n);
    order
}

/// Ids of the `l` clients with the smallest `δ`, ascending.
pub fn select_core_set(scores: &[f64], ids: &[usize], l: usize) -> Result<Vec<usize>> {
    if scores.len() != ids.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            got: scores.len(),
        });
    }
    if l == 0 || l > scores.len() {
        return Err(Error::config(format!(
            "core size {l} must lie in [1, {}]",
            scores.len()
        )));
    }
    let mut core: Vec<usize> = smallest(scores, ids, l).into_iter().map(|p| ids[p]).collect();
    core.sort_unstable();
    Ok(core)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RccResult {
    pub centroid: ParamVector,
    /// Accepted ids, ascending.
    pub accepted: Vec<usize>,
    /// Distance of every client to the centroid, aligned with the input ids.
    pub distances: Vec<f64>,
}

/// Average the core members, then keep the `m` clients closest to that centroid.
pub fn rcc_filter(scaled: &[ParamVector], ids: &[usize], core_ids: &[usize], m: usize) -> Result<RccResult> {
    if scaled.len() != ids.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            got: scaled.len(),
        });
    }
    if core_ids.is_empty() {
        return Err(Error::EmptySet("core set"));
    }
    if m == 0 || m > scaled.len() {
        return Err(Error::config(format!(
            "accept count {m} must lie in [1, {}]",
            scaled.len()
        )));
    }
    let mut core_pos = Vec::with_capacity(core_ids.len());
    for c in core_ids {
        let pos = ids
            .iter()
            .position(|i| i == c)
            .ok_or_else(|| Error::config(format!("core id {c} is not a participating client")))?;
        core_pos.push(pos);
    }
    core_pos.sort_by_key(|&p| ids[p]);
    let centroid = mean_vector(core_pos.iter().map(|&p| &scaled[p]))?;
    if centroid.is_zero() {
        return Err(Error::DegenerateCentroid);
    }
    let distances = scaled
        .iter()
        .map(|v| cosine_distance(v, &centroid))
        .collect::<Result<Vec<f64>>>()?;
    let mut accepted: Vec<usize> = smallest(&distances, ids, m).into_iter().map(|p| ids[p]).collect();
    accepted.sort_unstable();
    Ok(RccResult {
        centroid,
        accepted,
        distances,
    })
}

enum Mode {
    Adaptive,
    Static,
}

fn pipeline(updates: &[ClientUpdate], cfg: &DefenseConfig, mode: Mode) -> Result<DefenseOutcome> {
    let sorted = canonical(updates)?;
    let k = sorted.len();
    let l = match mode {
        Mode::Adaptive => cfg.core_size_for(k),
        Mode::Static => 1,
    };
    let m = cfg.accept_count_for(k);
    if l > k || m > k || m == 0 || l == 0 {
        return Err(Error::config(format!(
            "core size {l} and accept count {m} must lie in [1, {k}]"
        )));
    }

    let (live, excluded): (Vec<&ClientUpdate>, Vec<&ClientUpdate>) =
        sorted.iter().copied().partition(|u| !u.delta.is_zero());
    let excluded: Vec<usize> = excluded.iter().map(|u| u.client_id).collect();
    if !excluded.is_empty() {
        warn!("excluding all-zero updates from clients {excluded:?}");
    }
    if live.len() < l.max(m).max(2) {
        warn!(
            "only {} non-zero updates for l = {l}, m = {m}; falling back to fedavg",
            live.len()
        );
        return fedavg_fallback(updates, cfg.weighted);
    }

    let ids: Vec<usize> = live.iter().map(|u| u.client_id).collect();
    let normed = live
        .iter()
        .map(|u| normalize_with(&u.delta, cfg.norm))
        .collect::<Result<Vec<_>>>()?;
    let d_t = match dispersion(&normed) {
        Ok(d) => d,
        Err(Error::DegenerateCentroid) => DEGENERATE_DISPERSION,
        Err(e) => return Err(e),
    };
    let phi_t = match mode {
        Mode::Adaptive => adaptive_phi(d_t, cfg.phi_max, cfg.kappa)?,
        Mode::Static => cfg.phi_static,
    };
    let scaled: Vec<ParamVector> = normed.iter().map(|v| differential_scale(v, phi_t)).collect();
    let scores = pairwise_scores(&scaled)?;
    let core_set = select_core_set(&scores, &ids, l)?;
    let rcc = match rcc_filter(&scaled, &ids, &core_set, m) {
        Ok(r) => r,
        Err(Error::DegenerateCentroid) => {
            warn!("core centroid is zero; falling back to fedavg");
            return fedavg_fallback(updates, cfg.weighted);
        }
        Err(e) => return Err(e),
    };
    Ok(DefenseOutcome {
        aggregated_delta: average_accepted(&live, &rcc.accepted, cfg.weighted)?,
        accepted: rcc.accepted,
        diagnostics: Some(Diagnostics {
            d_t,
            phi_t,
            client_ids: ids,
            core_set,
            distances: rcc.distances,
            scores,
        }),
        excluded,
        fallback: false,
    })
}

/// Normalize, scale with the dispersion-driven exponent, pick a core set of
/// `l` mutually close clients and accept the `m` closest to its centroid.
pub fn faros_aggregate(updates: &[ClientUpdate], cfg: &DefenseConfig) -> Result<DefenseOutcome> {
    pipeline(updates, cfg, Mode::Adaptive)
}

/// Same filter with a fixed exponent `phi_static` and a single seed client.
pub fn scope_static_aggregate(updates: &[ClientUpdate], cfg: &DefenseConfig) -> Result<DefenseOutcome> {
    pipeline(updates, cfg, Mode::Static)
}
