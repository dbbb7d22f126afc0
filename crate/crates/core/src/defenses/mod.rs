//! Server-side aggregation rules.
//!
//! Every rule first puts the updates in ascending `client_id` order and does
//! all summation in that order, so outcomes do not depend on arrival order
//! and two rules that accept the same clients produce bit-identical deltas.

mod faros;
mod krum;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dims, NormStrategy, ParamVector};
use crate::rng::{self, Tag};

pub use faros::{
    adaptive_phi, differential_scale, faros_aggregate, pairwise_scores, rcc_filter, scope_static_aggregate,
    select_core_set, RccResult,
};
pub use krum::{krum_scores, multi_krum};

/// One client's upload for a round: `local − previous global`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub delta: ParamVector,
    pub num_samples: usize,
}

impl ClientUpdate {
    pub fn new(client_id: usize, delta: ParamVector, num_samples: usize) -> Self {
        ClientUpdate {
            client_id,
            delta,
            num_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseKind {
    #[default]
    FedAvg,
    MultiKrum,
    WeakDp,
    ScopeStatic,
    Faros,
}

impl DefenseKind {
    pub const ALL: [DefenseKind; 5] = [
        DefenseKind::FedAvg,
        DefenseKind::MultiKrum,
        DefenseKind::WeakDp,
        DefenseKind::ScopeStatic,
        DefenseKind::Faros,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::FedAvg => "fedavg",
            DefenseKind::MultiKrum => "multi_krum",
            DefenseKind::WeakDp => "weak_dp",
            DefenseKind::ScopeStatic => "scope_static",
            DefenseKind::Faros => "faros",
        }
    }
}

impl fmt::Display for DefenseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DefenseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DefenseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown defense kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub kind: DefenseKind,
    /// Largest scaling exponent, reached when all gradients agree.
    pub phi_max: f64,
    /// Decay rate of the exponent as dispersion grows.
    pub kappa: f64,
    /// Core-set size `l`; 0 means `⌈k/2⌉`.
    pub core_size: usize,
    /// Accepted clients `m` (also the Multi-Krum selection size); 0 means `⌈k/2⌉`.
    pub accept_count: usize,
    pub krum_f: usize,
    pub clip_norm: f64,
    pub noise_std: f64,
    pub phi_static: f64,
    pub global_lr: f64,
    /// Weight averages by `num_samples` instead of uniformly.
    pub weighted: bool,
    pub norm: NormStrategy,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            kind: DefenseKind::FedAvg,
            phi_max: 3.0,
            kappa: 50.0,
            core_size: 0,
            accept_count: 0,
            krum_f: 0,
            clip_norm: 1.0,
            noise_std: 0.0,
            phi_static: 2.0,
            global_lr: 1.0,
            weighted: false,
            norm: NormStrategy::MaxAbs,
        }
    }
}

impl DefenseConfig {
    pub fn with_kind(kind: DefenseKind) -> Self {
        DefenseConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn core_size_for(&self, k: usize) -> usize {
        if self.core_size == 0 {
            k.div_ceil(2)
        } else {
            self.core_size
        }
    }

    pub fn accept_count_for(&self, k: usize) -> usize {
        if self.accept_count == 0 {
            k.div_ceil(2)
        } else {
            self.accept_count
        }
    }

    /// Check the parameters against a round of `k` clients.
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.phi_max > 1.0 && self.phi_max.is_finite()) {
            return Err(Error::config("defense.phi_max must be > 1"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("defense.kappa must be > 0"));
        }
        if !(self.phi_static >= 1.0 && self.phi_static.is_finite()) {
            return Err(Error::config("defense.phi_static must be >= 1"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("defense.clip_norm must be > 0"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("defense.noise_std must be >= 0"));
        }
        if !(self.global_lr > 0.0 && self.global_lr.is_finite()) {
            return Err(Error::config("defense.global_lr must be > 0"));
        }
        let (l, m) = (self.core_size_for(k), self.accept_count_for(k));
        if l == 0 || l > k {
            return Err(Error::config(format!("defense.core_size {l} must lie in [1, {k}]")));
        }
        if m == 0 || m > k {
            return Err(Error::config(format!("defense.accept_count {m} must lie in [1, {k}]")));
        }
        if 2 * self.krum_f >= k {
            return Err(Error::config(format!(
                "defense.krum_f {} must be below k/2 = {}",
                self.krum_f,
                k as f64 / 2.0
            )));
        }
        Ok(())
    }
}

/// Per-round internals of the similarity-based rules.
///
/// Vectors are aligned with `client_ids` (ascending, zero updates excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub d_t: f64,
    pub phi_t: f64,
    pub client_ids: Vec<usize>,
    pub core_set: Vec<usize>,
    /// Cosine distance of each scaled gradient to the core centroid.
    pub distances: Vec<f64>,
    /// Sum of pairwise cosine distances of each scaled gradient.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseOutcome {
    pub aggregated_delta: ParamVector,
    /// Accepted client ids, ascending.
    pub accepted: Vec<usize>,
    pub diagnostics: Option<Diagnostics>,
    /// Clients dropped before filtering because their update was all zero.
    pub excluded: Vec<usize>,
    /// The round degenerated and was aggregated with plain FedAvg.
    pub fallback: bool,
}

/// Updates sorted by client id, validated for emptiness, dims and unique ids.
pub(crate) fn canonical(updates: &[ClientUpdate]) -> Result<Vec<&ClientUpdate>> {
    let first = updates.first().ok_or(Error::EmptySet("no client updates"))?;
    let dim = first.delta.dim();
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    for w in sorted.windows(2) {
        if w[0].client_id == w[1].client_id {
            return Err(Error::config(format!("duplicate client id {}", w[0].client_id)));
        }
    }
    for u in &sorted {
        check_dims(dim, u.delta.dim())?;
    }
    Ok(sorted)
}

/// Mean of the deltas of `sorted` whose id is in `accepted` (both ascending).
pub(crate) fn average_accepted(sorted: &[&ClientUpdate], accepted: &[usize], weighted: bool) -> Result<ParamVector> {
    let chosen: Vec<&ClientUpdate> = sorted
        .iter()
        .copied()
        .filter(|u| accepted.binary_search(&u.client_id).is_ok())
        .collect();
    if chosen.is_empty() {
        return Err(Error::EmptySet("no accepted updates to average"));
    }
    let dim = chosen[0].delta.dim();
    let mut acc = vec![0.0; dim];
    if weighted {
        let total: f64 = chosen.iter().map(|u| u.num_samples as f64).sum();
        if total <= 0.0 {
            return Err(Error::config("weighted aggregation needs positive num_samples"));
        }
        for u in &chosen {
            let w = u.num_samples as f64 / total;
            for (a, x) in acc.iter_mut().zip(u.delta.iter()) {
                *a += w * x;
            }
        }
    } else {
        for u in &chosen {
            for (a, x) in acc.iter_mut().zip(u.delta.iter()) {
                *a += x;
            }
        }
        let n = chosen.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    ParamVector::new(acc)
}

fn fedavg_impl(updates: &[ClientUpdate], weighted: bool) -> Result<DefenseOutcome> {
    let sorted = canonical(updates)?;
    let accepted: Vec<usize> = sorted.iter().map(|u| u.client_id).collect();
    Ok(DefenseOutcome {
        aggregated_delta: average_accepted(&sorted, &accepted, weighted)?,
        accepted,
        diagnostics: None,
        excluded: Vec::new(),
        fallback: false,
    })
}

/// Unweighted mean of all deltas.
pub fn fedavg(updates: &[ClientUpdate]) -> Result<DefenseOutcome> {
    fedavg_impl(updates, false)
}

pub(crate) fn fedavg_fallback(updates: &[ClientUpdate], weighted: bool) -> Result<DefenseOutcome> {
    let mut out = fedavg_impl(updates, weighted)?;
    out.fallback = true;
    Ok(out)
}

/// Clip each delta to L2 norm `clip_norm`, average, add seeded Gaussian noise.
pub fn weak_dp(updates: &[ClientUpdate], clip_norm: f64, noise_std: f64, seed: u64) -> Result<DefenseOutcome> {
    if !(clip_norm > 0.0) {
        return Err(Error::config("clip_norm must be positive"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::config("noise_std must be non-negative"));
    }
    let sorted = canonical(updates)?;
    let clipped: Vec<ClientUpdate> = sorted
        .iter()
        .map(|u| {
            let norm = u.delta.l2_norm();
            let factor = if norm > clip_norm { clip_norm / norm } else { 1.0 };
            let delta = if factor < 1.0 {
                u.delta.scale(factor)?
            } else {
                u.delta.clone()
            };
            Ok(ClientUpdate::new(u.client_id, delta, u.num_samples))
        })
        .collect::<Result<_>>()?;
    let mut out = fedavg_impl(&clipped, false)?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::config(e.to_string()))?;
        let mut rng = rng::stream(seed, Tag::DpNoise, &[]);
        let noisy: Vec<f64> = out
            .aggregated_delta
            .iter()
            .map(|x| x + normal.sample(&mut rng))
            .collect();
        out.aggregated_delta = ParamVector::new(noisy)?;
    }
    Ok(out)
}

/// Apply the rule selected by `cfg.kind`. `seed` feeds Weak-DP noise.
pub fn aggregate(updates: &[ClientUpdate], cfg: &DefenseConfig, seed: u64) -> Result<DefenseOutcome> {
    let k = updates.len();
    match cfg.kind {
        DefenseKind::FedAvg => fedavg_impl(updates, cfg.weighted),
        DefenseKind::MultiKrum => multi_krum(updates, cfg.krum_f, cfg.accept_count_for(k)),
        DefenseKind::WeakDp => weak_dp(updates, cfg.clip_norm, cfg.noise_std, seed),
        DefenseKind::ScopeStatic => scope_static_aggregate(updates, cfg),
        DefenseKind::Faros => faros_aggregate(updates, cfg),
    }
}

/// `prev_global + η · aggregated_delta`.
pub fn apply_update(prev_global: &ParamVector, outcome: &DefenseOutcome, global_lr: f64) -> Result<ParamVector> {
    prev_global.add_scaled(&outcome.aggregated_delta, global_lr)
}
