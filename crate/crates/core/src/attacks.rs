//! Malicious-client behaviors.
//!
//! Every attack starts from the honest local SGD loop in [`crate::model`] and
//! changes either the data (trigger poisoning, edge-case samples), the
//! objective (cosine stealth term), the trajectory (norm-ball projection) or
//! the uploaded model (boosting).

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{apply_trigger, edge_case_pool, poison_dataset, Example, TriggerSpec};
use crate::error::{Error, Result};
use crate::linalg::{check_dims, dot, l2_norm, ParamVector};
use crate::model::{local_train, sgd_train, ModelSpec, TrainHooks, TrainSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    DataPoison,
    ModelReplacement,
    ConstrainAndScale,
    EdgeCasePgd,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::None,
        AttackKind::DataPoison,
        AttackKind::ModelReplacement,
        AttackKind::ConstrainAndScale,
        AttackKind::EdgeCasePgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::DataPoison => "data_poison",
            AttackKind::ModelReplacement => "model_replacement",
            AttackKind::ConstrainAndScale => "constrain_and_scale",
            AttackKind::EdgeCasePgd => "edge_case_pgd",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown attack kind `{s}`")))
    }
}

/// Operands of the cosine stealth term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StealthReference {
    /// `cos(local params, global params)`.
    #[default]
    Params,
    /// `cos(local params − global, previous global update)`.
    Update,
}

impl StealthReference {
    pub fn name(self) -> &'static str {
        match self {
            StealthReference::Params => "params",
            StealthReference::Update => "update",
        }
    }
}

impl fmt::Display for StealthReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StealthReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "params" => Ok(StealthReference::Params),
            "update" => Ok(StealthReference::Update),
            _ => Err(Error::config(format!("unknown stealth reference `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub trigger: TriggerSpec,
    /// Fraction of local examples replaced by triggered copies.
    pub poison_rate: f64,
    /// Update amplification for model replacement and constrain-and-scale.
    pub boost: f64,
    /// Stealth weight of the cosine term.
    pub alpha: f64,
    pub stealth_reference: StealthReference,
    pub pgd_radius: f64,
    /// Project after every SGD step instead of once per epoch.
    pub pgd_per_step: bool,
    /// Tail fraction of the source class used as edge-case data.
    pub edge_fraction: f64,
    pub edge_source_label: usize,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!(
                "attack alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.boost >= 1.0 && self.boost.is_finite()) {
            return Err(Error::config(format!("attack boost must be >= 1, got {}", self.boost)));
        }
        if !(self.pgd_radius > 0.0) {
            return Err(Error::config("attack pgd_radius must be positive"));
        }
        if !(self.poison_rate > 0.0 && self.poison_rate <= 1.0) {
            return Err(Error::config("attack poison_rate must lie in (0, 1]"));
        }
        if !(self.edge_fraction > 0.0 && self.edge_fraction < 1.0) {
            return Err(Error::config("attack edge_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `global + boost · (local − global)`.
pub fn model_replacement(local: &ParamVector, global: &ParamVector, boost: f64) -> Result<ParamVector> {
    if !(boost >= 1.0) {
        return Err(Error::config(format!("boost must be >= 1, got {boost}")));
    }
    check_dims(global.dim(), local.dim())?;
    if boost == 1.0 {
        return Ok(local.clone());
    }
    let delta = local.sub(global)?;
    global.add_scaled(&delta, boost)
}

/// Gradient of `1 − cos(w, reference)` with respect to `w`.
pub fn cosine_loss_grad(w: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    check_dims(reference.len(), w.len())?;
    let nw = l2_norm(w);
    let nr = l2_norm(reference);
    if nw == 0.0 || nr == 0.0 {
        return Err(Error::ZeroVector("cosine loss at a zero vector"));
    }
    let wr = dot(w, reference);
    let a = 1.0 / (nw * nr);
    let b = wr / (nw * nw * nw * nr);
    Ok(w.iter().zip(reference).map(|(wi, ri)| b * wi - a * ri).collect())
}

struct CosineStealth<'a> {
    /// Subtracted from the iterate before the cosine; `None` compares raw params.
    anchor: Option<&'a [f64]>,
    /// `None` drops the cosine term.
    reference: Option<&'a [f64]>,
    alpha: f64,
}

impl TrainHooks for CosineStealth<'_> {
    fn class_weight(&self) -> f64 {
        1.0 - self.alpha
    }

    fn extra_grad(&self, params: &[f64], grad: &mut [f64]) {
        let Some(reference) = self.reference.filter(|_| self.alpha != 0.0) else {
            return;
        };
        let shifted: Vec<f64>;
        let w = match self.anchor {
            Some(a) => {
                shifted = params.iter().zip(a).map(|(p, a)| p - a).collect();
                &shifted[..]
            }
            None => params,
        };
        // the cosine is undefined at a zero operand; skip the term for that step
        if let Ok(g) = cosine_loss_grad(w, reference) {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += self.alpha * b;
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// SGD on `(1 − α)·CE + α·(1 − cos(params, global))`.
pub fn constrain_and_scale_train(
    global: &ParamVector,
    spec: &ModelSpec,
    poisoned: &[Example],
    tspec: &TrainSpec,
    alpha: f64,
) -> Result<ParamVector> {
    check_alpha(alpha)?;
    if global.is_zero() {
        return Err(Error::ZeroVector("cosine stealth term needs a nonzero global model"));
    }
    let hooks = CosineStealth {
        anchor: None,
        reference: Some(global.as_slice()),
        alpha,
    };
    sgd_train(global, spec, poisoned, tspec, &hooks)
}

/// SGD on `(1 − α)·CE + α·(1 − cos(params − global, last_update))`.
///
/// Without a previous global update (the first round) the cosine term is
/// dropped and only the class loss, weighted by `1 − α`, is trained.
pub fn constrain_and_scale_train_update(
    global: &ParamVector,
    last_update: Option<&ParamVector>,
    spec: &ModelSpec,
    poisoned: &[Example],
    tspec: &TrainSpec,
    alpha: f64,
) -> Result<ParamVector> {
    check_alpha(alpha)?;
    if let Some(u) = last_update {
        check_dims(global.dim(), u.dim())?;
    }
    let hooks = CosineStealth {
        anchor: Some(global.as_slice()),
        reference: last_update.filter(|u| !u.is_zero()).map(|u| u.as_slice()),
        alpha,
    };
    sgd_train(global, spec, poisoned, tspec, &hooks)
}

fn project_in_place(params: &mut [f64], center: &[f64], radius: f64) {
    let dist = params
        .iter()
        .zip(center)
        .map(|(p, c)| (p - c) * (p - c))
        .sum::<f64>()
        .sqrt();
    if dist > radius {
        let s = radius / dist;
        for (p, c) in params.iter_mut().zip(center) {
            *p = c + s * (*p - c);
        }
    }
}

/// Euclidean projection onto the ball of `radius` around `center`.
pub fn pgd_project(params: &ParamVector, center: &ParamVector, radius: f64) -> Result<ParamVector> {
    check_dims(center.dim(), params.dim())?;
    if !(radius > 0.0) {
        return Err(Error::config("projection radius must be positive"));
    }
    let mut out = params.as_slice().to_vec();
    project_in_place(&mut out, center.as_slice(), radius);
    ParamVector::new(out)
}

struct NormBall<'a> {
    center: &'a [f64],
    radius: f64,
    per_step: bool,
}

impl TrainHooks for NormBall<'_> {
    fn after_step(&self, params: &mut [f64]) {
        if self.per_step {
            project_in_place(params, self.center, self.radius);
        }
    }

    fn after_epoch(&self, params: &mut [f64]) {
        project_in_place(params, self.center, self.radius);
    }
}

/// Triggered edge-case samples drawn from `pool_source`.
pub fn build_edge_pool(pool_source: &[Example], acfg: &AttackConfig, seed: u64) -> Result<Vec<Example>> {
    edge_case_pool(pool_source, acfg.edge_source_label, acfg.edge_fraction, seed)?
        .iter()
        .map(|e| apply_trigger(e, &acfg.trigger))
        .collect()
}

/// Train on `local_data ∪ edge_pool`, projecting into the `pgd_radius` ball
/// around `global` after every epoch (or step).
pub fn edge_case_pgd_train(
    global: &ParamVector,
    spec: &ModelSpec,
    local_data: &[Example],
    edge_pool: &[Example],
    tspec: &TrainSpec,
    acfg: &AttackConfig,
) -> Result<ParamVector> {
    if edge_pool.is_empty() {
        return Err(Error::config("edge-case pool is empty"));
    }
    let mut augmented = local_data.to_vec();
    augmented.extend_from_slice(edge_pool);
    let hooks = NormBall {
        center: global.as_slice(),
        radius: acfg.pgd_radius,
        per_step: acfg.pgd_per_step,
    };
    sgd_train(global, spec, &augmented, tspec, &hooks)
}

/// Poison the attacker's local data. An attacker whose data holds only
/// target-label examples has nothing to relabel and keeps its clean data.
fn poisoned_local(local: &[Example], acfg: &AttackConfig, seed: u64) -> Result<Vec<Example>> {
    match poison_dataset(local, &acfg.trigger, acfg.poison_rate, seed) {
        Ok(p) => Ok(p),
        Err(Error::Config(msg)) if local.iter().all(|e| e.label == acfg.trigger.target_label) => {
            warn!("attacker keeps clean data: {msg}");
            Ok(local.to_vec())
        }
        Err(e) => Err(e),
    }
}

/// Local training for a malicious client, dispatched on `acfg.kind`.
///
/// `edge_pool` is only read by [`AttackKind::EdgeCasePgd`], `last_update`
/// (the previous round's global update) only by constrain-and-scale with
/// [`StealthReference::Update`].
pub fn malicious_local_train(
    global: &ParamVector,
    last_update: Option<&ParamVector>,
    spec: &ModelSpec,
    local_data: &[Example],
    edge_pool: &[Example],
    tspec: &TrainSpec,
    acfg: &AttackConfig,
) -> Result<ParamVector> {
    match acfg.kind {
        AttackKind::None => local_train(global, spec, local_data, tspec),
        AttackKind::DataPoison => {
            let data = poisoned_local(local_data, acfg, tspec.seed)?;
            local_train(global, spec, &data, tspec)
        }
        AttackKind::ModelReplacement => {
            let data = poisoned_local(local_data, acfg, tspec.seed)?;
            let local = local_train(global, spec, &data, tspec)?;
            model_replacement(&local, global, acfg.boost)
        }
        AttackKind::ConstrainAndScale => {
            let data = poisoned_local(local_data, acfg, tspec.seed)?;
            let local = match acfg.stealth_reference {
                StealthReference::Params => match constrain_and_scale_train(global, spec, &data, tspec, acfg.alpha) {
                    Err(Error::ZeroVector(_)) => local_train(global, spec, &data, tspec)?,
                    other => other?,
                },
                StealthReference::Update => {
                    constrain_and_scale_train_update(global, last_update, spec, &data, tspec, acfg.alpha)?
                }
            };
            model_replacement(&local, global, acfg.boost)
        }
        AttackKind::EdgeCasePgd => edge_case_pgd_train(global, spec, local_data, edge_pool, tspec, acfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::linalg::cosine_distance;
    use crate::model::{evaluate_asr, init_params};
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn trigger() -> TriggerSpec {
        TriggerSpec {
            positions: vec![13, 14, 15],
            values: vec![5.0, 5.0, 5.0],
            target_label: 0,
        }
    }

    pub(crate) fn acfg(kind: AttackKind) -> AttackConfig {
        AttackConfig {
            kind,
            trigger: trigger(),
            poison_rate: 0.5,
            boost: 1.0,
            alpha: 0.5,
            stealth_reference: StealthReference::Params,
            pgd_radius: 2.0,
            pgd_per_step: false,
            edge_fraction: 0.1,
            edge_source_label: 1,
        }
    }

    fn ts(epochs: usize, seed: u64) -> TrainSpec {
        TrainSpec {
            local_epochs: epochs,
            batch_size: 10,
            learning_rate: 0.1,
            seed,
        }
    }

    #[test]
    fn replacement_examples() {
        let g = pv(&[1.0, 1.0]);
        let l = pv(&[2.0, 0.0]);
        assert_eq!(model_replacement(&l, &g, 1.0).unwrap(), l);
        assert_eq!(model_replacement(&l, &g, 3.0).unwrap(), pv(&[4.0, -2.0]));
        assert!(model_replacement(&l, &g, 0.5).is_err());
        assert!(matches!(
            model_replacement(&pv(&[1.0]), &g, 2.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let n1 = model_replacement(&l, &g, 2.0).unwrap().sub(&g).unwrap().l2_norm();
        let n2 = model_replacement(&l, &g, 6.0).unwrap().sub(&g).unwrap().l2_norm();
        assert!((n2 - 3.0 * n1).abs() < 1e-12);
    }

    #[test]
    fn replacement_with_boost_k_dominates_fedavg() {
        let k = 5.0;
        let g = pv(&[0.5, -1.0, 2.0]);
        let local = pv(&[1.5, 0.0, 1.0]);
        let boosted = model_replacement(&local, &g, k).unwrap();
        // four honest clients return the global model unchanged
        let mut sum = boosted.sub(&g).unwrap();
        for _ in 0..4 {
            sum = sum.add_scaled(&ParamVector::zeros(3), 1.0).unwrap();
        }
        let avg = sum.scale(1.0 / k).unwrap();
        assert_eq!(avg, local.sub(&g).unwrap());
    }

    #[test]
    fn projection_examples() {
        let c = pv(&[0.0, 0.0]);
        assert_eq!(pgd_project(&pv(&[0.3, 0.4]), &c, 1.0).unwrap(), pv(&[0.3, 0.4]));
        let p = pgd_project(&pv(&[3.0, 4.0]), &c, 1.0).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert!(pgd_project(&pv(&[3.0]), &c, 1.0).is_err());
        assert!(pgd_project(&pv(&[3.0, 4.0]), &c, 0.0).is_err());
    }

    #[test]
    fn cosine_grad_matches_finite_differences() {
        let w = [0.3, -1.2, 2.0, 0.7];
        let r = [1.0, 0.5, -0.4, 2.2];
        let g = cosine_loss_grad(&w, &r).unwrap();
        let f = |w: &[f64]| 1.0 - dot(w, &r) / (l2_norm(w) * l2_norm(&r));
        for i in 0..4 {
            let h = 1e-5;
            let mut wp = w;
            let mut wm = w;
            wp[i] += h;
            wm[i] -= h;
            let fd = (f(&wp) - f(&wm)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "{i}: {fd} vs {}", g[i]);
        }
        assert!(cosine_loss_grad(&[0.0; 4], &r).is_err());
    }

    #[test]
    fn dispatch_none_equals_honest() {
        let spec = ModelSpec::softmax(16, 10);
        let g = init_params(&spec, 1);
        let data = gen_blobs(10, 16, 4, 6.0, 2).unwrap();
        let a = malicious_local_train(&g, None, &spec, &data, &[], &ts(2, 3), &acfg(AttackKind::None)).unwrap();
        assert_eq!(a, local_train(&g, &spec, &data, &ts(2, 3)).unwrap());
    }

    #[test]
    fn data_poison_overfits_its_own_trigger() {
        let spec = ModelSpec::softmax(16, 10);
        let g = init_params(&spec, 1);
        let data = gen_blobs(10, 16, 10, 6.0, 2).unwrap();
        let mut cfg = acfg(AttackKind::DataPoison);
        cfg.poison_rate = 1.0;
        let local = malicious_local_train(&g, None, &spec, &data, &[], &ts(30, 4), &cfg).unwrap();
        let asr = evaluate_asr(&local, &spec, &data, &cfg.trigger).unwrap();
        assert!(asr >= 0.9, "asr {asr}");
        let again = malicious_local_train(&g, None, &spec, &data, &[], &ts(30, 4), &cfg).unwrap();
        assert_eq!(local, again);
    }

    #[test]
    fn alpha_zero_matches_data_poison() {
        let spec = ModelSpec::softmax(16, 10);
        let g = init_params(&spec, 5);
        let data = gen_blobs(10, 16, 5, 6.0, 6).unwrap();
        let poisoned = poison_dataset(&data, &trigger(), 0.5, 7).unwrap();
        let a = constrain_and_scale_train(&g, &spec, &poisoned, &ts(2, 8), 0.0).unwrap();
        let b = local_train(&g, &spec, &poisoned, &ts(2, 8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn update_reference_pulls_toward_the_last_update() {
        let spec = ModelSpec::softmax(16, 10);
        let g = init_params(&spec, 5);
        let data = gen_blobs(10, 16, 5, 6.0, 6).unwrap();
        let poisoned = poison_dataset(&data, &trigger(), 0.5, 7).unwrap();
        let plain = local_train(&g, &spec, &poisoned, &ts(2, 8)).unwrap();
        let zero = constrain_and_scale_train_update(&g, None, &spec, &poisoned, &ts(2, 8), 0.0).unwrap();
        assert_eq!(zero, plain);
        let honest = local_train(&g, &spec, &data, &ts(2, 9)).unwrap().sub(&g).unwrap();
        let gap = |alpha: f64| {
            let w = constrain_and_scale_train_update(&g, Some(&honest), &spec, &poisoned, &ts(2, 8), alpha).unwrap();
            cosine_distance(&w.sub(&g).unwrap(), &honest).unwrap()
        };
        assert!(gap(0.9) < gap(0.1));
        let short = pv(&[1.0]);
        assert!(constrain_and_scale_train_update(&g, Some(&short), &spec, &poisoned, &ts(1, 1), 0.5).is_err());
    }

    #[test]
    fn alpha_one_never_increases_cosine_distance() {
        let spec = ModelSpec::softmax(16, 10);
        let g = init_params(&spec, 5);
        let data = gen_blobs(10, 16, 5, 6.0, 6).unwrap();
        let poisoned = poison_dataset(&data, &trigger(), 0.5, 7).unwrap();
        // start from a perturbed point so the cosine term is active
        let start = local_train(&g, &spec, &poisoned, &ts(3, 1)).unwrap();
        let mut prev = cosine_distance(&start, &g).unwrap();
        assert!(prev > 1e-4);
        let hooks = CosineStealth {
            anchor: None,
            reference: Some(g.as_slice()),
            alpha: 1.0,
        };
        let mut cur = start;
        for epoch in 0..10 {
            cur = sgd_train(&cur, &spec, &poisoned, &ts(1, epoch), &hooks).unwrap();
            let d = cosine_distance(&cur, &g).unwrap();
            assert!(d <= prev + 1e-6, "epoch {epoch}: {d} > {prev}");
            prev = d;
        }
        assert!(constrain_and_scale_train(
            &ParamVector::zeros(spec.param_count()),
            &spec,
            &poisoned,
            &ts(1, 1),
            1.0
        )
        .is_err());
    }

    #[test]
    fn edge_pgd_stays_in_ball_and_matches_unconstrained_at_infinity() {
        let spec = ModelSpec::softmax(16, 10);
        let g = init_params(&spec, 5);
        let data = gen_blobs(10, 16, 20, 6.0, 6).unwrap();
        let cfg = acfg(AttackKind::EdgeCasePgd);
        let pool = build_edge_pool(&data, &cfg, 1).unwrap();
        assert_eq!(pool.len(), 2);
        assert!(pool.iter().all(|e| e.label == 0 && e.features[13] == 5.0));
        let local = &data[..50];

        let out = edge_case_pgd_train(&g, &spec, local, &pool, &ts(5, 2), &cfg).unwrap();
        assert!(out.sub(&g).unwrap().l2_norm() <= cfg.pgd_radius + 1e-9);

        let mut open = cfg.clone();
        open.pgd_radius = f64::INFINITY;
        let free = edge_case_pgd_train(&g, &spec, local, &pool, &ts(5, 2), &open).unwrap();
        let mut augmented = local.to_vec();
        augmented.extend_from_slice(&pool);
        assert_eq!(free, local_train(&g, &spec, &augmented, &ts(5, 2)).unwrap());

        assert!(edge_case_pgd_train(&g, &spec, local, &[], &ts(1, 2), &cfg).is_err());
    }

    #[test]
    fn tiny_radius_throttles_the_backdoor() {
        let spec = ModelSpec::softmax(16, 10);
        let g = init_params(&spec, 5);
        let data = gen_blobs(10, 16, 20, 6.0, 6).unwrap();
        let mut cfg = acfg(AttackKind::EdgeCasePgd);
        cfg.pgd_radius = 1e-6;
        cfg.pgd_per_step = true;
        let pool = build_edge_pool(&data, &cfg, 1).unwrap();
        let out = edge_case_pgd_train(&g, &spec, &data, &pool, &ts(5, 2), &cfg).unwrap();
        let before = evaluate_asr(&g, &spec, &data, &cfg.trigger).unwrap();
        let after = evaluate_asr(&out, &spec, &data, &cfg.trigger).unwrap();
        assert!((before - after).abs() <= 0.01, "{before} vs {after}");
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_contraction(
            p in prop::collection::vec(-10.0f64..10.0, 4),
            c in prop::collection::vec(-10.0f64..10.0, 4),
            r in 0.01f64..20.0,
        ) {
            let (p, c) = (pv(&p), pv(&c));
            let once = pgd_project(&p, &c, r).unwrap();
            prop_assert!(once.sub(&c).unwrap().l2_norm() <= r + 1e-9);
            prop_assert!(once.sub(&c).unwrap().l2_norm() <= p.sub(&c).unwrap().l2_norm() + 1e-12);
            let twice = pgd_project(&once, &c, r).unwrap();
            for (a, b) in once.iter().zip(twice.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn unit_boost_is_identity(
            l in prop::collection::vec(-10.0f64..10.0, 5),
            g in prop::collection::vec(-10.0f64..10.0, 5),
        ) {
            let (l, g) = (pv(&l), pv(&g));
            prop_assert_eq!(model_replacement(&l, &g, 1.0).unwrap(), l);
        }
    }
}
