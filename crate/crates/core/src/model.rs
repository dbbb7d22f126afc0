//! Desk-scale classifiers with hand-written backpropagation.
//!
//! Flattened parameter layout (layer-major, row-major inside each matrix):
//!
//! * softmax regression (`hidden_dim == 0`): `W[C×d]`, then `b[C]`
//! * one hidden ReLU layer: `W1[h×d]`, `b1[h]`, `W2[C×h]`, `b2[C]`
//!
//! `W[r×c]` is stored as `W[r][0..c]` for `r` ascending, so weight `(r, c)`
//! lives at offset `r * cols + c` within its block.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{apply_trigger, Example, TriggerSpec};
use crate::error::{Error, Result};
use crate::linalg::{check_dims, ParamVector};
use crate::rng::{self, Tag};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    /// 0 selects softmax regression.
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn softmax(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            input_dim,
            num_classes,
            hidden_dim: 0,
            activation: Activation::Relu,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            input_dim,
            num_classes,
            hidden_dim,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("model input_dim must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("model num_classes must be at least 2"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, c, h) = (self.input_dim, self.num_classes, self.hidden_dim);
        if h == 0 {
            d * c + c
        } else {
            d * h + h + h * c + c
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("local_epochs and batch_size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Uniform(-1/√fan_in, 1/√fan_in) weights, zero biases.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = rng::stream(seed, Tag::Init, &[]);
    let mut out = Vec::with_capacity(spec.param_count());
    let mut layer = |rows: usize, fan_in: usize, out: &mut Vec<f64>| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..rows * fan_in {
            out.push(rng.random_range(-bound..=bound));
        }
        out.extend(std::iter::repeat_n(0.0, rows));
    };
    if spec.hidden_dim == 0 {
        layer(spec.num_classes, spec.input_dim, &mut out);
    } else {
        layer(spec.hidden_dim, spec.input_dim, &mut out);
        layer(spec.num_classes, spec.hidden_dim, &mut out);
    }
    ParamVector::new(out).expect("uniform draws are finite")
}

/// Affine map `W x + b` with `W` row-major `rows × x.len()` followed by `b`.
fn affine(block: &[f64], rows: usize, x: &[f64], out: &mut Vec<f64>) {
    let cols = x.len();
    let (w, b) = block.split_at(rows * cols);
    out.clear();
    out.extend((0..rows).map(|r| {
        let row = &w[r * cols..(r + 1) * cols];
        b[r] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }));
}

struct Scratch {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Scratch {
            hidden: Vec::new(),
            logits: Vec::new(),
        }
    }
}

fn compute_logits(params: &[f64], spec: &ModelSpec, x: &[f64], s: &mut Scratch) {
    let (d, c, h) = (spec.input_dim, spec.num_classes, spec.hidden_dim);
    if h == 0 {
        affine(params, c, x, &mut s.logits);
    } else {
        let split = d * h + h;
        affine(&params[..split], h, x, &mut s.hidden);
        s.hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        affine(&params[split..], c, &s.hidden, &mut s.logits);
    }
}

/// Max-subtracted softmax, in place.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

fn check_model_inputs(params: &ParamVector, spec: &ModelSpec, x_dim: usize) -> Result<()> {
    check_dims(spec.param_count(), params.dim())?;
    check_dims(spec.input_dim, x_dim)
}

pub fn logits(params: &ParamVector, spec: &ModelSpec, features: &[f64]) -> Result<Vec<f64>> {
    check_model_inputs(params, spec, features.len())?;
    let mut s = Scratch::new();
    compute_logits(params.as_slice(), spec, features, &mut s);
    Ok(s.logits)
}

/// Class probabilities.
pub fn forward(params: &ParamVector, spec: &ModelSpec, features: &[f64]) -> Result<Vec<f64>> {
    let mut z = logits(params, spec, features)?;
    softmax_in_place(&mut z);
    Ok(z)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Accumulates summed cross-entropy and its gradient over `examples`.
fn accumulate<'a>(
    params: &[f64],
    spec: &ModelSpec,
    examples: impl Iterator<Item = &'a Example>,
    grad: &mut [f64],
    s: &mut Scratch,
) -> (f64, usize) {
    let (d, c, h) = (spec.input_dim, spec.num_classes, spec.hidden_dim);
    let mut loss = 0.0;
    let mut count = 0;
    let mut dz = vec![0.0; c];
    let mut dh = vec![0.0; h];
    for e in examples {
        let x = e.features.as_slice();
        compute_logits(params, spec, x, s);
        let z = &s.logits;
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[e.label];
        for k in 0..c {
            dz[k] = (z[k] - lse).exp();
        }
        dz[e.label] -= 1.0;
        count += 1;

        if h == 0 {
            let (gw, gb) = grad.split_at_mut(c * d);
            for k in 0..c {
                let row = &mut gw[k * d..(k + 1) * d];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += dz[k] * xv;
                }
                gb[k] += dz[k];
            }
        } else {
            let split = d * h + h;
            let w2 = &params[split..split + c * h];
            let (g1, g2) = grad.split_at_mut(split);
            let (gw2, gb2) = g2.split_at_mut(c * h);
            dh.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..c {
                let row = &mut gw2[k * h..(k + 1) * h];
                for j in 0..h {
                    row[j] += dz[k] * s.hidden[j];
                    dh[j] += dz[k] * w2[k * h + j];
                }
                gb2[k] += dz[k];
            }
            let (gw1, gb1) = g1.split_at_mut(d * h);
            for j in 0..h {
                // ReLU subgradient at 0 is 0; hidden holds post-activation values
                if s.hidden[j] <= 0.0 {
                    continue;
                }
                let row = &mut gw1[j * d..(j + 1) * d];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += dh[j] * xv;
                }
                gb1[j] += dh[j];
            }
        }
    }
    (loss, count)
}

/// Mean cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grad(params: &ParamVector, spec: &ModelSpec, batch: &[Example]) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::EmptySet("loss over an empty batch"));
    }
    for e in batch {
        check_model_inputs(params, spec, e.features.dim())?;
    }
    let mut grad = vec![0.0; params.dim()];
    let mut s = Scratch::new();
    let (loss, n) = accumulate(params.as_slice(), spec, batch.iter(), &mut grad, &mut s);
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, ParamVector::new(grad)?))
}

/// Customization points of the local SGD loop, used by the attack strategies.
pub trait TrainHooks {
    /// Weight applied to the classification-loss gradient.
    fn class_weight(&self) -> f64 {
        1.0
    }

    /// Add extra objective gradients to `grad` (already scaled by `class_weight`).
    fn extra_grad(&self, _params: &[f64], _grad: &mut [f64]) {}

    fn after_step(&self, _params: &mut [f64]) {}

    fn after_epoch(&self, _params: &mut [f64]) {}
}

/// Plain SGD on cross-entropy.
pub struct Honest;

impl TrainHooks for Honest {}

/// Mini-batch SGD from `global` over `dataset` with hooks.
///
/// Each epoch reshuffles with a stream keyed by `(tspec.seed, epoch)`.
pub fn sgd_train(
    global: &ParamVector,
    spec: &ModelSpec,
    dataset: &[Example],
    tspec: &TrainSpec,
    hooks: &dyn TrainHooks,
) -> Result<ParamVector> {
    if dataset.is_empty() {
        return Err(Error::EmptySet("local training on an empty dataset"));
    }
    tspec.validate()?;
    for e in dataset {
        check_model_inputs(global, spec, e.features.dim())?;
    }
    let mut params = global.as_slice().to_vec();
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut s = Scratch::new();
    let weight = hooks.class_weight();
    for epoch in 0..tspec.local_epochs {
        order.sort_unstable();
        let mut rng = rng::stream(tspec.seed, Tag::Shuffle, &[epoch as u64]);
        order.shuffle(&mut rng);
        for chunk in order.chunks(tspec.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let (_, n) = accumulate(&params, spec, chunk.iter().map(|&i| &dataset[i]), &mut grad, &mut s);
            let scale = weight / n as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            hooks.extra_grad(&params, &mut grad);
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= tspec.learning_rate * g;
            }
            hooks.after_step(&mut params);
        }
        hooks.after_epoch(&mut params);
    }
    ParamVector::new(params).map_err(|_| Error::config("local training diverged to a non-finite value"))
}

pub fn local_train(
    global: &ParamVector,
    spec: &ModelSpec,
    dataset: &[Example],
    tspec: &TrainSpec,
) -> Result<ParamVector> {
    sgd_train(global, spec, dataset, tspec, &Honest)
}

pub fn predict(params: &ParamVector, spec: &ModelSpec, features: &[f64]) -> Result<usize> {
    Ok(argmax(&logits(params, spec, features)?))
}

/// Fraction of `clean_test` classified correctly.
pub fn evaluate_acc(params: &ParamVector, spec: &ModelSpec, clean_test: &[Example]) -> Result<f64> {
    if clean_test.is_empty() {
        return Err(Error::EmptySet("accuracy over an empty test set"));
    }
    let mut correct = 0usize;
    for e in clean_test {
        if predict(params, spec, e.features.as_slice())? == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / clean_test.len() as f64)
}

/// Fraction of triggered non-target test inputs classified as the target.
pub fn evaluate_asr(
    params: &ParamVector,
    spec: &ModelSpec,
    clean_test: &[Example],
    trigger: &TriggerSpec,
) -> Result<f64> {
    let mut eligible = 0usize;
    let mut hits = 0usize;
    for e in clean_test.iter().filter(|e| e.label != trigger.target_label) {
        eligible += 1;
        let triggered = apply_trigger(e, trigger)?;
        if predict(params, spec, triggered.features.as_slice())? == trigger.target_label {
            hits += 1;
        }
    }
    if eligible == 0 {
        return Err(Error::NoEligibleExamples(
            "every test example already carries the target label",
        ));
    }
    Ok(hits as f64 / eligible as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use proptest::prelude::*;

    fn tspec(epochs: usize, batch: usize, lr: f64, seed: u64) -> TrainSpec {
        TrainSpec {
            local_epochs: epochs,
            batch_size: batch,
            learning_rate: lr,
            seed,
        }
    }

    #[test]
    fn parameter_counts() {
        let s = ModelSpec::softmax(4, 3);
        assert_eq!(init_params(&s, 0).dim(), 15);
        let m = ModelSpec::mlp(4, 8, 3);
        assert_eq!(init_params(&m, 0).dim(), 67);
        assert_eq!(init_params(&m, 5), init_params(&m, 5));
        assert_ne!(init_params(&m, 5), init_params(&m, 6));
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let s = ModelSpec::mlp(16, 4, 3);
        let p = init_params(&s, 1);
        let w1 = &p.as_slice()[..64];
        assert!(w1.iter().all(|w| w.abs() <= 0.25));
        assert!(p.as_slice()[64..68].iter().all(|&b| b == 0.0));
        assert!(p.as_slice()[68 + 12..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let s = ModelSpec::softmax(3, 4);
        let p = ParamVector::zeros(s.param_count());
        let probs = forward(&p, &s, &[1.0, -2.0, 3.0]).unwrap();
        assert!(probs.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_is_stable() {
        let mut z = vec![1000.0, 0.0];
        softmax_in_place(&mut z);
        assert!(z.iter().all(|v| v.is_finite()));
        assert!((z[0] - 1.0).abs() < 1e-12 && z[1] < 1e-300);
    }

    #[test]
    fn dimension_mismatch() {
        let s = ModelSpec::softmax(3, 2);
        let p = ParamVector::zeros(s.param_count());
        assert!(matches!(forward(&p, &s, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(forward(&ParamVector::zeros(3), &s, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn zero_params_loss_is_ln_c() {
        let s = ModelSpec::softmax(16, 10);
        let ds = gen_blobs(10, 16, 3, 6.0, 1).unwrap();
        let (loss, _) = loss_and_grad(&ParamVector::zeros(s.param_count()), &s, &ds).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!(loss_and_grad(&ParamVector::zeros(s.param_count()), &s, &[]).is_err());
    }

    #[test]
    fn duplicated_batch_same_loss_and_grad() {
        let s = ModelSpec::mlp(5, 4, 3);
        let p = init_params(&s, 2);
        let ds = gen_blobs(3, 5, 2, 3.0, 4).unwrap();
        let doubled: Vec<Example> = ds.iter().flat_map(|e| [e.clone(), e.clone()]).collect();
        let (l1, g1) = loss_and_grad(&p, &s, &ds).unwrap();
        let (l2, g2) = loss_and_grad(&p, &s, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_lr_is_noop_and_training_is_deterministic() {
        let s = ModelSpec::softmax(4, 3);
        let p = init_params(&s, 3);
        let ds = gen_blobs(3, 4, 10, 3.0, 3).unwrap();
        assert_eq!(local_train(&p, &s, &ds, &tspec(3, 4, 0.0, 1)).unwrap(), p);
        let a = local_train(&p, &s, &ds, &tspec(3, 4, 0.1, 1)).unwrap();
        let b = local_train(&p, &s, &ds, &tspec(3, 4, 0.1, 1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, local_train(&p, &s, &ds, &tspec(3, 4, 0.1, 2)).unwrap());
        assert!(local_train(&p, &s, &[], &tspec(1, 1, 0.1, 1)).is_err());
    }

    #[test]
    fn full_batch_step_descends() {
        let s = ModelSpec::softmax(16, 10);
        let ds = gen_blobs(10, 16, 5, 6.0, 8).unwrap();
        for seed in 0..50 {
            let p = init_params(&s, seed);
            let (before, _) = loss_and_grad(&p, &s, &ds).unwrap();
            let q = local_train(&p, &s, &ds, &tspec(1, ds.len(), 0.01, seed)).unwrap();
            let (after, _) = loss_and_grad(&q, &s, &ds).unwrap();
            assert!(after <= before, "seed {seed}: {after} > {before}");
        }
    }

    #[test]
    fn metrics_on_degenerate_predictors() {
        let s = ModelSpec::softmax(2, 3);
        let zero = ParamVector::zeros(s.param_count());
        let test = vec![
            Example::new(vec![0.0, 1.0], 0).unwrap(),
            Example::new(vec![1.0, 0.0], 1).unwrap(),
            Example::new(vec![1.0, 1.0], 2).unwrap(),
            Example::new(vec![1.0, 1.0], 0).unwrap(),
        ];
        assert_eq!(evaluate_acc(&zero, &s, &test).unwrap(), 0.5);
        let trig = TriggerSpec {
            positions: vec![1],
            values: vec![3.0],
            target_label: 0,
        };
        assert_eq!(evaluate_asr(&zero, &s, &test, &trig).unwrap(), 1.0);
        let only_target = vec![test[0].clone()];
        assert!(matches!(
            evaluate_asr(&zero, &s, &only_target, &trig),
            Err(Error::NoEligibleExamples(_))
        ));
        assert!(evaluate_acc(&zero, &s, &[]).is_err());
    }

    #[test]
    fn single_correct_prediction_scores_one() {
        let s = ModelSpec::softmax(2, 2);
        // bias favours class 1
        let p = ParamVector::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let test = [Example::new(vec![0.5, 0.5], 1).unwrap()];
        assert_eq!(evaluate_acc(&p, &s, &test).unwrap(), 1.0);
    }

    #[test]
    fn asr_denominator_excludes_target_examples() {
        let s = ModelSpec::softmax(2, 2);
        // always predicts class 1
        let p = ParamVector::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let trig = TriggerSpec {
            positions: vec![0],
            values: vec![1.0],
            target_label: 1,
        };
        let test = vec![
            Example::new(vec![0.0, 0.0], 0).unwrap(),
            Example::new(vec![0.0, 0.0], 1).unwrap(),
            Example::new(vec![0.0, 0.0], 1).unwrap(),
        ];
        assert_eq!(evaluate_asr(&p, &s, &test, &trig).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn forward_is_a_simplex_point_and_preserves_argmax(
            seed in any::<u64>(),
            x in prop::collection::vec(-50.0f64..50.0, 6),
            hidden in 0usize..5,
        ) {
            let s = ModelSpec { input_dim: 6, num_classes: 4, hidden_dim: hidden, activation: Activation::Relu };
            let p = init_params(&s, seed).scale(20.0).unwrap();
            let probs = forward(&p, &s, &x).unwrap();
            prop_assert!(probs.iter().all(|&v| v >= 0.0 && v.is_finite()));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let z = logits(&p, &s, &x).unwrap();
            let zmax = z[argmax(&z)];
            prop_assert!(probs[argmax(&z)] >= probs.iter().copied().fold(0.0, f64::max) - 1e-15);
            prop_assert_eq!(z[argmax(&probs)], zmax);
        }

        #[test]
        fn param_count_formula(d in 1usize..40, c in 2usize..12, h in 0usize..20) {
            let s = ModelSpec { input_dim: d, num_classes: c, hidden_dim: h, activation: Activation::Relu };
            let expected = if h == 0 { d * c + c } else { d * h + h + h * c + c };
            prop_assert_eq!(init_params(&s, 0).dim(), expected);
        }
    }
}
