//! Synthetic datasets, non-IID partitioning and poison injection.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ParamVector;
use crate::rng::{self, Tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: ParamVector,
    pub label: usize,
}

impl Example {
    pub fn new(features: Vec<f64>, label: usize) -> Result<Self> {
        Ok(Example {
            features: ParamVector::new(features)?,
            label,
        })
    }
}

/// Backdoor trigger: overwrite `positions` with `values` and relabel to `target_label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSpec {
    pub positions: Vec<usize>,
    pub values: Vec<f64>,
    pub target_label: usize,
}

impl TriggerSpec {
    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.positions.len() != self.values.len() {
            return Err(Error::config(format!(
                "trigger has {} positions but {} values",
                self.positions.len(),
                self.values.len()
            )));
        }
        for (i, &p) in self.positions.iter().enumerate() {
            if p >= feature_dim {
                return Err(Error::config(format!(
                    "trigger position {p} out of range for feature dim {feature_dim}"
                )));
            }
            if self.positions[..i].contains(&p) {
                return Err(Error::config(format!("duplicate trigger position {p}")));
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("trigger values must be finite"));
        }
        Ok(())
    }
}

/// Client id (vector index) to example indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, id: usize) -> &[usize] {
        &self.assignments[id]
    }
}

/// Gaussian-blob dataset geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_sep: f64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if self.feature_dim < 2 {
            return Err(Error::config("feature_dim must be at least 2"));
        }
        if !(self.class_sep > 0.0 && self.class_sep.is_finite()) {
            return Err(Error::config("class_sep must be positive"));
        }
        Ok(())
    }
}

/// Class centers with pairwise distance at least `class_sep`.
///
/// When classes fit in the feature space, class `c` sits on axis `c` at
/// `±class_sep/√2` (random sign), so every pair is exactly `class_sep` apart
/// and axes `num_classes..feature_dim` carry pure noise. Otherwise centers are
/// rejection-sampled from a Gaussian cloud that widens until the spacing holds.
pub fn class_centers(spec: &BlobSpec, seed: u64) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Tag::Centers, &[]);
    let (c, d, sep) = (spec.num_classes, spec.feature_dim, spec.class_sep);
    if c <= d {
        let radius = sep / std::f64::consts::SQRT_2;
        return Ok((0..c)
            .map(|k| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut center = vec![0.0; d];
                center[k] = sign * radius;
                center
            })
            .collect());
    }
    let mut scale = sep;
    loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(c);
        let mut attempts = 0;
        while centers.len() < c && attempts < 10_000 {
            attempts += 1;
            let cand: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let far = centers
                .iter()
                .all(|o| o.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= sep);
            if far {
                centers.push(cand);
            }
        }
        if centers.len() == c {
            return Ok(centers);
        }
        scale *= 1.5;
    }
}

/// `n_per_class` unit-variance samples around each center, class-major order.
pub fn sample_blobs(centers: &[Vec<f64>], n_per_class: usize, seed: u64) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(centers.len() * n_per_class);
    for (label, center) in centers.iter().enumerate() {
        let mut rng = rng::stream(seed, Tag::TrainSamples, &[label as u64]);
        for _ in 0..n_per_class {
            let features = center
                .iter()
                .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                .collect();
            out.push(Example::new(features, label)?);
        }
    }
    Ok(out)
}

/// Isotropic Gaussian clusters; centers and samples both derive from `seed`.
pub fn gen_blobs(
    num_classes: usize,
    feature_dim: usize,
    n_per_class: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Vec<Example>> {
    if n_per_class == 0 {
        return Err(Error::config("n_per_class must be at least 1"));
    }
    let spec = BlobSpec {
        num_classes,
        feature_dim,
        class_sep,
    };
    let centers = class_centers(&spec, seed)?;
    sample_blobs(&centers, n_per_class, seed)
}

/// Non-IID split: per class, Dirichlet(q) proportions over clients.
///
/// Clients left empty by the draw receive one index taken from the currently
/// largest client (lowest id on ties), so every client ends non-empty.
pub fn dirichlet_partition(labels: &[usize], num_clients: usize, q: f64, seed: u64) -> Result<Partition> {
    if num_clients == 0 {
        return Err(Error::config("num_clients must be at least 1"));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::config(format!("dirichlet q must be positive, got {q}")));
    }
    if labels.len() < num_clients {
        return Err(Error::config(format!(
            "{} examples cannot fill {num_clients} non-empty clients",
            labels.len()
        )));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let gamma = Gamma::new(q, 1.0).map_err(|e| Error::config(e.to_string()))?;
    let mut assignments = vec![Vec::new(); num_clients];

    for class in 0..num_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        let mut rng = rng::stream(seed, Tag::Partition, &[class as u64]);
        idx.shuffle(&mut rng);
        let mut props: Vec<f64> = (0..num_clients).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = props.iter().sum();
        if total > 0.0 && total.is_finite() {
            props.iter_mut().for_each(|p| *p /= total);
        } else {
            props.iter_mut().for_each(|p| *p = 1.0 / num_clients as f64);
        }
        let n = idx.len();
        let mut start = 0usize;
        let mut cum = 0.0;
        for (client, p) in props.iter().enumerate() {
            cum += p;
            let end = if client + 1 == num_clients {
                n
            } else {
                ((cum * n as f64).round() as usize).clamp(start, n)
            };
            assignments[client].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }

    for client in 0..num_clients {
        if assignments[client].is_empty() {
            let donor = (0..num_clients)
                .max_by(|&a, &b| assignments[a].len().cmp(&assignments[b].len()).then(b.cmp(&a)))
                .expect("num_clients >= 1");
            let moved = assignments[donor].pop().expect("donor is non-empty");
            assignments[client].push(moved);
        }
    }
    Ok(Partition { assignments })
}

/// Copy of `e` carrying the trigger and relabelled to the target class.
pub fn apply_trigger(e: &Example, t: &TriggerSpec) -> Result<Example> {
    t.validate(e.features.dim())?;
    let mut features = e.features.as_slice().to_vec();
    for (&p, &v) in t.positions.iter().zip(&t.values) {
        features[p] = v;
    }
    Example::new(features, t.target_label)
}

/// Indices `poison_dataset` would replace, ascending.
pub fn poison_indices(ds: &[Example], t: &TriggerSpec, rate: f64, seed: u64) -> Result<Vec<usize>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::config(format!("poison rate must lie in (0, 1], got {rate}")));
    }
    let mut eligible: Vec<usize> = (0..ds.len()).filter(|&i| ds[i].label != t.target_label).collect();
    if eligible.is_empty() {
        return Err(Error::config("no examples with a label other than the trigger target"));
    }
    let count = ((rate * ds.len() as f64).ceil() as usize).min(eligible.len());
    let mut rng = rng::stream(seed, Tag::Poison, &[]);
    let (chosen, _) = eligible.partial_shuffle(&mut rng, count);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Replace `⌈rate·|ds|⌉` non-target examples (capped at the eligible count) with triggered copies.
pub fn poison_dataset(ds: &[Example], t: &TriggerSpec, rate: f64, seed: u64) -> Result<Vec<Example>> {
    let chosen = poison_indices(ds, t, rate, seed)?;
    let mut out = ds.to_vec();
    for i in chosen {
        out[i] = apply_trigger(&ds[i], t)?;
    }
    Ok(out)
}

/// The `⌈fraction·n⌉` examples of `source_label` farthest from that class's mean.
pub fn edge_case_pool(ds: &[Example], source_label: usize, fraction: f64, seed: u64) -> Result<Vec<Example>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!(
            "edge fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut members: Vec<&Example> = ds.iter().filter(|e| e.label == source_label).collect();
    if members.is_empty() {
        return Err(Error::config(format!(
            "no examples of source label {source_label} for the edge-case pool"
        )));
    }
    let dim = members[0].features.dim();
    let mut mean = vec![0.0; dim];
    for e in &members {
        for (m, x) in mean.iter_mut().zip(e.features.iter()) {
            *m += x;
        }
    }
    let n = members.len();
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // seeded order decides ties between equidistant examples
    let mut rng = rng::stream(seed, Tag::EdgePool, &[source_label as u64]);
    members.shuffle(&mut rng);
    let dist = |e: &Example| -> f64 {
        e.features
            .iter()
            .zip(&mean)
            .map(|(x, m)| (x - m) * (x - m))
            .sum::<f64>()
    };
    members.sort_by(|a, b| dist(b).total_cmp(&dist(a)));
    let take = ((fraction * n as f64).ceil() as usize).min(n);
    Ok(members[..take].iter().map(|e| (*e).clone()).collect())
}

/// Label histogram normalized to frequencies.
pub fn label_frequencies(labels: impl IntoIterator<Item = usize>, num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    let mut total = 0usize;
    for l in labels {
        counts[l] += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}
