#![allow(dead_code)]

use std::path::PathBuf;

use fedguard::defenses::ClientUpdate;
use fedguard::linalg::ParamVector;
use fedguard::SimConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect()
}

pub fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::new(v).unwrap()
}

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The standard desk scenario shipped in `configs/desk.cfg`.
pub fn desk() -> SimConfig {
    SimConfig::load(&configs_dir().join("desk.cfg")).unwrap()
}

pub fn desk_with(overrides: &[&str]) -> SimConfig {
    let mut cfg = desk();
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    cfg.apply_overrides(&o).unwrap();
    cfg.validate().unwrap();
    cfg
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = p[i];
            p[i] = x0 + h;
            let up = f(&p);
            p[i] = x0 - h;
            let down = f(&p);
            p[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest component-wise relative error, with a floor on the denominator so
/// components that are zero up to rounding do not dominate.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

/// Krum scores by exhaustive search over every neighbour set of the required
/// size. Each candidate sum is accumulated in ascending order so the minimum
/// is reproducible to the last bit.
pub fn brute_krum_scores(deltas: &[Vec<f64>], f: usize) -> Vec<f64> {
    let k = deltas.len();
    let size = k.saturating_sub(f + 2).min(k - 1);
    (0..k)
        .map(|i| {
            let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
            subsets(others.len(), size)
                .into_iter()
                .map(|s| {
                    let mut d: Vec<f64> = s.iter().map(|&j| sq_dist(&deltas[i], &deltas[others[j]])).collect();
                    d.sort_by(f64::total_cmp);
                    d.iter().sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn brute_krum_select(scores: &[f64], select: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut out = order[..select].to_vec();
    out.sort_unstable();
    out
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Adversarial round with a duplicated attacker.
///
/// Six honest updates sit in a tight cone around `u`, two honest outliers sit
/// 110° away along `w`, and the attacker submits the same update twice at 25-35°
/// between them. The duplicate pair has the smallest summed distance to
/// everyone, so a single-seed core picks it, while a wider core stays
/// dominated by the honest cone. Returns the updates and the attacker ids.
pub fn duplicated_hub(seed: u64) -> (Vec<ClientUpdate>, Vec<usize>) {
    let dim = 32;
    let mut r = rng(seed);
    let u = unit(gauss(&mut r, dim, 1.0));
    let mut w = gauss(&mut r, dim, 1.0);
    let p: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
    w.iter_mut().zip(&u).for_each(|(a, b)| *a -= p * b);
    let w = unit(w);
    let at = |deg: f64| -> Vec<f64> {
        let t = deg.to_radians();
        u.iter().zip(&w).map(|(a, b)| t.cos() * a + t.sin() * b).collect()
    };
    let jitter = |r: &mut ChaCha8Rng, base: Vec<f64>, sd: f64| -> Vec<f64> {
        let scale = r.random_range(0.5..2.0);
        base.iter()
            .zip(gauss(r, dim, sd))
            .map(|(b, n)| scale * (b + n))
            .collect()
    };
    let malicious = vec![2usize, 5];
    let angle = r.random_range(25.0..35.0);
    let hub = jitter(&mut r, at(angle), 0.01);
    let mut updates = Vec::new();
    let mut honest_slot = 0;
    for id in 0..10 {
        let delta = if malicious.contains(&id) {
            hub.clone()
        } else {
            honest_slot += 1;
            if honest_slot <= 6 {
                jitter(&mut r, at(0.0), 0.02)
            } else {
                jitter(&mut r, at(110.0), 0.05)
            }
        };
        updates.push(ClientUpdate::new(id, pv(delta), 10));
    }
    (updates, malicious)
}
