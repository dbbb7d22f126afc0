//! Round orchestration.
//!
//! Client ids `0..malicious_count` form the malicious roster. Each round the
//! sampled roster members run the configured attack, everyone else trains
//! honestly, and the server aggregates with the configured defense.

use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{build_edge_pool, malicious_local_train, AttackConfig, AttackKind};
use crate::config::{DataSource, SimConfig};
use crate::data::{class_centers, dirichlet_partition, sample_blobs, Example, Partition};
use crate::defenses::{aggregate, apply_update, ClientUpdate};
use crate::error::{Error, Result};
use crate::idx::load_idx;
use crate::linalg::ParamVector;
use crate::model::{evaluate_acc, evaluate_asr, init_params, local_train, ModelSpec};
use crate::rng::{self, Tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    /// Present on evaluation rounds only.
    pub acc: Option<f64>,
    pub asr: Option<f64>,
    /// Present for the similarity-based defenses unless the round fell back.
    pub d_t: Option<f64>,
    pub phi_t: Option<f64>,
    pub accepted: Vec<usize>,
    pub malicious_selected: Vec<usize>,
    /// Malicious and rejected.
    pub tp: usize,
    /// Honest and rejected.
    pub fp: usize,
    /// Malicious and accepted.
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fallback: bool,
    pub wall_ms: f64,
}

impl RoundRecord {
    pub fn is_eval(&self) -> bool {
        self.acc.is_some()
    }
}

/// `k` distinct ids out of `total`, ascending, from the `(seed, round)` stream.
pub fn sample_clients(total: usize, k: usize, round: usize, master_seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > total {
        return Err(Error::config(format!("cannot sample {k} of {total} clients")));
    }
    let mut ids: Vec<usize> = (0..total).collect();
    let mut rng = rng::stream(master_seed, Tag::Sampling, &[round as u64]);
    let (chosen, _) = ids.partial_shuffle(&mut rng, k);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Sample with exactly `forced` members of the roster `0..roster`.
pub fn sample_clients_forced(
    total: usize,
    k: usize,
    roster: usize,
    forced: usize,
    round: usize,
    master_seed: u64,
) -> Result<Vec<usize>> {
    if roster > total || forced > roster.min(k) || total - roster < k - forced {
        return Err(Error::config(format!(
            "cannot place {forced} of {roster} roster clients in a round of {k} out of {total}"
        )));
    }
    let mut bad: Vec<usize> = (0..roster).collect();
    let mut good: Vec<usize> = (roster..total).collect();
    let mut rng = rng::stream(master_seed, Tag::Sampling, &[round as u64, 1]);
    let (a, _) = bad.partial_shuffle(&mut rng, forced);
    let mut out = a.to_vec();
    let mut rng = rng::stream(master_seed, Tag::Sampling, &[round as u64, 2]);
    let (b, _) = good.partial_shuffle(&mut rng, k - forced);
    out.extend_from_slice(b);
    out.sort_unstable();
    Ok(out)
}

/// Everything that stays fixed across rounds.
#[derive(Debug, Clone)]
pub struct Environment {
    pub spec: ModelSpec,
    pub train: Vec<Example>,
    /// Held-out clean split, never given to clients.
    pub test: Vec<Example>,
    pub partition: Partition,
    /// Triggered edge-case samples; empty unless the attack needs them.
    pub edge_pool: Vec<Example>,
    pub attack: AttackConfig,
}

impl Environment {
    pub fn build(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let d = &cfg.data;
        let (train, test) = match d.source {
            DataSource::Blobs => {
                let centers = class_centers(&d.blob_spec(), cfg.master_seed)?;
                let train = sample_blobs(&centers, d.train_per_class, cfg.master_seed)?;
                let test_seed = rng::derive(cfg.master_seed, Tag::TestSamples, &[]);
                let test = sample_blobs(&centers, d.test_per_class, test_seed)?;
                (train, test)
            }
            DataSource::Idx => {
                let need = |p: &Option<std::path::PathBuf>| p.clone().expect("validated");
                let train = load_idx(&need(&d.train_images), &need(&d.train_labels))?;
                let test = load_idx(&need(&d.test_images), &need(&d.test_labels))?;
                for e in train.iter().chain(&test) {
                    if e.features.dim() != d.feature_dim {
                        return Err(Error::config(format!(
                            "data.feature_dim is {} but the IDX images have {} pixels",
                            d.feature_dim,
                            e.features.dim()
                        )));
                    }
                    if e.label >= d.num_classes {
                        return Err(Error::config(format!(
                            "IDX label {} is not below data.num_classes = {}",
                            e.label, d.num_classes
                        )));
                    }
                }
                (train, test)
            }
        };
        let labels: Vec<usize> = train.iter().map(|e| e.label).collect();
        let partition = dirichlet_partition(&labels, cfg.total_clients, d.dirichlet_q, cfg.master_seed)?;
        let attack = cfg.attack_config();
        let edge_pool = if attack.kind == AttackKind::EdgeCasePgd && cfg.malicious_count > 0 {
            build_edge_pool(&train, &attack, cfg.master_seed)?
        } else {
            Vec::new()
        };
        Ok(Environment {
            spec: cfg.model_spec(),
            train,
            test,
            partition,
            edge_pool,
            attack,
        })
    }

    pub fn client_data(&self, id: usize) -> Vec<Example> {
        self.partition
            .client(id)
            .iter()
            .map(|&i| self.train[i].clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Rounds completed so far.
    pub round: usize,
    pub global: ParamVector,
    /// Change applied to the global model in the last completed round.
    pub last_update: Option<ParamVector>,
}

impl SimState {
    pub fn initial(env: &Environment, cfg: &SimConfig) -> Self {
        SimState {
            round: 0,
            global: init_params(&env.spec, cfg.master_seed),
            last_update: None,
        }
    }
}

/// Run the next round and report what happened in it.
pub fn run_round(state: &SimState, env: &Environment, cfg: &SimConfig) -> Result<(SimState, RoundRecord)> {
    let started = Instant::now();
    let round = state.round + 1;
    let k = cfg.clients_per_round;
    let sampled = if cfg.force_c_per_round > 0 {
        sample_clients_forced(
            cfg.total_clients,
            k,
            cfg.malicious_count,
            cfg.force_c_per_round,
            round,
            cfg.master_seed,
        )?
    } else {
        sample_clients(cfg.total_clients, k, round, cfg.master_seed)?
    };
    let is_malicious = |id: usize| id < cfg.malicious_count;

    let updates: Vec<ClientUpdate> = sampled
        .par_iter()
        .map(|&id| {
            let data = env.client_data(id);
            let tspec = cfg.train_spec(rng::derive(
                cfg.master_seed,
                Tag::ClientTrain,
                &[round as u64, id as u64],
            ));
            let local = if is_malicious(id) {
                malicious_local_train(
                    &state.global,
                    state.last_update.as_ref(),
                    &env.spec,
                    &data,
                    &env.edge_pool,
                    &tspec,
                    &env.attack,
                )?
            } else {
                local_train(&state.global, &env.spec, &data, &tspec)?
            };
            Ok(ClientUpdate::new(id, local.sub(&state.global)?, data.len()))
        })
        .collect::<Result<_>>()?;

    let noise_seed = rng::derive(cfg.master_seed, Tag::DpNoise, &[round as u64]);
    let outcome = aggregate(&updates, &cfg.defense, noise_seed)?;
    let global = apply_update(&state.global, &outcome, cfg.defense.global_lr)?;

    let malicious_selected: Vec<usize> = sampled.iter().copied().filter(|&id| is_malicious(id)).collect();
    let accepted = |id: usize| outcome.accepted.binary_search(&id).is_ok();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for &id in &sampled {
        match (is_malicious(id), accepted(id)) {
            (true, false) => tp += 1,
            (false, false) => fp += 1,
            (true, true) => fn_ += 1,
            (false, true) => {}
        }
    }

    let (acc, asr) = if round % cfg.eval_every == 0 {
        (
            Some(evaluate_acc(&global, &env.spec, &env.test)?),
            Some(evaluate_asr(&global, &env.spec, &env.test, &env.attack.trigger)?),
        )
    } else {
        (None, None)
    };
    let diag = outcome.diagnostics.as_ref();
    let record = RoundRecord {
        round,
        acc,
        asr,
        d_t: diag.map(|d| d.d_t),
        phi_t: diag.map(|d| d.phi_t),
        accepted: outcome.accepted.clone(),
        malicious_selected,
        tp,
        fp,
        fn_,
        fallback: outcome.fallback,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let last_update = Some(global.sub(&state.global)?);
    Ok((
        SimState {
            round,
            global,
            last_update,
        },
        record,
    ))
}

fn run_rounds(cfg: &SimConfig) -> Result<(Vec<RoundRecord>, ParamVector)> {
    let env = Environment::build(cfg)?;
    let mut state = SimState::initial(&env, cfg);
    let mut records = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let (next, rec) = run_round(&state, &env, cfg)?;
        if let (Some(acc), Some(asr)) = (rec.acc, rec.asr) {
            info!("round {:>4}  acc {acc:.4}  asr {asr:.4}", rec.round);
        }
        state = next;
        records.push(rec);
    }
    Ok((records, state.global))
}

/// Run `cfg.rounds` rounds from a fresh model; returns every round's record
/// together with the final global model.
pub fn run_simulation_with_model(cfg: &SimConfig) -> Result<(Vec<RoundRecord>, ParamVector)> {
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::config(format!("threads: {e}")))?;
        pool.install(|| run_rounds(cfg))
    } else {
        run_rounds(cfg)
    }
}

pub fn run_simulation(cfg: &SimConfig) -> Result<Vec<RoundRecord>> {
    Ok(run_simulation_with_model(cfg)?.0)
}
