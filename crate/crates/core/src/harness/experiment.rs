//! FedAvg driver: setup once, then `T` online rounds over the simulator.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::NodeId;
use crate::joye_libert::{JlParams, JlUserKey};
use crate::keyagreement::ka_param;
use crate::protocol::{
    jl_setup_phase, jl_share_field, lom_setup_phase, run_online_round, select_cohort, JlMode,
    NodeKeys, Party, ProtocolError, RoundContext, Scheme, ServerKeys,
};
use crate::quantizer::clip;

use super::config::{ConfigError, ExperimentConfig, ExperimentScheme};
use super::task::SyntheticTask;
use super::transport::{DropRule, SimTransport, Transcript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub tau: u64,
    pub cohort: Vec<NodeId>,
    /// Mean local training time per cohort node.
    pub train_s: f64,
    /// Mean quantize-and-protect time per cohort node.
    pub protect_s: f64,
    pub aggregate_s: f64,
    pub total_s: f64,
    /// Test MSE of the new global model.
    pub metric: f64,
    /// First 16 hex digits of SHA-256 over the global model's f64 bits.
    pub checksum: String,
    /// Largest element-wise distance between the new global model and the
    /// floating-point weighted mean of the clipped local models.
    pub fedavg_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub reports: Vec<RoundReport>,
    pub final_model: Vec<f64>,
    pub transcript: Transcript,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{} aborted: {error}", phase_name(*.tau))]
    Protocol {
        /// `None` for the setup phase.
        tau: Option<u64>,
        error: ProtocolError,
        completed: Vec<RoundReport>,
    },
}

fn phase_name(tau: Option<u64>) -> String {
    match tau {
        None => "setup".into(),
        Some(t) => format!("round {t}"),
    }
}

fn checksum(model: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in model {
        h.update(v.to_bits().to_be_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

fn node_rng(seed: u64, tau: u64, node: NodeId) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"secagg/train");
    h.update(seed.to_be_bytes());
    h.update(tau.to_be_bytes());
    h.update(node.get().to_be_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

fn weighted_mean(models: &[(Vec<f64>, u64)], d: usize) -> Vec<f64> {
    let s: u64 = models.iter().map(|(_, w)| w).sum();
    let mut acc = vec![0.0; d];
    for (theta, w) in models {
        for (a, v) in acc.iter_mut().zip(theta) {
            *a += *w as f64 * v;
        }
    }
    acc.into_iter().map(|a| a / s as f64).collect()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun, ExperimentError> {
    run_experiment_with_faults(cfg, &[])
}

/// [`run_experiment`] with messages matching `faults` dropped in transit.
pub fn run_experiment_with_faults(
    cfg: &ExperimentConfig,
    faults: &[DropRule],
) -> Result<ExperimentRun, ExperimentError> {
    cfg.validate()?;
    let quant = cfg.quant()?;
    let all = NodeId::range(cfg.n_tot);
    let task = SyntheticTask::generate(&cfg.task, cfg.n_tot, cfg.d, cfg.seed);
    let sizes = task.shard_sizes();
    let weight_of = |u: NodeId| sizes[u.get() as usize - 1] as u64;

    let mut transport = SimTransport::new(
        cfg.seed,
        std::iter::once(Party::Server).chain(all.iter().map(|&u| Party::Node(u))),
    );
    for &rule in faults {
        transport.drop_messages(rule);
    }

    let setup_failed = |error| ExperimentError::Protocol {
        tau: None,
        error,
        completed: Vec::new(),
    };
    let mut setup_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    setup_rng.set_stream(1);
    let keys = match cfg.scheme {
        ExperimentScheme::Jl => {
            let params = JlParams::generate(cfg.profile.modulus_bits(), &mut setup_rng)
                .map_err(|e| setup_failed(e.into()))?;
            let field = jl_share_field(&params, cfg.n_tot).map_err(setup_failed)?;
            let out = jl_setup_phase(
                &all,
                cfg.threshold(),
                &params,
                &field,
                &mut transport,
                &mut setup_rng,
            )
            .map_err(setup_failed)?;
            let nodes = out
                .node_keys
                .into_iter()
                .map(|(u, key): (NodeId, JlUserKey)| {
                    (
                        u,
                        NodeKeys::Jl {
                            params: params.clone(),
                            key,
                        },
                    )
                })
                .collect();
            Some((
                nodes,
                ServerKeys::Jl {
                    params,
                    key: out.server_key,
                },
            ))
        }
        ExperimentScheme::Lom => {
            let group =
                ka_param(cfg.profile, &mut setup_rng).map_err(|e| setup_failed(e.into()))?;
            let secrets = lom_setup_phase(&all, &group, &mut transport, &mut setup_rng)
                .map_err(setup_failed)?;
            let nodes: BTreeMap<NodeId, NodeKeys> = secrets
                .into_iter()
                .map(|(u, secrets)| (u, NodeKeys::Lom { secrets }))
                .collect();
            Some((nodes, ServerKeys::Lom))
        }
        ExperimentScheme::Plain => None,
    };

    let mut global = vec![0.0; cfg.d];
    let mut reports = Vec::with_capacity(cfg.rounds as usize);
    let [lo, hi] = cfg.clip_range;
    for tau in 0..cfg.rounds {
        let failed = |error, completed: &Vec<RoundReport>| ExperimentError::Protocol {
            tau: Some(tau),
            error,
            completed: completed.clone(),
        };
        let round_start = Instant::now();
        let cohort = select_cohort(&all, cfg.n, tau, cfg.seed).map_err(|e| failed(e, &reports))?;
        let mut locals: Vec<(Vec<f64>, u64)> = Vec::with_capacity(cohort.len());
        let mut train_time = Duration::ZERO;
        let mut train = |u: NodeId, model: &[f64]| {
            let start = Instant::now();
            let mut rng = node_rng(cfg.seed, tau, u);
            let idx = u.get() as usize - 1;
            let theta = task.train(idx, model, cfg.e, cfg.b, cfg.eta, &mut rng);
            train_time += start.elapsed();
            (theta, weight_of(u))
        };

        let (model, protect_time, aggregate_time, deviation) = match &keys {
            None => {
                for &u in &cohort {
                    locals.push(train(u, &global));
                }
                let start = Instant::now();
                let model = weighted_mean(&locals, cfg.d);
                (model, Duration::ZERO, start.elapsed(), 0.0)
            }
            Some((node_keys, server_keys)) => {
                let scheme = match cfg.scheme {
                    ExperimentScheme::Jl => Scheme::Jl,
                    _ => Scheme::Lom,
                };
                let ctx = RoundContext::new(tau, cohort.clone(), scheme, quant, &all)
                    .map_err(|e| failed(e, &reports))?
                    .with_jl_mode(JlMode::from(cfg.jl_mode));
                let outcome = run_online_round(
                    &ctx,
                    &mut transport,
                    node_keys,
                    server_keys,
                    &global,
                    |u, model| {
                        let (theta, w) = train(u, model);
                        locals.push((theta.clone(), w));
                        Ok((theta, w))
                    },
                )
                .map_err(|e| failed(e, &reports))?;
                let clipped: Vec<(Vec<f64>, u64)> = locals
                    .iter()
                    .map(|(theta, w)| {
                        let c = theta
                            .iter()
                            .map(|&v| clip(v, lo, hi).expect("validated range"));
                        (c.collect(), *w)
                    })
                    .collect();
                let reference = weighted_mean(&clipped, cfg.d);
                let deviation = outcome
                    .model
                    .iter()
                    .zip(&reference)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let protect: Duration = outcome.protect_times.values().sum();
                (outcome.model, protect, outcome.aggregate_time, deviation)
            }
        };
        global = model;
        let metric = task.test_mse(&global);
        let k = cohort.len() as f64;
        reports.push(RoundReport {
            tau,
            cohort,
            train_s: secs(train_time) / k,
            protect_s: secs(protect_time) / k,
            aggregate_s: secs(aggregate_time),
            total_s: secs(round_start.elapsed()),
            metric,
            checksum: checksum(&global),
            fedavg_deviation: deviation,
        });
    }

    Ok(ExperimentRun {
        reports,
        final_model: global,
        transcript: transport.into_transcript(),
    })
}
