//! Server and node roles for the setup and online phases of both schemes.
//!
//! Roles exchange [`ProtocolMessage`]s through a [`Transport`]. Each phase
//! driver owns the role states, delivers one message at a time, and poisons
//! the whole phase on the first error.

mod online;
mod setup;
pub mod wire;

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::ids::NodeId;
use crate::joye_libert::{
    jl_aggregate, jl_aggregate_packed, jl_protect, jl_protect_packed, JlCiphertext, JlError,
    JlParams, JlServerKey, JlUserKey,
};
use crate::keyagreement::{KeyAgreementError, PairwiseSecret};
use crate::lom::{lom_aggregate, lom_protect, LomError, LomParams, MaskedVector};
use crate::quantizer::{
    apply_weight, dequantize_aggregate, quantize, QuantConfig, QuantError, QuantizedVector,
};
use crate::shamir::ShamirError;

pub use online::{run_online_round, RoundOutcome};
pub use setup::{jl_setup_phase, jl_share_field, lom_setup_phase, JlSetupOutput};
pub use wire::{MessageKind, Party, Payload, ProtocolMessage, Round, WireError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Jl(#[from] JlError),
    #[error(transparent)]
    Lom(#[from] LomError),
    #[error(transparent)]
    Shamir(#[from] ShamirError),
    #[error(transparent)]
    KeyAgreement(#[from] KeyAgreementError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("setup aborted: server holds {collected} key shares, threshold is {threshold}")]
    SetupAborted { collected: usize, threshold: usize },
    #[error("{node} never received the public key of {from}")]
    MissingPublicKey { node: NodeId, from: NodeId },
    #[error("cohort of {requested} requested from {available} nodes")]
    CohortTooLarge { requested: usize, available: usize },
    #[error("no update from {0:?}")]
    MissingUpdate(Vec<NodeId>),
    #[error("no route to {0}")]
    UndeliverableMessage(Party),
    #[error("invalid round context: {0}")]
    InvalidContext(String),
    #[error("unexpected {kind:?} message from {sender}")]
    UnexpectedMessage { kind: MessageKind, sender: Party },
    #[error("update weight {weight} does not fit in {bits} bits")]
    WeightOverflow { weight: u64, bits: u32 },
    #[error("round aborted: {0}")]
    Aborted(String),
}

/// Message channel between roles.
pub trait Transport {
    fn send(&mut self, msg: ProtocolMessage) -> Result<(), ProtocolError>;

    /// Next message to hand to its recipient, `None` once quiescent.
    fn deliver(&mut self) -> Option<ProtocolMessage>;

    /// Marks the start of a protocol phase; purely informational.
    fn begin_phase(&mut self, _label: &str) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Jl,
    Lom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JlMode {
    Naive,
    #[default]
    Packed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundContext {
    tau: u64,
    cohort: Vec<NodeId>,
    scheme: Scheme,
    quant: QuantConfig,
    jl_mode: JlMode,
}

impl RoundContext {
    /// Checks that `cohort` is a sorted subset of `all_nodes` sized to the
    /// quantizer's participant count, and that JL rounds include everyone.
    pub fn new(
        tau: u64,
        cohort: Vec<NodeId>,
        scheme: Scheme,
        quant: QuantConfig,
        all_nodes: &[NodeId],
    ) -> Result<Self, ProtocolError> {
        if cohort.is_empty() {
            return Err(ProtocolError::InvalidContext("empty cohort".into()));
        }
        if cohort.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProtocolError::InvalidContext(
                "cohort must be sorted without duplicates".into(),
            ));
        }
        if let Some(u) = cohort.iter().find(|u| !all_nodes.contains(u)) {
            return Err(ProtocolError::InvalidContext(format!(
                "{u} is not a registered node"
            )));
        }
        if quant.participants() != cohort.len() {
            return Err(ProtocolError::InvalidContext(format!(
                "quantizer sized for {} participants, cohort has {}",
                quant.participants(),
                cohort.len()
            )));
        }
        if scheme == Scheme::Jl && cohort.len() != all_nodes.len() {
            return Err(ProtocolError::InvalidContext(
                "JL rounds require every node in the cohort".into(),
            ));
        }
        Ok(Self {
            tau,
            cohort,
            scheme,
            quant,
            jl_mode: JlMode::default(),
        })
    }

    pub fn with_jl_mode(mut self, mode: JlMode) -> Self {
        self.jl_mode = mode;
        self
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn cohort(&self) -> &[NodeId] {
        &self.cohort
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn quant(&self) -> &QuantConfig {
        &self.quant
    }

    pub fn jl_mode(&self) -> JlMode {
        self.jl_mode
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateBody {
    Jl(JlCiphertext),
    Lom { sum_bits: u32, masked: MaskedVector },
}

/// One node's protected contribution; the weight travels in the clear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedUpdate {
    pub body: UpdateBody,
    pub weight: u64,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub enum NodeKeys {
    Jl {
        params: JlParams,
        key: JlUserKey,
    },
    Lom {
        secrets: BTreeMap<NodeId, PairwiseSecret>,
    },
}

#[derive(Debug, Clone)]
pub enum ServerKeys {
    Jl { params: JlParams, key: JlServerKey },
    Lom,
}

impl ServerKeys {
    fn scheme(&self) -> Scheme {
        match self {
            ServerKeys::Jl { .. } => Scheme::Jl,
            ServerKeys::Lom => Scheme::Lom,
        }
    }
}

/// Uniform sample of `n` nodes without replacement, reproducible from
/// `(seed, tau)` and returned sorted.
pub fn select_cohort(
    all_nodes: &[NodeId],
    n: usize,
    tau: u64,
    seed: u64,
) -> Result<Vec<NodeId>, ProtocolError> {
    if n > all_nodes.len() {
        return Err(ProtocolError::CohortTooLarge {
            requested: n,
            available: all_nodes.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(tau);
    let mut cohort: Vec<NodeId> = sample(&mut rng, all_nodes.len(), n)
        .into_iter()
        .map(|i| all_nodes[i])
        .collect();
    cohort.sort_unstable();
    Ok(cohort)
}

/// quantize, weight, then protect under the round's scheme.
pub fn node_online_step(
    ctx: &RoundContext,
    me: NodeId,
    theta: &[f64],
    weight: u64,
    keys: &NodeKeys,
) -> Result<ProtectedUpdate, ProtocolError> {
    if !ctx.cohort.contains(&me) {
        return Err(LomError::NotInCohort(me).into());
    }
    let q = quantize(theta, &ctx.quant)?;
    let x = apply_weight(&q, weight, &ctx.quant)?;
    let m = ctx.quant.sum_bits();
    let body = match (ctx.scheme, keys) {
        (Scheme::Jl, NodeKeys::Jl { params, key }) => UpdateBody::Jl(match ctx.jl_mode {
            JlMode::Packed => jl_protect_packed(params, key, ctx.tau, &x, m)?,
            JlMode::Naive => jl_protect(params, key, ctx.tau, &x, m)?,
        }),
        (Scheme::Lom, NodeKeys::Lom { secrets }) => {
            let params = LomParams::new(m)?;
            UpdateBody::Lom {
                sum_bits: m,
                masked: lom_protect(&params, secrets, me, &ctx.cohort, ctx.tau, &x)?,
            }
        }
        _ => {
            return Err(ProtocolError::InvalidContext(
                "node keys do not match the round scheme".into(),
            ))
        }
    };
    Ok(ProtectedUpdate {
        body,
        weight,
        dim: theta.len(),
    })
}

/// Exact integer aggregate `sum_u Q(theta_u) w_u` and the weight sum `s`.
pub fn server_aggregate(
    ctx: &RoundContext,
    updates: &BTreeMap<NodeId, ProtectedUpdate>,
    keys: &ServerKeys,
) -> Result<(QuantizedVector, u64), ProtocolError> {
    if keys.scheme() != ctx.scheme {
        return Err(ProtocolError::InvalidContext(
            "server keys do not match the round scheme".into(),
        ));
    }
    let missing: Vec<NodeId> = ctx
        .cohort
        .iter()
        .copied()
        .filter(|u| !updates.contains_key(u))
        .collect();
    if !missing.is_empty() {
        return Err(ProtocolError::MissingUpdate(missing));
    }
    if let Some(u) = updates.keys().find(|u| !ctx.cohort.contains(u)) {
        return Err(LomError::NotInCohort(*u).into());
    }

    let w_bits = ctx.quant.weight_bits();
    let mut weight_sum = 0u64;
    for update in updates.values() {
        if update.weight >> w_bits != 0 {
            return Err(ProtocolError::WeightOverflow {
                weight: update.weight,
                bits: w_bits,
            });
        }
        weight_sum += update.weight;
    }
    if weight_sum == 0 {
        return Err(QuantError::ZeroWeightSum.into());
    }

    let n = ctx.cohort.len();
    let dim = updates.values().next().map(|u| u.dim).unwrap_or(0);
    let aggregate = match keys {
        ServerKeys::Jl { params, key } => {
            let cts = updates
                .values()
                .map(|u| match &u.body {
                    UpdateBody::Jl(ct) if ct.dim == dim && u.dim == dim => Ok(ct.clone()),
                    UpdateBody::Jl(_) => Err(JlError::LayoutMismatch.into()),
                    UpdateBody::Lom { .. } => Err(ProtocolError::InvalidContext(
                        "masked vector in a JL round".into(),
                    )),
                })
                .collect::<Result<Vec<_>, ProtocolError>>()?;
            match ctx.jl_mode {
                JlMode::Packed => jl_aggregate_packed(params, key, ctx.tau, &cts, n)?,
                JlMode::Naive => jl_aggregate(params, key, ctx.tau, &cts, n)?,
            }
        }
        ServerKeys::Lom => {
            let m = ctx.quant.sum_bits();
            let masked = updates
                .values()
                .map(|u| match &u.body {
                    UpdateBody::Lom { sum_bits, masked } if *sum_bits == m && u.dim == dim => {
                        Ok(masked.clone())
                    }
                    UpdateBody::Lom { .. } => Err(LomError::LengthMismatch.into()),
                    UpdateBody::Jl(_) => Err(ProtocolError::InvalidContext(
                        "JL ciphertext in a LOM round".into(),
                    )),
                })
                .collect::<Result<Vec<_>, ProtocolError>>()?;
            lom_aggregate(&LomParams::new(m)?, &masked, n)?
        }
    };
    if aggregate.len() != dim {
        return Err(JlError::LengthMismatch {
            expected: dim,
            got: aggregate.len(),
        }
        .into());
    }
    Ok((aggregate, weight_sum))
}

/// Aggregates, divides by the weight sum and dequantizes: the next global model.
pub fn server_online_step(
    ctx: &RoundContext,
    updates: &BTreeMap<NodeId, ProtectedUpdate>,
    keys: &ServerKeys,
) -> Result<Vec<f64>, ProtocolError> {
    let (aggregate, weight_sum) = server_aggregate(ctx, updates, keys)?;
    Ok(dequantize_aggregate(&aggregate, weight_sum, &ctx.quant)?)
}
