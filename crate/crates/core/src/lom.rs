//! Low-overhead masking.
//!
//! Every pair of cohort members shares a key. For round `tau` each node adds,
//! modulo `D = 2^M`, the keystream of every pair it belongs to, with sign
//! `+1` towards higher ids and `-1` towards lower ids. The two halves of each
//! pair cancel, so the server's plain modular sum is the sum of the inputs.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::ids::NodeId;
use crate::keyagreement::PairwiseSecret;
use crate::quantizer::QuantizedVector;

/// Identifier of the keystream construction.
pub const PRF_ID: &str = "chacha20-stream/tau-nonce/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LomError {
    #[error("no pairwise secret shared with {0}")]
    MissingPairwiseSecret(NodeId),
    #[error("input {value} does not fit in {bits} bits")]
    InputOverflow { value: u64, bits: u32 },
    #[error("expected {expected} masked vectors, got {got}")]
    MissingVector { expected: usize, got: usize },
    #[error("masked vectors have different lengths")]
    LengthMismatch,
    #[error("{0} is not a member of the cohort")]
    NotInCohort(NodeId),
    #[error("mask width must be in 1..=63, got {0}")]
    InvalidWidth(u32),
}

/// Public parameters: the mask modulus `D = 2^M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LomParams {
    sum_bits: u32,
}

impl LomParams {
    pub fn new(sum_bits: u32) -> Result<Self, LomError> {
        if sum_bits == 0 || sum_bits > 63 {
            return Err(LomError::InvalidWidth(sum_bits));
        }
        Ok(Self { sum_bits })
    }

    pub fn sum_bits(&self) -> u32 {
        self.sum_bits
    }

    /// `D`
    pub fn modulus(&self) -> u64 {
        1u64 << self.sum_bits
    }

    pub fn prf_id(&self) -> &'static str {
        PRF_ID
    }

    fn mask(&self) -> u64 {
        self.modulus() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedVector {
    pub values: Vec<u64>,
}

/// `d` values in `[0, D)` cut contiguously, least significant bit first,
/// from the ChaCha20 keystream keyed by the pair key with `tau` as nonce.
pub fn mask_stream(secret: &PairwiseSecret, tau: u64, d: usize, params: &LomParams) -> Vec<u64> {
    let m = params.sum_bits as usize;
    let mut rng = ChaCha20Rng::from_seed(*secret.key_bytes());
    rng.set_stream(tau);
    let mut bytes = vec![0u8; (d * m).div_ceil(8) + 8];
    rng.fill_bytes(&mut bytes);

    let mask = params.mask();
    (0..d)
        .map(|i| {
            let bit = i * m;
            let byte = bit / 8;
            let shift = bit % 8;
            // shift + m <= 7 + 63 < 128
            let mut window = [0u8; 16];
            let take = (bytes.len() - byte).min(16);
            window[..take].copy_from_slice(&bytes[byte..byte + take]);
            ((u128::from_le_bytes(window) >> shift) as u64) & mask
        })
        .collect()
}

/// `+1` when `me < other`, `-1` otherwise.
pub fn mask_sign(me: NodeId, other: NodeId) -> i8 {
    if me < other {
        1
    } else {
        -1
    }
}

/// Masks `x` with the keystreams shared with every other cohort member.
pub fn lom_protect(
    params: &LomParams,
    secrets: &BTreeMap<NodeId, PairwiseSecret>,
    me: NodeId,
    cohort: &[NodeId],
    tau: u64,
    x: &QuantizedVector,
) -> Result<MaskedVector, LomError> {
    lom_protect_with_keystream(params, me, cohort, x, |peer, d| {
        secrets
            .get(&peer)
            .map(|s| mask_stream(s, tau, d, params))
            .ok_or(LomError::MissingPairwiseSecret(peer))
    })
}

/// [`lom_protect`] with a caller-supplied keystream per peer.
pub fn lom_protect_with_keystream<F>(
    params: &LomParams,
    me: NodeId,
    cohort: &[NodeId],
    x: &QuantizedVector,
    mut keystream: F,
) -> Result<MaskedVector, LomError>
where
    F: FnMut(NodeId, usize) -> Result<Vec<u64>, LomError>,
{
    if !cohort.contains(&me) {
        return Err(LomError::NotInCohort(me));
    }
    let mask = params.mask();
    if let Some(&value) = x.values().iter().find(|&&v| v > mask) {
        return Err(LomError::InputOverflow {
            value,
            bits: params.sum_bits,
        });
    }
    let d = x.len();
    let mut values = x.values().to_vec();
    for &peer in cohort.iter().filter(|&&v| v != me) {
        let stream = keystream(peer, d)?;
        let positive = mask_sign(me, peer) > 0;
        for (y, s) in values.iter_mut().zip(stream) {
            *y = if positive {
                y.wrapping_add(s)
            } else {
                y.wrapping_sub(s)
            } & mask;
        }
    }
    Ok(MaskedVector { values })
}

/// Element-wise sum mod `D` of exactly `expected` masked vectors.
pub fn lom_aggregate(
    params: &LomParams,
    masked: &[MaskedVector],
    expected: usize,
) -> Result<QuantizedVector, LomError> {
    if masked.len() != expected || masked.is_empty() {
        return Err(LomError::MissingVector {
            expected,
            got: masked.len(),
        });
    }
    let d = masked[0].values.len();
    if masked.iter().any(|v| v.values.len() != d) {
        return Err(LomError::LengthMismatch);
    }
    let mask = params.mask();
    let mut sum = vec![0u64; d];
    for v in masked {
        for (acc, &y) in sum.iter_mut().zip(&v.values) {
            *acc = acc.wrapping_add(y) & mask;
        }
    }
    Ok(QuantizedVector::new(sum, params.sum_bits).expect("reduced mod D"))
}

/// Symmetric random pair keys for `nodes`, standing in for key agreement.
pub fn dealer_pairwise_secrets<R: Rng + ?Sized>(
    nodes: &[NodeId],
    rng: &mut R,
) -> BTreeMap<NodeId, BTreeMap<NodeId, PairwiseSecret>> {
    let mut out: BTreeMap<NodeId, BTreeMap<NodeId, PairwiseSecret>> =
        nodes.iter().map(|&u| (u, BTreeMap::new())).collect();
    for (i, &u) in nodes.iter().enumerate() {
        for &v in &nodes[i + 1..] {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            let secret = PairwiseSecret::from_bytes(key);
            out.get_mut(&u).expect("present").insert(v, secret);
            out.get_mut(&v).expect("present").insert(u, secret);
        }
    }
    out
}
