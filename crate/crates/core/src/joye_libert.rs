//! Joye-Libert aggregation.
//!
//! A node holding `sk_u` protects plaintext `x` under tag `t` as
//! `(1 + x N) * F(t)^sk_u mod N^2`. Multiplying the ciphertexts of every
//! node gives `(1 + (sum x) N) * F(t)^(sum sk_u)`, and the aggregator key
//! `k0 = -sum sk_u` cancels the mask: `(F(t)^k0 * y - 1) / N = sum x`.
//!
//! Vectors are protected element-wise with tag `tau || i`, or packed: several
//! `M`-bit slots are concatenated into one plaintext below `N` and tagged
//! with the packed index.

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

use crate::modmath::{gen_prime, hash_to_unit_group, mod_exp, ModMathError};
use crate::quantizer::QuantizedVector;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JlError {
    #[error("plaintext {value} does not fit the {bits}-bit slot or the modulus")]
    PlaintextOverflow { value: u64, bits: u32 },
    #[error("expected {expected} ciphertexts, got {got}")]
    MissingCiphertext { expected: usize, got: usize },
    #[error("ciphertexts disagree on layout, length or round")]
    LayoutMismatch,
    #[error("decryption failed: mask did not cancel")]
    DecryptionFailure,
    #[error("slot width {slot_bits} leaves no room in a {modulus_bits}-bit modulus")]
    SlotOverflow { slot_bits: u32, modulus_bits: u64 },
    #[error("expected {expected} packed plaintexts, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Math(#[from] ModMathError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TagHash {
    Sha256,
    Fixed(BigUint),
}

/// Public parameters: the modulus `N` and the tag hash `F`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JlParams {
    modulus: BigUint,
    n_squared: BigUint,
    modulus_bits: u64,
    hash: TagHash,
}

impl JlParams {
    /// `N = p q` with two distinct primes of `modulus_bits / 2` bits each and
    /// `N` exactly `modulus_bits` wide.
    pub fn generate<R: Rng + ?Sized>(modulus_bits: u64, rng: &mut R) -> Result<Self, JlError> {
        if modulus_bits < 16 || !modulus_bits.is_multiple_of(2) {
            return Err(JlError::InvalidParams(format!(
                "modulus width must be even and at least 16, got {modulus_bits}"
            )));
        }
        let half = modulus_bits / 2;
        loop {
            let p = gen_prime(half, rng)?;
            let q = gen_prime(half, rng)?;
            if p == q {
                continue;
            }
            let n = p * q;
            if n.bits() == modulus_bits {
                return Self::from_modulus(n);
            }
        }
    }

    /// Public parameters as published by the server.
    pub fn from_modulus(modulus: BigUint) -> Result<Self, JlError> {
        if modulus.is_even() || modulus < BigUint::from(15u32) {
            return Err(JlError::InvalidParams(
                "modulus must be odd and composite".into(),
            ));
        }
        Ok(Self {
            n_squared: &modulus * &modulus,
            modulus_bits: modulus.bits(),
            modulus,
            hash: TagHash::Sha256,
        })
    }

    /// Unchecked parameters whose tag hash always returns `base`. Only
    /// meant for hand-verifiable toy moduli.
    pub fn toy(modulus: u64, base: u64) -> Self {
        let modulus = BigUint::from(modulus);
        Self {
            n_squared: &modulus * &modulus,
            modulus_bits: modulus.bits(),
            modulus,
            hash: TagHash::Fixed(base.into()),
        }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn modulus_bits(&self) -> u64 {
        self.modulus_bits
    }

    /// `F(tag)`, a unit of `Z_{N^2}`.
    pub fn tag_hash(&self, tag: &[u8]) -> BigUint {
        match &self.hash {
            TagHash::Sha256 => hash_to_unit_group(tag, &self.n_squared),
            TagHash::Fixed(base) => base.clone(),
        }
    }

    /// Number of `slot_bits`-wide slots packed into one plaintext; one bit
    /// of headroom keeps every packed plaintext below `N`.
    pub fn slots_per_residue(&self, slot_bits: u32) -> Result<usize, JlError> {
        slots_for(self.modulus_bits, slot_bits)
    }
}

fn slots_for(modulus_bits: u64, slot_bits: u32) -> Result<usize, JlError> {
    let slots = if slot_bits == 0 {
        0
    } else {
        (modulus_bits.saturating_sub(1) / slot_bits as u64) as usize
    };
    if slots == 0 {
        return Err(JlError::SlotOverflow {
            slot_bits,
            modulus_bits,
        });
    }
    Ok(slots)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JlUserKey {
    pub sk: BigUint,
}

/// Aggregator key `k0 = -sum sk_u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JlServerKey {
    pub k0: BigInt,
}

impl JlServerKey {
    pub fn from_key_sum(sum: &BigUint) -> Self {
        Self {
            k0: -BigInt::from(sum.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JlLayout {
    Naive,
    Packed { slots_per_residue: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JlCiphertext {
    pub residues: Vec<BigUint>,
    pub layout: JlLayout,
    /// `M`
    pub slot_bits: u32,
    /// Number of vector elements encoded.
    pub dim: usize,
    pub round: u64,
}

/// Dealer-mode key generation: random `sk_u` in `[0, N^2)` and their
/// negated sum.
pub fn jl_setup<R: Rng + ?Sized>(
    modulus_bits: u64,
    n_users: usize,
    rng: &mut R,
) -> Result<(Vec<JlUserKey>, JlServerKey, JlParams), JlError> {
    let params = JlParams::generate(modulus_bits, rng)?;
    let (users, server) = jl_keys_for(&params, n_users, rng)?;
    Ok((users, server, params))
}

/// Dealer-mode keys under existing parameters.
pub fn jl_keys_for<R: Rng + ?Sized>(
    params: &JlParams,
    n_users: usize,
    rng: &mut R,
) -> Result<(Vec<JlUserKey>, JlServerKey), JlError> {
    if n_users < 2 {
        return Err(JlError::InvalidParams(format!(
            "need at least 2 users, got {n_users}"
        )));
    }
    let users: Vec<JlUserKey> = (0..n_users)
        .map(|_| JlUserKey {
            sk: rng.gen_biguint_below(params.n_squared()),
        })
        .collect();
    let sum = users.iter().fold(BigUint::zero(), |acc, k| acc + &k.sk);
    Ok((users, JlServerKey::from_key_sum(&sum)))
}

/// `tau || i`, both as 8-byte big-endian integers.
pub fn round_tag(tau: u64, index: u64) -> [u8; 16] {
    let mut tag = [0u8; 16];
    tag[..8].copy_from_slice(&tau.to_be_bytes());
    tag[8..].copy_from_slice(&index.to_be_bytes());
    tag
}

/// `(1 + x N) * F(tag)^sk mod N^2` for a single plaintext `x < N`.
pub fn protect_plaintext(
    params: &JlParams,
    key: &JlUserKey,
    tag: &[u8],
    plaintext: &BigUint,
) -> BigUint {
    let n2 = params.n_squared();
    let mask = params.tag_hash(tag).modpow(&key.sk, n2);
    let encoded = (BigUint::one() + plaintext * params.modulus()) % n2;
    encoded * mask % n2
}

/// Unmasks an aggregated residue: `(F(tag)^k0 * y - 1) / N mod N`.
pub fn decrypt_product(
    params: &JlParams,
    key: &JlServerKey,
    tag: &[u8],
    product: &BigUint,
) -> Result<BigUint, JlError> {
    let n2 = params.n_squared();
    let unmask = mod_exp(&params.tag_hash(tag), &key.k0, n2)?;
    let v = unmask * product % n2;
    if v.is_zero() {
        return Err(JlError::DecryptionFailure);
    }
    let (quotient, remainder) = (v - 1u32).div_rem(params.modulus());
    if !remainder.is_zero() {
        return Err(JlError::DecryptionFailure);
    }
    Ok(quotient % params.modulus())
}

fn check_slot(params: &JlParams, slot_bits: u32) -> Result<(), JlError> {
    if slot_bits == 0 || slot_bits > 64 || slot_bits as u64 >= params.modulus_bits() {
        return Err(JlError::SlotOverflow {
            slot_bits,
            modulus_bits: params.modulus_bits(),
        });
    }
    Ok(())
}

/// Element-wise protection with tag `round_tag(tau, i)` for element `i`.
pub fn jl_protect(
    params: &JlParams,
    key: &JlUserKey,
    tau: u64,
    x: &QuantizedVector,
    slot_bits: u32,
) -> Result<JlCiphertext, JlError> {
    check_slot(params, slot_bits)?;
    let mut residues = Vec::with_capacity(x.len());
    for (i, &value) in x.values().iter().enumerate() {
        let plain = BigUint::from(value);
        if (slot_bits < 64 && value >> slot_bits != 0) || &plain >= params.modulus() {
            return Err(JlError::PlaintextOverflow {
                value,
                bits: slot_bits,
            });
        }
        residues.push(protect_plaintext(
            params,
            key,
            &round_tag(tau, i as u64),
            &plain,
        ));
    }
    Ok(JlCiphertext {
        residues,
        layout: JlLayout::Naive,
        slot_bits,
        dim: x.len(),
        round: tau,
    })
}

fn check_batch(
    ciphertexts: &[JlCiphertext],
    expected: usize,
    tau: u64,
    layout: fn(&JlLayout) -> bool,
) -> Result<(), JlError> {
    if ciphertexts.len() < expected {
        return Err(JlError::MissingCiphertext {
            expected,
            got: ciphertexts.len(),
        });
    }
    let first = match ciphertexts.first() {
        Some(c) => c,
        None => return Err(JlError::MissingCiphertext { expected, got: 0 }),
    };
    if ciphertexts.len() > expected
        || !layout(&first.layout)
        || ciphertexts.iter().any(|c| {
            c.layout != first.layout
                || c.slot_bits != first.slot_bits
                || c.dim != first.dim
                || c.residues.len() != first.residues.len()
                || c.round != tau
        })
    {
        return Err(JlError::LayoutMismatch);
    }
    Ok(())
}

fn multiply_residues(params: &JlParams, ciphertexts: &[JlCiphertext], k: usize) -> BigUint {
    let n2 = params.n_squared();
    ciphertexts
        .iter()
        .fold(BigUint::one(), |acc, c| acc * &c.residues[k] % n2)
}

/// Aggregates and decrypts naive ciphertexts. Every one of the `expected`
/// nodes must be present: without all keys the mask does not cancel.
pub fn jl_aggregate(
    params: &JlParams,
    key: &JlServerKey,
    tau: u64,
    ciphertexts: &[JlCiphertext],
    expected: usize,
) -> Result<QuantizedVector, JlError> {
    check_batch(ciphertexts, expected, tau, |l| *l == JlLayout::Naive)?;
    let first = &ciphertexts[0];
    let mut values = Vec::with_capacity(first.dim);
    for i in 0..first.residues.len() {
        let product = multiply_residues(params, ciphertexts, i);
        let plain = decrypt_product(params, key, &round_tag(tau, i as u64), &product)?;
        let value = plain.to_u64().ok_or(JlError::DecryptionFailure)?;
        values.push(value);
    }
    QuantizedVector::new(values, first.slot_bits).map_err(|_| JlError::DecryptionFailure)
}

/// Concatenates `slot_bits`-wide values, `slots_per_residue` per plaintext;
/// slot `j` of plaintext `k` holds element `k * slots_per_residue + j` at bit
/// offset `j * slot_bits`.
pub fn pack(
    x: &QuantizedVector,
    modulus_bits: u64,
    slot_bits: u32,
) -> Result<Vec<BigUint>, JlError> {
    let slots = slots_for(modulus_bits, slot_bits)?;
    if slot_bits > 64 {
        return Err(JlError::SlotOverflow {
            slot_bits,
            modulus_bits,
        });
    }
    if let Some(&value) = x
        .values()
        .iter()
        .find(|&&v| slot_bits < 64 && v >> slot_bits != 0)
    {
        return Err(JlError::PlaintextOverflow {
            value,
            bits: slot_bits,
        });
    }
    Ok(x.values()
        .chunks(slots)
        .map(|chunk| {
            chunk.iter().rev().fold(BigUint::zero(), |acc, &v| {
                (acc << slot_bits as usize) | BigUint::from(v)
            })
        })
        .collect())
}

/// Inverse of [`pack`].
pub fn unpack(
    plaintexts: &[BigUint],
    dim: usize,
    slot_bits: u32,
    slots_per_residue: usize,
) -> Result<QuantizedVector, JlError> {
    if slots_per_residue == 0 || slot_bits == 0 || slot_bits > 64 {
        return Err(JlError::SlotOverflow {
            slot_bits,
            modulus_bits: 0,
        });
    }
    let expected = dim.div_ceil(slots_per_residue);
    if plaintexts.len() != expected {
        return Err(JlError::LengthMismatch {
            expected,
            got: plaintexts.len(),
        });
    }
    let slot_mask = if slot_bits == 64 {
        BigUint::from(u64::MAX)
    } else {
        BigUint::from((1u64 << slot_bits) - 1)
    };
    let mut values = Vec::with_capacity(dim);
    for (k, plain) in plaintexts.iter().enumerate() {
        let in_this = (dim - k * slots_per_residue).min(slots_per_residue);
        let mut rest = plain.clone();
        for _ in 0..in_this {
            let slot = (&rest & &slot_mask)
                .to_u64()
                .expect("masked slot fits in u64");
            values.push(slot);
            rest >>= slot_bits as usize;
        }
    }
    Ok(QuantizedVector::new(values, slot_bits).expect("slots are masked to slot_bits"))
}

/// Packs `x` and protects plaintext `k` under `round_tag(tau, k)`.
pub fn jl_protect_packed(
    params: &JlParams,
    key: &JlUserKey,
    tau: u64,
    x: &QuantizedVector,
    slot_bits: u32,
) -> Result<JlCiphertext, JlError> {
    check_slot(params, slot_bits)?;
    let slots = params.slots_per_residue(slot_bits)?;
    let plaintexts = pack(x, params.modulus_bits(), slot_bits)?;
    let residues = plaintexts
        .iter()
        .enumerate()
        .map(|(k, plain)| protect_plaintext(params, key, &round_tag(tau, k as u64), plain))
        .collect();
    Ok(JlCiphertext {
        residues,
        layout: JlLayout::Packed {
            slots_per_residue: slots,
        },
        slot_bits,
        dim: x.len(),
        round: tau,
    })
}

/// Aggregates packed ciphertexts. Slot sums must stay below `2^M`, which the
/// quantizer bit budget guarantees.
pub fn jl_aggregate_packed(
    params: &JlParams,
    key: &JlServerKey,
    tau: u64,
    ciphertexts: &[JlCiphertext],
    expected: usize,
) -> Result<QuantizedVector, JlError> {
    check_batch(ciphertexts, expected, tau, |l| {
        matches!(l, JlLayout::Packed { .. })
    })?;
    let first = &ciphertexts[0];
    let slots = match first.layout {
        JlLayout::Packed { slots_per_residue } => slots_per_residue,
        JlLayout::Naive => unreachable!("checked above"),
    };
    let mut plaintexts = Vec::with_capacity(first.residues.len());
    for k in 0..first.residues.len() {
        let product = multiply_residues(params, ciphertexts, k);
        plaintexts.push(decrypt_product(
            params,
            key,
            &round_tag(tau, k as u64),
            &product,
        )?);
    }
    unpack(&plaintexts, first.dim, first.slot_bits, slots)
}

/// Sign-aware sum of user keys; `k0 + sum == 0` for a consistent setup.
pub fn key_sum_is_cancelled(users: &[JlUserKey], server: &JlServerKey) -> bool {
    let sum = users.iter().fold(BigInt::zero(), |acc, k| {
        acc + BigInt::from_biguint(Sign::Plus, k.sk.clone())
    });
    (sum + &server.k0).is_zero()
}
