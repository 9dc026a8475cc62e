//! t-out-of-n Shamir secret sharing over a prime field.

use std::collections::BTreeSet;

use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::Rng;
use thiserror::Error;

use crate::modmath::{is_probable_prime, mod_inv};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShamirError {
    #[error("threshold {t} invalid for {n} members")]
    InvalidThreshold { t: usize, n: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u64),
    #[error("share index {0} is zero in the field")]
    ZeroIndex(u64),
    #[error("need {needed} shares, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("share index sets differ")]
    IndexMismatch,
    #[error("field modulus is not prime")]
    InvalidField,
    #[error("secret or share value is not a field element")]
    OutOfField,
}

/// The prime field `F_p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    p: BigUint,
}

impl FieldSpec {
    pub fn new(p: BigUint) -> Result<Self, ShamirError> {
        if !is_probable_prime(&p) {
            return Err(ShamirError::InvalidField);
        }
        Ok(Self { p })
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    fn element(&self, index: u64) -> BigUint {
        BigUint::from(index) % &self.p
    }
}

/// One evaluation `(u, p(u))` of the sharing polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub index: u64,
    pub value: BigUint,
}

fn check_indices(
    indices: impl IntoIterator<Item = u64>,
    spec: &FieldSpec,
) -> Result<(), ShamirError> {
    let mut seen = BTreeSet::new();
    for index in indices {
        let e = spec.element(index);
        if e.is_zero() {
            return Err(ShamirError::ZeroIndex(index));
        }
        if !seen.insert(e) {
            return Err(ShamirError::DuplicateIndex(index));
        }
    }
    Ok(())
}

/// Splits `secret` into one share per member with a uniformly random
/// polynomial of degree `t - 1`.
pub fn ss_share<R: Rng + ?Sized>(
    secret: &BigUint,
    t: usize,
    members: &[u64],
    spec: &FieldSpec,
    rng: &mut R,
) -> Result<Vec<Share>, ShamirError> {
    if t == 0 || t > members.len() {
        return Err(ShamirError::InvalidThreshold {
            t,
            n: members.len(),
        });
    }
    let coefficients: Vec<BigUint> = (1..t).map(|_| rng.gen_biguint_below(&spec.p)).collect();
    ss_share_with_coefficients(secret, &coefficients, members, spec)
}

/// Evaluates `secret + c_1 x + ... + c_{t-1} x^{t-1}` at every member index.
pub fn ss_share_with_coefficients(
    secret: &BigUint,
    coefficients: &[BigUint],
    members: &[u64],
    spec: &FieldSpec,
) -> Result<Vec<Share>, ShamirError> {
    if coefficients.len() + 1 > members.len() {
        return Err(ShamirError::InvalidThreshold {
            t: coefficients.len() + 1,
            n: members.len(),
        });
    }
    if secret >= &spec.p || coefficients.iter().any(|c| c >= &spec.p) {
        return Err(ShamirError::OutOfField);
    }
    check_indices(members.iter().copied(), spec)?;
    Ok(members
        .iter()
        .map(|&index| {
            let x = spec.element(index);
            // Horner from the top coefficient down
            let value = coefficients
                .iter()
                .rev()
                .chain(std::iter::once(secret))
                .fold(BigUint::zero(), |acc, c| (acc * &x + c) % &spec.p);
            Share { index, value }
        })
        .collect())
}

/// Lagrange interpolation at zero over the `t` lowest-indexed shares.
pub fn ss_recon(shares: &[Share], t: usize, spec: &FieldSpec) -> Result<BigUint, ShamirError> {
    if t == 0 {
        return Err(ShamirError::InvalidThreshold { t, n: shares.len() });
    }
    if shares.len() < t {
        return Err(ShamirError::InsufficientShares {
            needed: t,
            got: shares.len(),
        });
    }
    check_indices(shares.iter().map(|s| s.index), spec)?;
    let mut sorted: Vec<&Share> = shares.iter().collect();
    sorted.sort_by_key(|s| s.index);
    sorted.truncate(t);

    let p = &spec.p;
    let mut secret = BigUint::zero();
    for (k, share) in sorted.iter().enumerate() {
        let u = spec.element(share.index);
        let mut num = BigUint::from(1u32);
        let mut den = BigUint::from(1u32);
        for (j, other) in sorted.iter().enumerate() {
            if j == k {
                continue;
            }
            let v = spec.element(other.index);
            num = num * &v % p;
            den = den * ((&v + p - &u) % p) % p;
        }
        let lambda = num * mod_inv(&den, p).map_err(|_| ShamirError::InvalidField)? % p;
        secret = (secret + lambda * (&share.value % p)) % p;
    }
    Ok(secret)
}

/// Share-wise sum; reconstructs to the sum of the two secrets mod p.
pub fn ss_add(a: &[Share], b: &[Share], spec: &FieldSpec) -> Result<Vec<Share>, ShamirError> {
    let mut a_sorted: Vec<&Share> = a.iter().collect();
    let mut b_sorted: Vec<&Share> = b.iter().collect();
    a_sorted.sort_by_key(|s| s.index);
    b_sorted.sort_by_key(|s| s.index);
    if a_sorted.len() != b_sorted.len()
        || a_sorted
            .iter()
            .zip(&b_sorted)
            .any(|(x, y)| x.index != y.index)
    {
        return Err(ShamirError::IndexMismatch);
    }
    Ok(a_sorted
        .into_iter()
        .zip(b_sorted)
        .map(|(x, y)| Share {
            index: x.index,
            value: (&x.value + &y.value) % &spec.p,
        })
        .collect())
}
