//! Finite-field Diffie-Hellman producing the pairwise keys that seed the
//! masking keystreams.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::modmath::{gen_dh_group, DhGroup, ModMathError, SecurityProfile};

const KDF_DOMAIN: &[u8] = b"secagg/pairwise-key/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyAgreementError {
    #[error("public key is not an element of the order-q subgroup")]
    InvalidPublicKey,
    #[error("secret exponent must lie in [1, q - 1]")]
    InvalidSecret,
    #[error(transparent)]
    Group(#[from] ModMathError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: BigUint,
    pub secret: BigUint,
}

/// 32-byte symmetric key shared by one pair of nodes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairwiseSecret {
    key_bytes: [u8; 32],
}

impl PairwiseSecret {
    pub fn from_bytes(key_bytes: [u8; 32]) -> Self {
        Self { key_bytes }
    }

    pub fn key_bytes(&self) -> &[u8; 32] {
        &self.key_bytes
    }
}

impl std::fmt::Debug for PairwiseSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PairwiseSecret(..)")
    }
}

/// Group parameters for a security profile.
pub fn ka_param<R: Rng + ?Sized>(
    profile: SecurityProfile,
    rng: &mut R,
) -> Result<DhGroup, KeyAgreementError> {
    Ok(gen_dh_group(profile.dh_q_bits(), profile.dh_p_bits(), rng)?)
}

/// Fresh key pair with the secret uniform in `[1, q - 1]`.
pub fn ka_gen<R: Rng + ?Sized>(group: &DhGroup, rng: &mut R) -> KeyPair {
    let secret = rng.gen_biguint_range(&BigUint::one(), group.q());
    let public = group.g().modpow(&secret, group.p());
    KeyPair { public, secret }
}

/// Key pair for a caller-chosen exponent.
pub fn ka_gen_with_secret(group: &DhGroup, secret: BigUint) -> Result<KeyPair, KeyAgreementError> {
    if secret.is_zero() || &secret >= group.q() {
        return Err(KeyAgreementError::InvalidSecret);
    }
    let public = group.g().modpow(&secret, group.p());
    Ok(KeyPair { public, secret })
}

/// Raw shared element `their_public^my_secret mod p`, after subgroup validation.
pub fn shared_element(
    group: &DhGroup,
    my_secret: &BigUint,
    their_public: &BigUint,
) -> Result<BigUint, KeyAgreementError> {
    if !group.contains(their_public) {
        return Err(KeyAgreementError::InvalidPublicKey);
    }
    Ok(their_public.modpow(my_secret, group.p()))
}

/// Agreed pairwise key: SHA-256 over the shared element encoded big-endian
/// at the byte width of `p`.
pub fn ka_agree(
    group: &DhGroup,
    my_secret: &BigUint,
    their_public: &BigUint,
) -> Result<PairwiseSecret, KeyAgreementError> {
    let element = shared_element(group, my_secret, their_public)?;
    let width = group.p().bits().div_ceil(8) as usize;
    let raw = element.to_bytes_be();
    let mut encoded = vec![0u8; width - raw.len()];
    encoded.extend_from_slice(&raw);

    let mut h = Sha256::new();
    h.update(KDF_DOMAIN);
    h.update(&encoded);
    Ok(PairwiseSecret {
        key_bytes: h.finalize().into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> DhGroup {
        DhGroup::new(23u32.into(), 11u32.into(), 2u32.into()).unwrap()
    }

    #[test]
    fn toy_exchange() {
        let g = toy();
        let a = ka_gen_with_secret(&g, 3u32.into()).unwrap();
        let b = ka_gen_with_secret(&g, 5u32.into()).unwrap();
        assert_eq!(a.public, 8u32.into());
        assert_eq!(
            shared_element(&g, &a.secret, &b.public).unwrap(),
            16u32.into()
        );
        assert_eq!(
            shared_element(&g, &b.secret, &a.public).unwrap(),
            16u32.into()
        );
        assert_eq!(
            ka_agree(&g, &a.secret, &b.public).unwrap(),
            ka_agree(&g, &b.secret, &a.public).unwrap()
        );
    }

    #[test]
    fn rejects_bad_public_keys() {
        let g = toy();
        let sk = BigUint::from(3u32);
        for bad in [0u32, 1, 22, 23, 5] {
            assert_eq!(
                ka_agree(&g, &sk, &bad.into()),
                Err(KeyAgreementError::InvalidPublicKey),
                "{bad}"
            );
        }
        assert_eq!(
            ka_gen_with_secret(&g, 11u32.into()),
            Err(KeyAgreementError::InvalidSecret)
        );
    }

    #[test]
    fn generated_keys_live_in_subgroup() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let g = gen_dh_group(32, 128, &mut rng).unwrap();
        for _ in 0..20 {
            let kp = ka_gen(&g, &mut rng);
            assert!(g.contains(&kp.public));
            assert!(kp.secret >= BigUint::one() && &kp.secret < g.q());
        }
    }
}
