//! Arbitrary-precision modular arithmetic, prime generation and the
//! finite-field groups used by key agreement.

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Miller-Rabin rounds used for every primality decision (error < 2^-80).
pub const MILLER_RABIN_ROUNDS: usize = 40;

const HASH_DOMAIN: &[u8] = b"secagg/hash-to-unit-group/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModMathError {
    #[error("value is not invertible modulo the given modulus")]
    NonInvertible,
    #[error("modulus must be at least 2")]
    InvalidModulus,
    #[error("bit length {0} is below the minimum of 8")]
    TooFewBits(u64),
    #[error("invalid group parameters: {0}")]
    InvalidGroup(&'static str),
}

/// Maps the abstract security parameter onto concrete sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecurityProfile {
    /// 512-bit JL modulus, 160-bit DH subgroup in a 1024-bit field.
    Test,
    /// 2048-bit JL modulus, 256-bit DH subgroup in a 2048-bit field.
    #[serde(alias = "production")]
    Prod,
}

impl SecurityProfile {
    pub fn modulus_bits(self) -> u64 {
        match self {
            SecurityProfile::Test => 512,
            SecurityProfile::Prod => 2048,
        }
    }

    pub fn dh_q_bits(self) -> u64 {
        match self {
            SecurityProfile::Test => 160,
            SecurityProfile::Prod => 256,
        }
    }

    pub fn dh_p_bits(self) -> u64 {
        match self {
            SecurityProfile::Test => 1024,
            SecurityProfile::Prod => 2048,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SecurityProfile::Test => "test",
            SecurityProfile::Prod => "prod",
        }
    }
}

impl std::str::FromStr for SecurityProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(SecurityProfile::Test),
            "prod" | "production" => Ok(SecurityProfile::Prod),
            other => Err(format!("unknown security profile `{other}`")),
        }
    }
}

/// Prime-order subgroup of `Z*_p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhGroup {
    p: BigUint,
    q: BigUint,
    g: BigUint,
}

impl DhGroup {
    /// Validates externally supplied parameters.
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self, ModMathError> {
        if !is_probable_prime(&p) {
            return Err(ModMathError::InvalidGroup("p is not prime"));
        }
        if !is_probable_prime(&q) {
            return Err(ModMathError::InvalidGroup("q is not prime"));
        }
        if !(&p - 1u32).is_multiple_of(&q) {
            return Err(ModMathError::InvalidGroup("q does not divide p - 1"));
        }
        if g <= BigUint::one() || g >= p {
            return Err(ModMathError::InvalidGroup("g must lie in [2, p - 1]"));
        }
        if !g.modpow(&q, &p).is_one() {
            return Err(ModMathError::InvalidGroup("g does not have order q"));
        }
        Ok(Self { p, q, g })
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    /// True when `element` lies in the order-q subgroup and is not the identity.
    pub fn contains(&self, element: &BigUint) -> bool {
        !element.is_zero()
            && element < &self.p
            && !element.is_one()
            && element.modpow(&self.q, &self.p).is_one()
    }
}

const SMALL_PRIMES: [u32; 168] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307,
    311, 313, 317, 331, 337, 347, 349, 353, 359, 367, 373, 379, 383, 389, 397, 401, 409, 419, 421,
    431, 433, 439, 443, 449, 457, 461, 463, 467, 479, 487, 491, 499, 503, 509, 521, 523, 541, 547,
    557, 563, 569, 571, 577, 587, 593, 599, 601, 607, 613, 617, 619, 631, 641, 643, 647, 653, 659,
    661, 673, 677, 683, 691, 701, 709, 719, 727, 733, 739, 743, 751, 757, 761, 769, 773, 787, 797,
    809, 811, 821, 823, 827, 829, 839, 853, 857, 859, 863, 877, 881, 883, 887, 907, 911, 919, 929,
    937, 941, 947, 953, 967, 971, 977, 983, 991, 997,
];

/// Probabilistic primality test: trial division by the primes below 1000,
/// then [`MILLER_RABIN_ROUNDS`] Miller-Rabin rounds with bases drawn from a
/// generator seeded by the candidate itself, so the verdict is a pure
/// function of `n`.
pub fn is_probable_prime(n: &BigUint) -> bool {
    if n < &BigUint::from(2u32) {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        if n == &BigUint::from(sp) {
            return true;
        }
        if (n % sp).is_zero() {
            return false;
        }
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&Sha256::digest(n.to_bytes_be()));
    let mut rng = ChaCha20Rng::from_seed(seed);
    miller_rabin(n, MILLER_RABIN_ROUNDS, &mut rng)
}

fn miller_rabin<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;

    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Returns a probable prime of exactly `bits` bits.
pub fn gen_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint, ModMathError> {
    if bits < 8 {
        return Err(ModMathError::TooFewBits(bits));
    }
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate) {
            return Ok(candidate);
        }
    }
}

/// Smallest probable prime strictly greater than `n`.
pub fn next_prime(n: &BigUint) -> BigUint {
    let mut candidate = n + 1u32;
    if candidate <= BigUint::from(2u32) {
        return BigUint::from(2u32);
    }
    if candidate.is_even() {
        candidate += 1u32;
    }
    while !is_probable_prime(&candidate) {
        candidate += 2u32;
    }
    candidate
}

/// Generates `(p, q, g)` with `q` a `q_bits`-bit prime, `p = kq + 1` a
/// `p_bits`-bit prime and `g` of order `q`.
pub fn gen_dh_group<R: Rng + ?Sized>(
    q_bits: u64,
    p_bits: u64,
    rng: &mut R,
) -> Result<DhGroup, ModMathError> {
    if q_bits < 8 {
        return Err(ModMathError::TooFewBits(q_bits));
    }
    if p_bits <= q_bits {
        return Err(ModMathError::InvalidGroup("p must be wider than q"));
    }
    let q = gen_prime(q_bits, rng)?;
    let k_bits = p_bits - q_bits + 1;
    let p = loop {
        let mut k = rng.gen_biguint(k_bits);
        k.set_bit(0, false);
        if k.is_zero() {
            continue;
        }
        let p = &k * &q + 1u32;
        if p.bits() == p_bits && is_probable_prime(&p) {
            break p;
        }
    };
    let cofactor = (&p - 1u32) / &q;
    let two = BigUint::from(2u32);
    let p_minus_one = &p - 1u32;
    let g = loop {
        let h = rng.gen_biguint_range(&two, &p_minus_one);
        let g = h.modpow(&cofactor, &p);
        if !g.is_one() {
            break g;
        }
    };
    Ok(DhGroup { p, q, g })
}

/// Extended-Euclid inverse of `a` modulo `m`.
pub fn mod_inv(a: &BigUint, m: &BigUint) -> Result<BigUint, ModMathError> {
    if m < &BigUint::from(2u32) {
        return Err(ModMathError::InvalidModulus);
    }
    let a = BigInt::from(a % m);
    let m_signed = BigInt::from(m.clone());
    let egcd = a.extended_gcd(&m_signed);
    if !egcd.gcd.is_one() {
        return Err(ModMathError::NonInvertible);
    }
    let inv = egcd.x.mod_floor(&m_signed);
    Ok(inv
        .to_biguint()
        .expect("mod_floor of a positive modulus is non-negative"))
}

/// `base^exp mod m`, accepting negative exponents through the modular inverse.
pub fn mod_exp(base: &BigUint, exp: &BigInt, m: &BigUint) -> Result<BigUint, ModMathError> {
    if m < &BigUint::from(2u32) {
        return Err(ModMathError::InvalidModulus);
    }
    let magnitude = exp.magnitude();
    match exp.sign() {
        Sign::Minus => Ok(mod_inv(base, m)?.modpow(magnitude, m)),
        _ => Ok(base.modpow(magnitude, m)),
    }
}

/// Full-domain hash of `tag` into `Z*_{n_squared}`.
///
/// SHA-256 in counter mode expands `(attempt, block, tag)` to the bit length
/// of the modulus; candidates that are zero, out of range or share a factor
/// with the modulus are rejected and the next attempt counter is tried.
pub fn hash_to_unit_group(tag: &[u8], n_squared: &BigUint) -> BigUint {
    let bits = n_squared.bits();
    let n_bytes = bits.div_ceil(8) as usize;
    let excess = (n_bytes as u64 * 8 - bits) as u32;
    for attempt in 0u32.. {
        let mut buf = Vec::with_capacity(n_bytes + 32);
        let mut block = 0u32;
        while buf.len() < n_bytes {
            let mut h = Sha256::new();
            h.update(HASH_DOMAIN);
            h.update(attempt.to_be_bytes());
            h.update(block.to_be_bytes());
            h.update((tag.len() as u64).to_be_bytes());
            h.update(tag);
            buf.extend_from_slice(&h.finalize());
            block += 1;
        }
        buf.truncate(n_bytes);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if candidate.is_zero() || &candidate >= n_squared {
            continue;
        }
        if candidate.gcd(n_squared).is_one() {
            return candidate;
        }
    }
    unreachable!("attempt counter exhausted")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn eight_bit_prime_range() {
        let p = gen_prime(8, &mut rng(1)).unwrap();
        assert!(p >= BigUint::from(128u32) && p <= BigUint::from(255u32));
        assert!(is_probable_prime(&BigUint::from(131u32)));
        assert!(!is_probable_prime(&BigUint::from(133u32)));
    }

    #[test]
    fn gen_prime_is_deterministic_per_seed() {
        let a = gen_prime(16, &mut rng(7)).unwrap();
        let b = gen_prime(16, &mut rng(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bits(), 16);
    }

    #[test]
    fn rejects_tiny_bit_lengths() {
        assert_eq!(gen_prime(7, &mut rng(0)), Err(ModMathError::TooFewBits(7)));
    }

    #[test]
    fn toy_group_is_valid() {
        let group = DhGroup::new(23u32.into(), 11u32.into(), 2u32.into()).unwrap();
        assert!(BigUint::from(2u32)
            .modpow(&11u32.into(), group.p())
            .is_one());
    }

    #[test]
    fn bad_groups_rejected() {
        // 7 does not divide 22
        assert!(DhGroup::new(23u32.into(), 7u32.into(), 2u32.into()).is_err());
        // 5 has order 22 mod 23, not 11
        assert!(DhGroup::new(23u32.into(), 11u32.into(), 5u32.into()).is_err());
        assert!(DhGroup::new(23u32.into(), 11u32.into(), 1u32.into()).is_err());
    }

    #[test]
    fn generated_group_invariants() {
        for seed in 0..4 {
            let group = gen_dh_group(32, 64, &mut rng(seed)).unwrap();
            assert_eq!(group.q().bits(), 32);
            assert_eq!(group.p().bits(), 64);
            assert!((group.p() - 1u32).is_multiple_of(group.q()));
            assert!(group.g().modpow(group.q(), group.p()).is_one());
            assert!(!group.g().is_one());
        }
        let a = gen_dh_group(32, 64, &mut rng(10)).unwrap();
        let b = gen_dh_group(32, 64, &mut rng(11)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn mod_exp_examples() {
        let m = BigUint::from(23u32);
        assert_eq!(mod_exp(&2u32.into(), &15.into(), &m).unwrap(), 16u32.into());
        assert_eq!(
            mod_exp(&5u32.into(), &0.into(), &m).unwrap(),
            BigUint::one()
        );
        assert_eq!(
            mod_exp(&4u32.into(), &BigInt::from(-1), &1225u32.into()).unwrap(),
            919u32.into()
        );
        assert_eq!(
            mod_exp(&5u32.into(), &BigInt::from(-1), &1225u32.into()),
            Err(ModMathError::NonInvertible)
        );
        assert_eq!(
            mod_exp(&5u32.into(), &1.into(), &BigUint::one()),
            Err(ModMathError::InvalidModulus)
        );
    }

    #[test]
    fn mod_inv_examples() {
        assert_eq!(
            mod_inv(&4u32.into(), &1225u32.into()).unwrap(),
            919u32.into()
        );
        assert_eq!(
            mod_inv(&1u32.into(), &97u32.into()).unwrap(),
            BigUint::one()
        );
        assert_eq!(
            mod_inv(&35u32.into(), &1225u32.into()),
            Err(ModMathError::NonInvertible)
        );
    }

    #[test]
    fn hash_to_unit_group_properties() {
        let mut r = rng(3);
        let p = gen_prime(256, &mut r).unwrap();
        let q = gen_prime(256, &mut r).unwrap();
        let n = &p * &q;
        let n2 = &n * &n;
        let a = hash_to_unit_group(b"tag", &n2);
        assert_eq!(a, hash_to_unit_group(b"tag", &n2));
        assert!(a.gcd(&n2).is_one());
        assert!(a < n2 && !a.is_zero());
        assert_ne!(a, hash_to_unit_group(b"tah", &n2));
    }

    #[test]
    fn profile_parsing() {
        assert_eq!("test".parse::<SecurityProfile>(), Ok(SecurityProfile::Test));
        assert_eq!("prod".parse::<SecurityProfile>(), Ok(SecurityProfile::Prod));
        assert!("huge".parse::<SecurityProfile>().is_err());
    }
}
