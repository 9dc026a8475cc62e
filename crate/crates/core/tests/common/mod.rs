//! Reference implementations written independently of the library, used as
//! test oracles.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// Primality by exhaustive trial division.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// `true` when no integer in `[2, limit]` below `n` divides it.
pub fn survives_trial_division(n: &BigUint, limit: u32) -> bool {
    (2..=limit).all(|d| {
        let d = BigUint::from(d);
        &d >= n || !(n % &d).is_zero()
    })
}

/// Left-to-right square and multiply using only multiplication and remainder.
pub fn pow_mod(base: &BigUint, exp: &BigUint, m: &BigUint) -> BigUint {
    let mut acc = BigUint::one() % m;
    let b = base % m;
    for i in (0..exp.bits()).rev() {
        acc = &acc * &acc % m;
        if exp.bit(i) {
            acc = &acc * &b % m;
        }
    }
    acc
}

pub fn pow_mod_u128(base: u128, exp: u128, m: u128) -> u128 {
    let (mut acc, mut b, mut e) = (1 % m, base % m, exp);
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

/// Miller-Rabin with the first 24 primes as fixed witnesses.
pub fn miller_rabin(n: &BigUint) -> bool {
    const WITNESSES: [u32; 24] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    ];
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for w in WITNESSES {
        let w = BigUint::from(w);
        if n == &w {
            return true;
        }
        if (n % &w).is_zero() {
            return false;
        }
    }
    let n1 = n - 1u32;
    let s = n1.trailing_zeros().expect("n - 1 is nonzero");
    let d = &n1 >> s;
    'outer: for w in WITNESSES {
        let mut x = pow_mod(&BigUint::from(w), &d, n);
        if x.is_one() || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Modular inverse by the extended Euclidean algorithm on signed integers.
pub fn ext_euclid_inverse(a: i128, m: i128) -> Option<i128> {
    let (mut r0, mut r1) = (a.rem_euclid(m), m);
    let (mut s0, mut s1) = (1i128, 0i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    (r0 == 1).then(|| s0.rem_euclid(m))
}

pub fn gcd(a: &BigUint, b: &BigUint) -> BigUint {
    let (mut a, mut b) = (a.clone(), b.clone());
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

/// Element-wise integer sum.
pub fn plain_sum(rows: &[Vec<u64>]) -> Vec<u64> {
    let d = rows.first().map_or(0, Vec::len);
    (0..d).map(|i| rows.iter().map(|r| r[i]).sum()).collect()
}

/// Direct quantization: round half away from zero, clamp to `[0, 2^L - 1]`.
pub fn quantize_ref(theta: f64, lo: f64, hi: f64, l: u32) -> u64 {
    let c = if theta.is_nan() {
        lo
    } else {
        theta.clamp(lo, hi)
    };
    let levels = (1u64 << l) as f64;
    let v = ((c - lo) / (hi - lo) * levels).round();
    (v as u64).min((1u64 << l) - 1)
}

pub fn to_u64(v: &BigUint) -> u64 {
    v.to_u64().expect("fits in u64")
}
