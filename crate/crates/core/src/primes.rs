//! Probabilistic prime generation for the encoding backends.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use std::sync::OnceLock;

use crate::rng::RandomSource;

const SIEVE_LIMIT: u32 = 1 << 14;
const SIEVE_WINDOW: usize = 8192;
const MR_ROUNDS: usize = 24;

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let n = SIEVE_LIMIT as usize;
        let mut composite = vec![false; n];
        let mut out = Vec::new();
        for i in 2..n {
            if !composite[i] {
                out.push(i as u32);
                let mut j = i * i;
                while j < n {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        out
    })
}

/// Miller-Rabin with `rounds` random bases, preceded by trial division.
pub fn is_probable_prime(n: &BigUint, rounds: usize, rng: &mut RandomSource) -> bool {
    if let Some(small) = n.to_u64() {
        if small < 2 {
            return false;
        }
        if small < SIEVE_LIMIT as u64 {
            return small_primes().binary_search(&(small as u32)).is_ok();
        }
    }
    for &p in small_primes() {
        if (n % p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let two = BigUint::from(2u32);
    'witness: for round in 0..rounds {
        let a = if round == 0 {
            two.clone()
        } else {
            rng.gen_biguint_range(&two, &n_minus_1)
        };
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Uniformly random probable prime with exactly `bits` bits (`bits >= 2`).
pub fn random_prime(bits: u64, rng: &mut RandomSource) -> BigUint {
    assert!(bits >= 2, "prime bit length must be at least 2");
    if bits <= u64::from(SIEVE_LIMIT.ilog2()) {
        let lo = 1u32 << (bits - 1);
        let hi = (1u32 << bits) - 1;
        loop {
            let c = rng.gen_range(lo..=hi);
            if small_primes().binary_search(&c).is_ok() {
                return BigUint::from(c);
            }
        }
    }
    let primes = small_primes();
    loop {
        // odd start with the top bit set
        let mut start = rng.gen_biguint(bits);
        start.set_bit(bits - 1, true);
        start.set_bit(0, true);
        let mut dead = vec![false; SIEVE_WINDOW];
        for &p in primes.iter().skip(1) {
            let r = (&start % p).to_u32().unwrap();
            // first offset k (step 2) with start + 2k ≡ 0 (mod p)
            let need = (p - r) % p;
            let inv2 = p.div_ceil(2);
            let mut k = ((need as u64 * inv2 as u64) % p as u64) as usize;
            while k < SIEVE_WINDOW {
                dead[k] = true;
                k += p as usize;
            }
        }
        for (k, &d) in dead.iter().enumerate() {
            if d {
                continue;
            }
            let cand = &start + BigUint::from(2 * k as u64);
            if cand.bits() != bits {
                break;
            }
            if is_probable_prime(&cand, MR_ROUNDS, rng) {
                return cand;
            }
        }
    }
}

/// `count` pairwise distinct random primes of `bits` bits.
pub fn distinct_primes(count: usize, bits: u64, rng: &mut RandomSource) -> Vec<BigUint> {
    let mut out: Vec<BigUint> = Vec::with_capacity(count);
    while out.len() < count {
        let p = random_prime(bits, rng);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

pub(crate) fn gcd_is_one(a: &BigUint, b: &BigUint) -> bool {
    a.gcd(b).is_one()
}
