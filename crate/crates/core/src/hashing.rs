//! 4-universal hashing: random degree-3 polynomials over GF(2⁶¹ − 1).
//!
//! Keys are reduced modulo the prime before evaluation, so universality holds
//! over `[0, 2⁶¹ − 1)`; wider keys fold onto that range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn reduce(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let mut r = (x & p) + (x >> 61);
    r = (r & p) + (r >> 61);
    if r >= p {
        r -= p;
    }
    r as u64
}

#[inline]
fn mulmod(a: u64, b: u64) -> u64 {
    reduce(a as u128 * b as u128)
}

/// One member of the 4-universal family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolyHash {
    coeffs: [u64; 4],
}

impl PolyHash {
    pub fn from_rng(rng: &mut impl Rng) -> Self {
        let mut coeffs = [0u64; 4];
        for c in &mut coeffs {
            *c = rng.random_range(0..MERSENNE_61);
        }
        // a nonzero leading coefficient keeps the polynomial at full degree
        if coeffs[3] == 0 {
            coeffs[3] = 1;
        }
        Self { coeffs }
    }

    /// Hash value in `[0, 2⁶¹ − 1)`.
    pub fn hash(&self, key: u64) -> u64 {
        let x = reduce(key as u128);
        // Horner: ((a3·x + a2)·x + a1)·x + a0
        let mut acc = self.coeffs[3];
        for &c in self.coeffs[..3].iter().rev() {
            acc = mulmod(acc, x);
            acc = reduce(acc as u128 + c as u128);
        }
        acc
    }

    /// Bucket in `0..buckets`.
    pub fn bucket(&self, key: u64, buckets: usize) -> usize {
        (self.hash(key) % buckets as u64) as usize
    }
}

/// `count` independent hash functions drawn from a seeded generator.
pub fn hash_family(count: usize, seed: u64) -> Vec<PolyHash> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| PolyHash::from_rng(&mut rng)).collect()
}
