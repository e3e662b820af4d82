//! Arithmetic over a prime field F_q.
//!
//! Elements are plain `u64` residues kept in canonical form `[0, q)`. The
//! modulus is capped below 2^32 so a product of two residues never overflows.

use serde::{Deserialize, Serialize};

use crate::error::{HsaError, Result};

/// A prime field together with a fixed generator of its multiplicative group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct FieldSpec {
    q: u64,
    primitive_element: u64,
}

impl FieldSpec {
    pub fn new(q: u64) -> Result<Self> {
        if q >= 1 << 32 {
            return Err(HsaError::ModulusTooLarge(q));
        }
        if !is_prime(q) {
            return Err(HsaError::NotPrime(q));
        }
        Ok(Self {
            q,
            primitive_element: find_primitive_element(q)?,
        })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn primitive_element(&self) -> u64 {
        self.primitive_element
    }

    /// Maps an arbitrary signed integer onto its canonical residue.
    pub fn reduce(&self, x: i64) -> u64 {
        x.rem_euclid(self.q as i64) as u64
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        (a + b) % self.q
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        (a + self.q - b) % self.q
    }

    pub fn neg(&self, a: u64) -> u64 {
        (self.q - a) % self.q
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        a * b % self.q
    }

    pub fn pow(&self, a: u64, exp: u64) -> u64 {
        pow_mod(a, exp, self.q)
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: u64) -> Result<u64> {
        if a.is_multiple_of(self.q) {
            return Err(HsaError::ZeroInverse);
        }
        Ok(self.pow(a, self.q - 2))
    }

    /// Sum of a slice of residues.
    pub fn sum<I: IntoIterator<Item = u64>>(&self, items: I) -> u64 {
        items.into_iter().fold(0, |acc, x| self.add(acc, x))
    }

    /// Inner product of two equal-length residue vectors.
    pub fn dot(&self, a: &[u64], b: &[u64]) -> u64 {
        a.iter()
            .zip(b)
            .fold(0, |acc, (&x, &y)| self.add(acc, self.mul(x, y)))
    }

    pub fn is_canonical(&self, a: u64) -> bool {
        a < self.q
    }
}

impl TryFrom<u64> for FieldSpec {
    type Error = HsaError;

    fn try_from(q: u64) -> Result<Self> {
        FieldSpec::new(q)
    }
}

impl From<FieldSpec> for u64 {
    fn from(f: FieldSpec) -> u64 {
        f.q
    }
}

pub(crate) fn pow_mod(base: u64, mut exp: u64, q: u64) -> u64 {
    let mut result = 1 % q;
    let mut b = base % q;
    while exp > 0 {
        if exp & 1 == 1 {
            result = result * b % q;
        }
        b = b * b % q;
        exp >>= 1;
    }
    result
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut p = n.max(2);
    while !is_prime(p) {
        p += 1;
    }
    p
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Smallest generator `g >= 2` of F_q^*, or 1 for the trivial group of F_2.
pub fn find_primitive_element(q: u64) -> Result<u64> {
    if !is_prime(q) {
        return Err(HsaError::NotPrime(q));
    }
    if q == 2 {
        return Ok(1);
    }
    let order = q - 1;
    let factors = prime_factors(order);
    (2..q)
        .find(|&g| factors.iter().all(|&p| pow_mod(g, order / p, q) != 1))
        .ok_or(HsaError::NotPrime(q))
}
