//! Binary narrow-sense BCH codes of length 255 over GF(2^8), optionally
//! shortened.
//!
//! A codeword is a bit vector whose index `i` is the coefficient of `x^i`.
//! Encoding is systematic: positions `0..r` hold the parity (`r` is the
//! generator degree) and positions `r..n` hold the message. Shortening
//! removes the top `255 − n` positions, which are implicitly zero.
//!
//! Decoding computes the `2t` syndromes, runs Berlekamp–Massey for the error
//! locator, and finds its roots by Chien search over the `n` live positions.

use super::gf256::Gf256;
use crate::{Error, Result};

pub const PARENT_LENGTH: usize = 255;

/// Largest generator degree the `u128` parity register can hold.
const MAX_PARITY_BITS: usize = 127;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BchCode {
    t: usize,
    n: usize,
    parity_bits: usize,
    /// Generator without its leading `x^r` term; bit `i` is the coefficient of `x^i`.
    generator_low: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BchDecoded {
    pub message: Vec<bool>,
    pub corrected: usize,
}

/// Cyclotomic coset of `i` under multiplication by 2 mod 255.
fn coset(i: usize) -> Vec<usize> {
    let mut out = vec![i % PARENT_LENGTH];
    let mut j = (2 * i) % PARENT_LENGTH;
    while j != out[0] {
        out.push(j);
        j = (2 * j) % PARENT_LENGTH;
    }
    out
}

/// Product of `(x − α^j)` over a coset; the coefficients land in GF(2).
fn minimal_polynomial(coset: &[usize]) -> Vec<bool> {
    let mut poly = vec![Gf256::ONE];
    for &j in coset {
        let root = Gf256::alpha_pow(j);
        let mut next = vec![Gf256::ZERO; poly.len() + 1];
        for (d, &c) in poly.iter().enumerate() {
            next[d + 1] = next[d + 1] + c;
            next[d] = next[d] + c * root;
        }
        poly = next;
    }
    poly.iter()
        .map(|c| {
            debug_assert!(c.0 <= 1, "minimal polynomial must be binary");
            c.0 == 1
        })
        .collect()
}

fn mul_binary(a: &[bool], b: &[bool]) -> Vec<bool> {
    let mut out = vec![false; a.len() + b.len() - 1];
    for (i, _) in a.iter().enumerate().filter(|(_, &x)| x) {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] ^= bj;
        }
    }
    out
}

impl BchCode {
    /// The full-length `(255, k)` code correcting `t` errors.
    pub fn parent(t: usize) -> Result<Self> {
        BchCode::new(t, PARENT_LENGTH)
    }

    /// The code with designed distance `2t + 1`, shortened to `length` bits.
    pub fn new(t: usize, length: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidParams("BCH t must be >= 1".into()));
        }
        let mut seen = vec![false; PARENT_LENGTH];
        let mut generator = vec![true];
        for i in 1..=2 * t {
            if seen[i % PARENT_LENGTH] {
                continue;
            }
            let c = coset(i);
            for &j in &c {
                seen[j] = true;
            }
            generator = mul_binary(&generator, &minimal_polynomial(&c));
        }
        let parity_bits = generator.len() - 1;
        if parity_bits > MAX_PARITY_BITS || parity_bits >= PARENT_LENGTH {
            return Err(Error::InvalidParams(format!(
                "BCH t={t} needs {parity_bits} parity bits; at most {MAX_PARITY_BITS} supported"
            )));
        }
        if length <= parity_bits || length > PARENT_LENGTH {
            return Err(Error::InvalidParams(format!(
                "shortened length {length} must be in {}..={PARENT_LENGTH}",
                parity_bits + 1
            )));
        }
        let generator_low = generator[..parity_bits]
            .iter()
            .enumerate()
            .fold(0u128, |acc, (i, &c)| acc | ((c as u128) << i));
        Ok(BchCode {
            t,
            n: length,
            parity_bits,
            generator_low,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Codeword length after shortening.
    pub fn length(&self) -> usize {
        self.n
    }

    /// Message length after shortening.
    pub fn message_len(&self) -> usize {
        self.n - self.parity_bits
    }

    pub fn parent_message_len(&self) -> usize {
        PARENT_LENGTH - self.parity_bits
    }

    pub fn parity_bits(&self) -> usize {
        self.parity_bits
    }

    /// Generator coefficients, constant term first, including the leading 1.
    pub fn generator(&self) -> Vec<bool> {
        let mut g: Vec<bool> = (0..self.parity_bits)
            .map(|i| (self.generator_low >> i) & 1 == 1)
            .collect();
        g.push(true);
        g
    }

    pub fn encode(&self, msg: &[bool]) -> Result<Vec<bool>> {
        if msg.len() != self.message_len() {
            return Err(Error::length("BCH message", self.message_len(), msg.len()));
        }
        let r = self.parity_bits;
        let top = 1u128 << (r - 1);
        let mask = if r == 128 { u128::MAX } else { (1u128 << r) - 1 };
        // remainder of m(x)·x^r divided by g(x), highest coefficient first
        let mut reg = 0u128;
        for &bit in msg.iter().rev() {
            let feedback = bit ^ (reg & top != 0);
            reg = (reg << 1) & mask;
            if feedback {
                reg ^= self.generator_low;
            }
        }
        let mut out = Vec::with_capacity(self.n);
        out.extend((0..r).map(|i| (reg >> i) & 1 == 1));
        out.extend_from_slice(msg);
        Ok(out)
    }

    /// `S_1..S_2t` of the received word (index 0 holds `S_1`).
    fn syndromes(&self, received: &[bool]) -> Vec<Gf256> {
        let two_t = 2 * self.t;
        let mut s = vec![Gf256::ZERO; two_t];
        for (i, _) in received.iter().enumerate().filter(|(_, &b)| b) {
            for j in (1..=two_t).step_by(2) {
                s[j - 1] = s[j - 1] + Gf256::alpha_pow(i * j);
            }
        }
        // binary code: S_2j = S_j^2
        for j in (2..=two_t).step_by(2) {
            let half = s[j / 2 - 1];
            s[j - 1] = half * half;
        }
        s
    }

    pub fn decode(&self, received: &[bool]) -> Result<BchDecoded> {
        if received.len() != self.n {
            return Err(Error::length("BCH codeword", self.n, received.len()));
        }
        let syndromes = self.syndromes(received);
        if syndromes.iter().all(|&s| s == Gf256::ZERO) {
            return Ok(BchDecoded {
                message: received[self.parity_bits..].to_vec(),
                corrected: 0,
            });
        }
        let locator = berlekamp_massey(&syndromes);
        let degree = locator.len() - 1;
        if degree > self.t {
            return Err(Error::DecodeFailure);
        }
        let positions = self.chien_search(&locator);
        if positions.len() != degree {
            return Err(Error::DecodeFailure);
        }
        let mut word = received.to_vec();
        for &p in &positions {
            word[p] ^= true;
        }
        Ok(BchDecoded {
            message: word.split_off(self.parity_bits),
            corrected: degree,
        })
    }

    /// Positions `i < n` with `Λ(α^{−i}) = 0`.
    fn chien_search(&self, locator: &[Gf256]) -> Vec<usize> {
        let degree = locator.len() - 1;
        let mut terms: Vec<Gf256> = locator.to_vec();
        // step j multiplies term j by α^{−j}
        let steps: Vec<Gf256> = (0..=degree)
            .map(|j| Gf256::alpha_pow((PARENT_LENGTH - j % PARENT_LENGTH) % PARENT_LENGTH))
            .collect();
        let mut found = Vec::with_capacity(degree);
        for i in 0..self.n {
            let value = terms.iter().fold(Gf256::ZERO, |acc, &t| acc + t);
            if value == Gf256::ZERO {
                found.push(i);
                if found.len() > degree {
                    break;
                }
            }
            for (t, &s) in terms.iter_mut().zip(&steps) {
                *t = *t * s;
            }
        }
        found
    }
}

/// Connection polynomial `Λ(x)` (constant term first, trimmed to its degree).
fn berlekamp_massey(syndromes: &[Gf256]) -> Vec<Gf256> {
    let len = syndromes.len();
    let mut c = vec![Gf256::ZERO; len + 1];
    let mut b = vec![Gf256::ZERO; len + 1];
    c[0] = Gf256::ONE;
    b[0] = Gf256::ONE;
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut last_discrepancy = Gf256::ONE;
    for step in 0..len {
        let d = (1..=l).fold(syndromes[step], |acc, i| acc + c[i] * syndromes[step - i]);
        if d == Gf256::ZERO {
            shift += 1;
            continue;
        }
        let coef = d * last_discrepancy.inv().expect("nonzero discrepancy");
        let previous = c.clone();
        for i in 0..=len - shift {
            c[i + shift] = c[i + shift] + coef * b[i];
        }
        if 2 * l <= step {
            l = step + 1 - l;
            b = previous;
            last_discrepancy = d;
            shift = 1;
        } else {
            shift += 1;
        }
    }
    c.truncate(l + 1);
    c
}
