//! The LWE bit cryptosystem whose decryption function is the PUF.
//!
//! A secret `s ∈ Z_q^n`, a public key `(A, b = A s + e)` with `A` uniform
//! `m × n` and `e` rounded-Gaussian. Encrypting a bit `r` picks a uniform
//! subset `x ∈ {0,1}^m` of the public rows and returns
//! `(Aᵀx, bᵀx + r·⌊q/2⌋)`. Decryption quantizes `b − <a, s>`.
//!
//! The challenge that the hardware sees is the bit string of a ciphertext,
//! packed LSB-first in `log2 q`-bit groups: `n` groups for `a`, then one for
//! `b`. The secret is packed the same way.

use statrs::function::erf::erfc;

use crate::zq::{
    sample_discrete_gaussian_vec, sample_uniform_bits, sample_uniform_vec, GaussianParams, Modulus, RngHandle, ZqElem,
};
use crate::{Error, Result};

/// `(n, q, m, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LweParams {
    n: usize,
    q: Modulus,
    m: usize,
    alpha: f64,
}

impl Default for LweParams {
    /// `n = 160, q = 256, m = 256, alpha = 0.022`.
    fn default() -> Self {
        LweParams {
            n: 160,
            q: Modulus::new(8).expect("static modulus"),
            m: 256,
            alpha: 0.022,
        }
    }
}

impl LweParams {
    pub fn new(n: usize, q: u32, m: usize, alpha: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParams(format!("n and m must be >= 1 (n={n}, m={m})")));
        }
        let q = Modulus::from_q(q)?;
        GaussianParams::new(alpha, q)?;
        Ok(LweParams { n, q, m, alpha })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn modulus(&self) -> Modulus {
        self.q
    }

    pub fn q(&self) -> u32 {
        self.q.q()
    }

    pub fn log_q(&self) -> usize {
        self.q.log_q() as usize
    }

    pub fn gaussian(&self) -> GaussianParams {
        GaussianParams::new(self.alpha, self.q).expect("validated in constructor")
    }

    /// `(n + 1) · log2 q` challenge bits per response bit.
    pub fn challenge_bits(&self) -> usize {
        (self.n + 1) * self.log_q()
    }

    /// `n · log2 q` secret key bits.
    pub fn secret_bits(&self) -> usize {
        self.n * self.log_q()
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        LweParams::new(self.n, self.q(), self.m, alpha)
    }
}

/// Packs `log2 q`-bit groups LSB-first into elements.
fn pack_groups(bits: &[bool], q: Modulus) -> Vec<ZqElem> {
    let k = q.log_q() as usize;
    bits.chunks(k)
        .map(|group| {
            let v = group
                .iter()
                .enumerate()
                .fold(0u32, |acc, (j, &b)| acc | ((b as u32) << j));
            q.reduce(v)
        })
        .collect()
}

fn unpack_groups(elems: &[ZqElem], q: Modulus, out: &mut Vec<bool>) {
    let k = q.log_q();
    for &e in elems {
        let v = u32::from(e);
        out.extend((0..k).map(|j| (v >> j) & 1 == 1));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKey {
    q: Modulus,
    s: Vec<ZqElem>,
}

impl SecretKey {
    pub fn new(s: Vec<ZqElem>, params: &LweParams) -> Result<Self> {
        if s.len() != params.n() {
            return Err(Error::length("secret", params.n(), s.len()));
        }
        Ok(SecretKey { q: params.modulus(), s })
    }

    /// Builds `s` from its binary form `W`: `s_i = Σ_j W_{i·log q + j} 2^j`.
    pub fn from_bits(bits: &[bool], params: &LweParams) -> Result<Self> {
        if bits.len() != params.secret_bits() {
            return Err(Error::length("packed secret", params.secret_bits(), bits.len()));
        }
        Ok(SecretKey {
            q: params.modulus(),
            s: pack_groups(bits, params.modulus()),
        })
    }

    /// The binary form `W`.
    pub fn to_bits(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.s.len() * self.q.log_q() as usize);
        unpack_groups(&self.s, self.q, &mut out);
        out
    }

    pub fn as_slice(&self) -> &[ZqElem] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseVector(Vec<ZqElem>);

impl NoiseVector {
    pub fn new(e: Vec<ZqElem>, params: &LweParams) -> Result<Self> {
        if e.len() != params.m() {
            return Err(Error::length("noise vector", params.m(), e.len()));
        }
        Ok(NoiseVector(e))
    }

    pub fn sample(params: &LweParams, rng: &mut RngHandle) -> Self {
        NoiseVector(sample_discrete_gaussian_vec(&params.gaussian(), params.m(), rng))
    }

    pub fn as_slice(&self) -> &[ZqElem] {
        &self.0
    }

    /// `<e, x>` for a binary vector `x`.
    pub fn masked_sum(&self, x: &[bool], q: Modulus) -> ZqElem {
        let acc = self
            .0
            .iter()
            .zip(x)
            .filter(|(_, &xi)| xi)
            .fold(0u32, |acc, (&e, _)| acc.wrapping_add(u32::from(e)));
        q.reduce(acc)
    }
}

/// `(A, b)` with `A` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicKey {
    params: LweParams,
    a: Vec<ZqElem>,
    b: Vec<ZqElem>,
}

impl PublicKey {
    /// Samples a fresh uniform `A` and sets `b = A s + e`.
    pub fn for_secret(params: &LweParams, sk: &SecretKey, e: &NoiseVector, rng: &mut RngHandle) -> Result<Self> {
        let a = sample_uniform_vec(params.modulus(), params.m() * params.n(), rng);
        PublicKey::from_parts(params, a, sk, e)
    }

    fn from_parts(params: &LweParams, a: Vec<ZqElem>, sk: &SecretKey, e: &NoiseVector) -> Result<Self> {
        if sk.len() != params.n() {
            return Err(Error::length("secret", params.n(), sk.len()));
        }
        if e.0.len() != params.m() {
            return Err(Error::length("noise vector", params.m(), e.0.len()));
        }
        let q = params.modulus();
        let b = a
            .chunks(params.n())
            .zip(e.as_slice())
            .map(|(row, &ei)| q.add(q.dot(row, sk.as_slice()), ei))
            .collect();
        Ok(PublicKey { params: *params, a, b })
    }

    pub fn params(&self) -> &LweParams {
        &self.params
    }

    pub fn row(&self, i: usize) -> &[ZqElem] {
        let n = self.params.n();
        &self.a[i * n..(i + 1) * n]
    }

    pub fn b(&self) -> &[ZqElem] {
        &self.b
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub a: Vec<ZqElem>,
    pub b: ZqElem,
}

pub fn keygen(params: &LweParams, rng: &mut RngHandle) -> (SecretKey, PublicKey, NoiseVector) {
    let q = params.modulus();
    let sk = SecretKey {
        q,
        s: sample_uniform_vec(q, params.n(), rng),
    };
    let e = NoiseVector::sample(params, rng);
    let pk = PublicKey::for_secret(params, &sk, &e, rng).expect("dimensions from params");
    (sk, pk, e)
}

pub fn encrypt_bit(pk: &PublicKey, r: bool, rng: &mut RngHandle) -> Ciphertext {
    let x = sample_uniform_bits(pk.params.m(), rng);
    encrypt_bit_with_subset(pk, r, &x).expect("subset length from params")
}

/// Encryption with a caller-supplied subset vector `x`.
pub fn encrypt_bit_with_subset(pk: &PublicKey, r: bool, x: &[bool]) -> Result<Ciphertext> {
    let (n, m) = (pk.params.n(), pk.params.m());
    if x.len() != m {
        return Err(Error::length("subset vector", m, x.len()));
    }
    let q = pk.params.modulus();
    let mut acc = vec![0u32; n];
    let mut b = if r { q.half() } else { 0 };
    for (i, _) in x.iter().enumerate().filter(|(_, &xi)| xi) {
        for (slot, &aij) in acc.iter_mut().zip(pk.row(i)) {
            *slot = slot.wrapping_add(u32::from(aij));
        }
        b = b.wrapping_add(u32::from(pk.b[i]));
    }
    Ok(Ciphertext {
        a: acc.into_iter().map(|v| q.reduce(v)).collect(),
        b: q.reduce(b),
    })
}

/// `Q(x)`: 0 on `[0, q/4] ∪ (3q/4, q−1]`, 1 on `(q/4, 3q/4]`.
#[inline]
pub fn quantize(x: ZqElem, q: Modulus) -> bool {
    let v = u32::from(x);
    v > q.quarter() && v <= 3 * q.quarter()
}

pub fn decrypt_bit(sk: &SecretKey, c: &Ciphertext) -> Result<bool> {
    if c.a.len() != sk.len() {
        return Err(Error::length("ciphertext a", sk.len(), c.a.len()));
    }
    let q = sk.q;
    Ok(quantize(q.sub(c.b, q.dot(&c.a, sk.as_slice())), q))
}

/// Interprets an `(n+1)·log2 q`-bit challenge as a ciphertext.
pub fn pack_challenge(bits: &[bool], params: &LweParams) -> Result<Ciphertext> {
    if bits.len() != params.challenge_bits() {
        return Err(Error::length("challenge", params.challenge_bits(), bits.len()));
    }
    let mut elems = pack_groups(bits, params.modulus());
    let b = elems.pop().expect("n >= 1");
    Ok(Ciphertext { a: elems, b })
}

pub fn unpack_challenge(c: &Ciphertext, params: &LweParams) -> Result<Vec<bool>> {
    if c.a.len() != params.n() {
        return Err(Error::length("ciphertext a", params.n(), c.a.len()));
    }
    let mut out = Vec::with_capacity(params.challenge_bits());
    unpack_groups(&c.a, params.modulus(), &mut out);
    unpack_groups(&[c.b], params.modulus(), &mut out);
    Ok(out)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Analytic decryption error rate `2(1 − Φ(√π / (2 α √m)))`.
///
/// The accumulated noise over the `≈ m/2` selected rows is treated as a
/// normal with standard deviation `α q √(m/2) / √(2π)` against the `q/4`
/// decision boundary.
pub fn decryption_error_rate(alpha: f64, m: usize) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let z = std::f64::consts::PI.sqrt() / (2.0 * alpha * (m as f64).sqrt());
    // 2(1 − Φ(z)) = erfc(z/√2), without the cancellation
    erfc(z / std::f64::consts::SQRT_2)
}
