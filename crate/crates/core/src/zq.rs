//! Arithmetic over `Z_q` for `q = 2^k`, the reproducible RNG stream, and the
//! rounded-Gaussian error distribution.
//!
//! Because `q` is a power of two, reduction is a bit mask and wrapping
//! machine arithmetic on `u32` is already correct modulo `q`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Largest supported `log2(q)`.
pub const MAX_LOG_Q: u32 = 16;

/// An element of `Z_q`. The modulus is carried by the surrounding context
/// (a [`Modulus`] or [`crate::lwe::LweParams`]); values are always `< q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct ZqElem(u16);

impl ZqElem {
    pub const ZERO: ZqElem = ZqElem(0);

    pub fn value(self) -> u16 {
        self.0
    }
}

impl From<ZqElem> for u32 {
    fn from(x: ZqElem) -> u32 {
        x.0 as u32
    }
}

/// A power-of-two modulus `q = 2^log_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Modulus {
    log_q: u32,
}

impl Modulus {
    pub fn new(log_q: u32) -> Result<Self> {
        if log_q == 0 || log_q > MAX_LOG_Q {
            return Err(Error::InvalidParams(format!(
                "log2(q) must be in 1..={MAX_LOG_Q}, got {log_q}"
            )));
        }
        Ok(Modulus { log_q })
    }

    /// Accepts `q` itself; rejects anything that is not a power of two.
    pub fn from_q(q: u32) -> Result<Self> {
        if !q.is_power_of_two() || q < 2 {
            return Err(Error::InvalidParams(format!("q must be a power of two >= 2, got {q}")));
        }
        Modulus::new(q.trailing_zeros())
    }

    pub fn log_q(self) -> u32 {
        self.log_q
    }

    pub fn q(self) -> u32 {
        1 << self.log_q
    }

    #[inline]
    pub fn mask(self) -> u32 {
        self.q() - 1
    }

    /// `floor(q/2)`, the plaintext offset.
    pub fn half(self) -> u32 {
        self.q() / 2
    }

    /// `floor(q/4)`, the quantizer boundary.
    pub fn quarter(self) -> u32 {
        self.q() / 4
    }

    #[inline]
    pub fn reduce(self, x: u32) -> ZqElem {
        ZqElem((x & self.mask()) as u16)
    }

    #[inline]
    pub fn reduce_u64(self, x: u64) -> ZqElem {
        ZqElem((x & self.mask() as u64) as u16)
    }

    #[inline]
    pub fn reduce_signed(self, x: i64) -> ZqElem {
        // two's complement masking is exact modulo a power of two
        ZqElem((x as u64 & self.mask() as u64) as u16)
    }

    /// Checked constructor for a raw value.
    pub fn elem(self, x: u32) -> Result<ZqElem> {
        if x >= self.q() {
            return Err(Error::InvalidParams(format!("{x} is not in Z_{}", self.q())));
        }
        Ok(ZqElem(x as u16))
    }

    #[inline]
    pub fn add(self, a: ZqElem, b: ZqElem) -> ZqElem {
        self.reduce(u32::from(a) + u32::from(b))
    }

    #[inline]
    pub fn sub(self, a: ZqElem, b: ZqElem) -> ZqElem {
        self.reduce(u32::from(a).wrapping_sub(u32::from(b)))
    }

    #[inline]
    pub fn mul(self, a: ZqElem, b: ZqElem) -> ZqElem {
        self.reduce(u32::from(a) * u32::from(b))
    }

    #[inline]
    pub fn neg(self, a: ZqElem) -> ZqElem {
        self.reduce(0u32.wrapping_sub(u32::from(a)))
    }

    /// Inverse of an odd element (the units of `Z_{2^k}`), `None` for even ones.
    pub fn inv(self, a: ZqElem) -> Option<ZqElem> {
        let a = u32::from(a);
        if a & 1 == 0 {
            return None;
        }
        // Newton iteration doubles the number of correct low bits each step.
        let mut x: u32 = a;
        for _ in 0..5 {
            x = x.wrapping_mul(2u32.wrapping_sub(a.wrapping_mul(x)));
        }
        Some(self.reduce(x))
    }

    /// `<a, b> mod q`. Panics if the lengths differ; callers validate first.
    #[inline]
    pub fn dot(self, a: &[ZqElem], b: &[ZqElem]) -> ZqElem {
        assert_eq!(a.len(), b.len(), "dot product of unequal lengths");
        let acc = a.iter().zip(b).fold(0u32, |acc, (&x, &y)| {
            acc.wrapping_add(u32::from(x).wrapping_mul(u32::from(y)))
        });
        self.reduce(acc)
    }

    /// Centered representative in `(-q/2, q/2]`.
    pub fn centered(self, a: ZqElem) -> i64 {
        let v = u32::from(a) as i64;
        if v > self.half() as i64 {
            v - self.q() as i64
        } else {
            v
        }
    }
}

/// Single-owner deterministic random stream.
///
/// Every sampling routine in the crate threads one of these explicitly; the
/// same seed always produces the same stream. Parallel work uses
/// [`RngHandle::derive`] to obtain independent, index-addressed streams.
#[derive(Debug, Clone)]
pub struct RngHandle {
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn from_seed(seed: u64) -> Self {
        RngHandle {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream number `index` under `seed`. Streams never overlap.
    pub fn derive(seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index);
        RngHandle { inner }
    }

    /// Draws a fresh child seed from this stream.
    pub fn fork(&mut self) -> RngHandle {
        RngHandle::from_seed(self.inner.next_u64())
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn sample_uniform_zq(q: Modulus, rng: &mut RngHandle) -> ZqElem {
    q.reduce(rng.next_u32())
}

pub fn sample_uniform_vec(q: Modulus, len: usize, rng: &mut RngHandle) -> Vec<ZqElem> {
    (0..len).map(|_| sample_uniform_zq(q, rng)).collect()
}

pub fn sample_uniform_bits(len: usize, rng: &mut RngHandle) -> Vec<bool> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let word = rng.next_u64();
        let take = (len - out.len()).min(64);
        out.extend((0..take).map(|i| (word >> i) & 1 == 1));
    }
    out
}

/// Parameters of the rounded Gaussian `Psi_alpha`: a continuous normal with
/// standard deviation `alpha * q / sqrt(2 pi)`, rounded to the nearest
/// integer and reduced mod `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    alpha: f64,
    q: Modulus,
}

impl GaussianParams {
    pub fn new(alpha: f64, q: Modulus) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) || alpha.is_nan() {
            return Err(Error::InvalidParams(format!("alpha must be in [0, 1), got {alpha}")));
        }
        Ok(GaussianParams { alpha, q })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn modulus(&self) -> Modulus {
        self.q
    }

    pub fn sigma(&self) -> f64 {
        self.alpha * self.q.q() as f64 / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// One draw from the rounded Gaussian. Ties round to even.
pub fn sample_discrete_gaussian(params: &GaussianParams, rng: &mut RngHandle) -> ZqElem {
    let sigma = params.sigma();
    if sigma == 0.0 {
        return ZqElem::ZERO;
    }
    let z: f64 = rng.sample(StandardNormal);
    let v = (z * sigma).round_ties_even() as i64;
    params.q.reduce_signed(v)
}

pub fn sample_discrete_gaussian_vec(params: &GaussianParams, len: usize, rng: &mut RngHandle) -> Vec<ZqElem> {
    (0..len).map(|_| sample_discrete_gaussian(params, rng)).collect()
}
