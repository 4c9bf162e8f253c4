//! Fibonacci LFSR that expands a compact challenge seed into the `a′` vectors.
//!
//! Register layout: bit `i` of the state is the `i`-th bit still to be
//! output. Each clock emits bit 0, shifts the register down by one and
//! inserts the feedback `XOR_{t in taps} state[degree − t]` at the top.
//! The output sequence therefore satisfies
//! `s[k + L] = XOR_t s[k + L − t]`; for the production taps
//! `{256, 254, 251, 246}` its characteristic polynomial is
//! `x^256 + x^10 + x^5 + x^2 + 1`, which is primitive.
//!
//! Bytes (and general `log2 q`-bit elements) are assembled LSB-first: the
//! first bit clocked out is bit 0.

use crate::zq::{Modulus, ZqElem};
use crate::{Error, Result};

/// Feedback taps in the usual `{L, ...}` notation, largest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackPolynomial {
    degree: usize,
    taps: &'static [usize],
}

/// The taps every device and server must agree on.
pub const PUF_POLYNOMIAL: FeedbackPolynomial = FeedbackPolynomial {
    degree: 256,
    taps: &[256, 254, 251, 246],
};

impl FeedbackPolynomial {
    pub fn new(degree: usize, taps: &'static [usize]) -> Result<Self> {
        let ok = (1..=256).contains(&degree)
            && taps.first() == Some(&degree)
            && taps.windows(2).all(|w| w[0] > w[1])
            && taps.iter().all(|&t| (1..=degree).contains(&t));
        if !ok {
            return Err(Error::InvalidParams(format!(
                "bad LFSR taps {taps:?} for degree {degree}"
            )));
        }
        Ok(FeedbackPolynomial { degree, taps })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn taps(&self) -> &'static [usize] {
        self.taps
    }

    /// Stable identifier written into dataset manifests.
    pub fn id(&self) -> String {
        let taps: Vec<String> = self.taps.iter().map(|t| t.to_string()).collect();
        format!("fib{}:{}", self.degree, taps.join(","))
    }

    fn max_offset(&self) -> usize {
        self.degree - self.taps.last().copied().unwrap_or(self.degree)
    }

    /// Number of bits that can be produced in one word-parallel step: every
    /// new bit must depend only on bits already in the register.
    fn max_step(&self) -> usize {
        (self.degree - self.max_offset()).min(64)
    }
}

type Register = [u64; 4];

#[inline]
fn window(reg: &Register, offset: usize) -> u64 {
    let (w, b) = (offset / 64, offset % 64);
    let mut lo = reg[w] >> b;
    if b > 0 && w + 1 < 4 {
        lo |= reg[w + 1] << (64 - b);
    }
    lo
}

#[inline]
fn shift_down(reg: &mut Register, k: usize) {
    if k == 64 {
        *reg = [reg[1], reg[2], reg[3], 0];
        return;
    }
    for i in 0..4 {
        let hi = if i + 1 < 4 { reg[i + 1] << (64 - k) } else { 0 };
        reg[i] = (reg[i] >> k) | hi;
    }
}

#[inline]
fn low_mask(k: usize) -> u64 {
    if k == 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

/// Register state plus the number of clocks applied since initialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LfsrState {
    reg: Register,
    poly: FeedbackPolynomial,
    clocks: u64,
}

impl LfsrState {
    /// Loads a 256-bit seed into the production LFSR. Seed bit `i` is bit
    /// `i % 8` of byte `i / 8`. An all-zero seed becomes `0…01`.
    pub fn init(seed: &[u8; 32]) -> Self {
        let mut reg = [0u64; 4];
        for (w, chunk) in reg.iter_mut().zip(seed.chunks_exact(8)) {
            *w = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        LfsrState::with_polynomial(PUF_POLYNOMIAL, reg)
    }

    /// Loads the low `degree` bits of `seed` under an arbitrary polynomial.
    pub fn with_polynomial(poly: FeedbackPolynomial, mut seed: [u64; 4]) -> Self {
        for (i, w) in seed.iter_mut().enumerate() {
            let lo = i * 64;
            if lo >= poly.degree {
                *w = 0;
            } else if poly.degree - lo < 64 {
                *w &= low_mask(poly.degree - lo);
            }
        }
        if seed.iter().all(|&w| w == 0) {
            seed[0] = 1;
        }
        LfsrState {
            reg: seed,
            poly,
            clocks: 0,
        }
    }

    pub fn polynomial(&self) -> FeedbackPolynomial {
        self.poly
    }

    pub fn clocks(&self) -> u64 {
        self.clocks
    }

    pub fn is_zero(&self) -> bool {
        self.reg.iter().all(|&w| w == 0)
    }

    /// Raw register words, bit `i` of the state at word `i / 64`.
    pub fn register(&self) -> [u64; 4] {
        self.reg
    }

    /// One clock; returns the output bit.
    pub fn clock(&mut self) -> bool {
        self.step(1) == 1
    }

    /// `k` clocks at once (`k <= 64` and within the polynomial's step bound).
    /// Output bits are returned LSB-first.
    fn step(&mut self, k: usize) -> u64 {
        debug_assert!(k >= 1 && k <= self.poly.max_step());
        let mask = low_mask(k);
        let out = window(&self.reg, 0) & mask;
        let feedback = self
            .poly
            .taps
            .iter()
            .fold(0u64, |acc, &t| acc ^ window(&self.reg, self.poly.degree - t))
            & mask;
        shift_down(&mut self.reg, k);
        let pos = self.poly.degree - k;
        let (w, b) = (pos / 64, pos % 64);
        self.reg[w] |= feedback << b;
        if b > 0 && b + k > 64 {
            self.reg[w + 1] |= feedback >> (64 - b);
        }
        self.clocks += k as u64;
        out
    }

    /// `count <= 64` output bits, LSB-first.
    pub fn next_bits(&mut self, count: usize) -> u64 {
        assert!(count <= 64, "at most 64 bits per call");
        let chunk = self.poly.max_step();
        let mut out = 0u64;
        let mut done = 0;
        while done < count {
            let k = chunk.min(count - done);
            out |= self.step(k) << done;
            done += k;
        }
        out
    }

    pub fn next_byte(&mut self) -> u8 {
        self.next_bits(8) as u8
    }

    /// The next `n` elements of `Z_q`, `log2 q` clocks each. Successive
    /// calls continue the same stream.
    pub fn expand_a(&mut self, n: usize, q: Modulus) -> Result<Vec<ZqElem>> {
        if n == 0 {
            return Err(Error::InvalidParams("expand_a needs n >= 1".into()));
        }
        let k = q.log_q() as usize;
        let mut out = Vec::with_capacity(n);
        if 64 % k == 0 && self.poly.max_step() == 64 {
            let per_word = 64 / k;
            while n - out.len() >= per_word {
                let word = self.step(64);
                out.extend((0..per_word).map(|j| q.reduce_u64(word >> (j * k))));
            }
        }
        while out.len() < n {
            let v = self.next_bits(k);
            out.push(q.reduce_u64(v));
        }
        Ok(out)
    }
}

/// A challenger-provided seed: 128 bits when combined with the device
/// counter, or a full 256-bit seed with no counter mixed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExternalSeed {
    Bits128([u8; 16]),
    Bits256([u8; 32]),
}

impl ExternalSeed {
    pub fn bit_len(&self) -> usize {
        self.as_bytes().len() * 8
    }

    pub fn as_bytes(&self) -> &[u8] {
        match self {
            ExternalSeed::Bits128(b) => b,
            ExternalSeed::Bits256(b) => b,
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes.len() {
            16 => Ok(ExternalSeed::Bits128(bytes.try_into().expect("16 bytes"))),
            32 => Ok(ExternalSeed::Bits256(bytes.try_into().expect("32 bytes"))),
            other => Err(Error::length("external seed bytes", 16, other)),
        }
    }
}

/// Everything that determines the LFSR stream of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedMaterial {
    pub external: ExternalSeed,
    pub counter: u128,
}

impl SeedMaterial {
    /// `seed ‖ counter` (counter big-endian) for 128-bit seeds; the seed
    /// alone for 256-bit seeds.
    pub fn lfsr_seed(&self) -> [u8; 32] {
        match self.external {
            ExternalSeed::Bits128(seed) => {
                let mut out = [0u8; 32];
                out[..16].copy_from_slice(&seed);
                out[16..].copy_from_slice(&self.counter.to_be_bytes());
                out
            }
            ExternalSeed::Bits256(seed) => seed,
        }
    }

    pub fn lfsr(&self) -> LfsrState {
        LfsrState::init(&self.lfsr_seed())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zq::RngHandle;
    use rand::RngCore;

    /// Independent bit-at-a-time model over a `Vec<bool>`, written from the
    /// recurrence rather than from the register code above.
    fn oracle_bits(seed: &[bool], taps: &[usize], count: usize) -> Vec<bool> {
        let l = seed.len();
        let mut s: Vec<bool> = seed.to_vec();
        for k in 0..count {
            let next = taps.iter().fold(false, |acc, &t| acc ^ s[k + l - t]);
            s.push(next);
        }
        s.truncate(count);
        s
    }

    fn seed_bits(seed: &[u8; 32]) -> Vec<bool> {
        (0..256).map(|i| (seed[i / 8] >> (i % 8)) & 1 == 1).collect()
    }

    #[test]
    fn zero_seed_is_replaced() {
        let s = LfsrState::init(&[0u8; 32]);
        assert_eq!(s.register(), [1, 0, 0, 0]);
        let mut seed = [0u8; 32];
        seed[5] = 0x9a;
        seed[31] = 0x80;
        let s = LfsrState::init(&seed);
        assert_eq!(s.register()[0], 0x9a << 40);
        assert_eq!(s.register()[3], 0x80 << 56);
    }

    #[test]
    fn first_byte_matches_oracle() {
        let mut seed = [0u8; 32];
        seed[0] = 1;
        let expect = oracle_bits(&seed_bits(&seed), PUF_POLYNOMIAL.taps(), 8);
        let expect_byte = expect
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
        let mut s = LfsrState::init(&seed);
        assert_eq!(s.next_byte(), expect_byte);
        assert_eq!(s.clocks(), 8);
    }

    #[test]
    fn stream_matches_oracle_across_step_sizes() {
        let mut rng = RngHandle::from_seed(77);
        for _ in 0..20 {
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            let expect = oracle_bits(&seed_bits(&seed), PUF_POLYNOMIAL.taps(), 4000);
            let mut by_clock = LfsrState::init(&seed);
            let clocked: Vec<bool> = (0..4000).map(|_| by_clock.clock()).collect();
            assert_eq!(clocked, expect);

            let mut by_expand = LfsrState::init(&seed);
            let q = Modulus::new(8).unwrap();
            let a = by_expand.expand_a(500, q).unwrap();
            for (i, x) in a.iter().enumerate() {
                let v = (0..8).fold(0u16, |acc, j| acc | ((expect[i * 8 + j] as u16) << j));
                assert_eq!(x.value(), v);
            }
            assert_eq!(by_expand.register(), by_clock.register());
        }
    }

    #[test]
    fn odd_element_width_matches_oracle() {
        let mut rng = RngHandle::from_seed(78);
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let q = Modulus::new(5).unwrap();
        let expect = oracle_bits(&seed_bits(&seed), PUF_POLYNOMIAL.taps(), 5 * 37);
        let a = LfsrState::init(&seed).expand_a(37, q).unwrap();
        for (i, x) in a.iter().enumerate() {
            let v = (0..5).fold(0u16, |acc, j| acc | ((expect[i * 5 + j] as u16) << j));
            assert_eq!(x.value(), v);
        }
    }

    #[test]
    fn expand_accounting_and_continuation() {
        let q = Modulus::new(8).unwrap();
        let mut s = LfsrState::init(&[3u8; 32]);
        let first = s.expand_a(160, q).unwrap();
        let second = s.expand_a(160, q).unwrap();
        assert_eq!(s.clocks(), 2560);
        let mut t = LfsrState::init(&[3u8; 32]);
        let both = t.expand_a(320, q).unwrap();
        assert_eq!(&both[..160], &first[..]);
        assert_eq!(&both[160..], &second[..]);
        assert!(s.expand_a(0, q).is_err());
    }

    #[test]
    fn copies_are_deterministic() {
        let mut a = LfsrState::init(&[0x55; 32]);
        let mut b = a.clone();
        for _ in 0..100 {
            assert_eq!(a.next_byte(), b.next_byte());
        }
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_seeds_give_distinct_streams() {
        let mut rng = RngHandle::from_seed(12);
        for _ in 0..1000 {
            let (mut s1, mut s2) = ([0u8; 32], [0u8; 32]);
            rng.fill_bytes(&mut s1);
            rng.fill_bytes(&mut s2);
            if s1 == s2 {
                continue;
            }
            let mut a = LfsrState::init(&s1);
            let mut b = LfsrState::init(&s2);
            let differ = (0..16).any(|_| a.next_bits(64) != b.next_bits(64));
            assert!(differ);
        }
    }

    #[test]
    fn long_run_never_hits_zero() {
        let mut s = LfsrState::init(&[0u8; 32]);
        for _ in 0..(256 * 10_000 / 64) {
            s.next_bits(64);
            assert!(!s.is_zero());
        }
    }

    #[test]
    fn degree16_full_period() {
        let poly = FeedbackPolynomial::new(16, &[16, 14, 13, 11]).unwrap();
        let mut s = LfsrState::with_polynomial(poly, [1, 0, 0, 0]);
        let start = s.register();
        let mut period = 0u32;
        loop {
            s.clock();
            period += 1;
            assert!(!s.is_zero());
            if s.register() == start {
                break;
            }
            assert!(period < 1 << 16);
        }
        assert_eq!(period, (1 << 16) - 1);
    }

    #[test]
    fn degree16_byte_steps_match_oracle() {
        let poly = FeedbackPolynomial::new(16, &[16, 14, 13, 11]).unwrap();
        let mut s = LfsrState::with_polynomial(poly, [0xACE1, 0, 0, 0]);
        let seed: Vec<bool> = (0..16).map(|i| (0xACE1u32 >> i) & 1 == 1).collect();
        let expect = oracle_bits(&seed, poly.taps(), 800);
        for i in 0..100 {
            let byte = s.next_byte();
            for j in 0..8 {
                assert_eq!((byte >> j) & 1 == 1, expect[i * 8 + j]);
            }
        }
    }

    #[test]
    fn byte_frequencies_are_coarsely_uniform() {
        // session layout: random 128-bit seed, small counter
        let mut rng = RngHandle::from_seed(2024);
        let mut external = [0u8; 16];
        rng.fill_bytes(&mut external);
        let material = SeedMaterial {
            external: ExternalSeed::Bits128(external),
            counter: 3,
        };
        let mut s = material.lfsr();
        let q = Modulus::new(8).unwrap();
        let draws = 1_000_000usize;
        let mut counts = [0u64; 256];
        for x in s.expand_a(draws, q).unwrap() {
            counts[x.value() as usize] += 1;
        }
        let p = 1.0 / 256.0;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (v, c) in counts.into_iter().enumerate() {
            assert!((c as f64 - draws as f64 * p).abs() <= 5.0 * sd, "byte {v}: {c}");
        }
    }

    #[test]
    fn tap_validation() {
        assert!(FeedbackPolynomial::new(16, &[15, 3]).is_err());
        assert!(FeedbackPolynomial::new(300, &[300]).is_err());
        assert_eq!(PUF_POLYNOMIAL.id(), "fib256:256,254,251,246");
    }

    #[test]
    fn seed_material_layout() {
        let m = SeedMaterial {
            external: ExternalSeed::Bits128([0xAB; 16]),
            counter: 1,
        };
        let seed = m.lfsr_seed();
        assert_eq!(&seed[..16], &[0xAB; 16]);
        assert_eq!(seed[31], 1);
        assert!(seed[16..31].iter().all(|&b| b == 0));
        let full = SeedMaterial {
            external: ExternalSeed::Bits256([7; 32]),
            counter: 99,
        };
        assert_eq!(full.lfsr_seed(), [7; 32]);
    }
}
