//! The verifier: a registry of enrolled devices, session generation with
//! known expected responses, and the Hamming-distance decision rule.
//!
//! Session `b` values follow the relaxed encryption
//! `b_k = ⟨a′_k, s⟩ + ⟨e, x_k⟩ + r_k·⌊q/2⌋`, with `a′_k` from the LFSR and
//! one noise vector `e` per device.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};

use crate::bits::hamming_distance;
use crate::device::{evaluate_session, session_vectors, CompactChallenge};
use crate::lfsr::{ExternalSeed, SeedMaterial};
use crate::lwe::{quantize, LweParams, NoiseVector, SecretKey};
use crate::zq::{sample_uniform_bits, RngHandle};
use crate::{Error, Result};

/// Width of the challenger-provided seed. With 128 bits the device counter
/// fills the other half of the LFSR state; with 256 bits no counter enters
/// the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SeedWidth {
    #[default]
    Bits128,
    Bits256,
}

impl SeedWidth {
    pub fn bits(self) -> usize {
        match self {
            SeedWidth::Bits128 => 128,
            SeedWidth::Bits256 => 256,
        }
    }

    pub fn from_bits(bits: usize) -> Result<Self> {
        match bits {
            128 => Ok(SeedWidth::Bits128),
            256 => Ok(SeedWidth::Bits256),
            other => Err(Error::InvalidParams(format!("seed width {other} is not 128 or 256"))),
        }
    }

    pub fn sample(self, rng: &mut RngHandle) -> ExternalSeed {
        match self {
            SeedWidth::Bits128 => {
                let mut s = [0u8; 16];
                rng.fill_bytes(&mut s);
                ExternalSeed::Bits128(s)
            }
            SeedWidth::Bits256 => {
                let mut s = [0u8; 32];
                rng.fill_bytes(&mut s);
                ExternalSeed::Bits256(s)
            }
        }
    }
}

/// How the subset vectors `x_k` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubsetMode {
    #[default]
    Random,
    /// `x_k = 0`: no accumulated noise, so `b_k − ⟨a′_k, s⟩ = r_k·⌊q/2⌋`.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentRecord {
    id: String,
    params: LweParams,
    s: SecretKey,
    e: NoiseVector,
    expected_counter: u128,
}

impl EnrollmentRecord {
    pub fn new(
        id: impl Into<String>,
        params: LweParams,
        s: SecretKey,
        e: NoiseVector,
        expected_counter: u128,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(|c| c.is_whitespace()) {
            return Err(Error::InvalidParams(format!(
                "device id {id:?} must be non-empty without whitespace"
            )));
        }
        if s.len() != params.n() {
            return Err(Error::length("secret", params.n(), s.len()));
        }
        if e.as_slice().len() != params.m() {
            return Err(Error::length("noise vector", params.m(), e.as_slice().len()));
        }
        Ok(EnrollmentRecord {
            id,
            params,
            s,
            e,
            expected_counter,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &LweParams {
        &self.params
    }

    pub fn secret(&self) -> &SecretKey {
        &self.s
    }

    pub fn noise(&self) -> &NoiseVector {
        &self.e
    }

    pub fn expected_counter(&self) -> u128 {
        self.expected_counter
    }

    pub fn set_expected_counter(&mut self, counter: u128) {
        self.expected_counter = counter;
    }
}

/// A generated session and everything the verifier knows about it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeSession {
    pub challenge: CompactChallenge,
    /// `Q(b_k − ⟨a′_k, s⟩)`: what a device holding `s` returns.
    pub expected: Vec<bool>,
    /// The encrypted bits `r_k`.
    pub plaintext: Vec<bool>,
    pub counter: u128,
}

/// Builds one session against `rec` and advances its counter mirror.
pub fn gen_challenge_session(
    rec: &mut EnrollmentRecord,
    t: usize,
    width: SeedWidth,
    mode: SubsetMode,
    rng: &mut RngHandle,
) -> Result<ChallengeSession> {
    if t == 0 {
        return Err(Error::InvalidParams("session needs t >= 1".into()));
    }
    let params = rec.params;
    let q = params.modulus();
    let seed = width.sample(rng);
    let material = SeedMaterial {
        external: seed,
        counter: rec.expected_counter,
    };
    let mut plaintext = Vec::with_capacity(t);
    let mut expected = Vec::with_capacity(t);
    let mut b = Vec::with_capacity(t);
    for a in session_vectors(&material, &params, t) {
        let r: bool = rng.random();
        let noise = match mode {
            SubsetMode::Random => rec.e.masked_sum(&sample_uniform_bits(params.m(), rng), q),
            SubsetMode::Zero => q.reduce(0),
        };
        let dot = q.dot(&a, rec.s.as_slice());
        let shift = q.reduce(if r { q.half() } else { 0 });
        let bk = q.add(q.add(dot, noise), shift);
        expected.push(quantize(q.sub(bk, dot), q));
        plaintext.push(r);
        b.push(bk);
    }
    let session = ChallengeSession {
        challenge: CompactChallenge::new(seed, b)?,
        expected,
        plaintext,
        counter: rec.expected_counter,
    };
    rec.expected_counter += 1;
    Ok(session)
}

/// Recomputes the expected response of `challenge` at `counter`.
pub fn expected_response(rec: &EnrollmentRecord, challenge: &CompactChallenge, counter: u128) -> Vec<bool> {
    let material = SeedMaterial {
        external: challenge.seed(),
        counter,
    };
    evaluate_session(&rec.s, &rec.params, &material, challenge.b_values())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub accept: bool,
    pub hd_fraction: f64,
}

/// Accept iff `HD(expected, actual) / t <= tau`.
pub fn verify(expected: &[bool], actual: &[bool], tau: f64) -> Result<Verdict> {
    let hd = hamming_distance(expected, actual)?;
    let hd_fraction = if expected.is_empty() {
        0.0
    } else {
        hd as f64 / expected.len() as f64
    };
    Ok(Verdict {
        accept: hd_fraction <= tau,
        hd_fraction,
    })
}

pub const DEFAULT_TAU: f64 = 0.2;

/// All enrolled devices of one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Server {
    params: LweParams,
    width: SeedWidth,
    records: BTreeMap<String, EnrollmentRecord>,
}

impl Server {
    pub fn new(params: LweParams, width: SeedWidth) -> Self {
        Server {
            params,
            width,
            records: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &LweParams {
        &self.params
    }

    pub fn seed_width(&self) -> SeedWidth {
        self.width
    }

    /// Trusted provisioning: stores `s`, samples the device's `e`.
    pub fn enroll(
        &mut self,
        id: &str,
        s: SecretKey,
        device_counter: u128,
        rng: &mut RngHandle,
    ) -> Result<&EnrollmentRecord> {
        if self.records.contains_key(id) {
            return Err(Error::DuplicateDevice(id.to_string()));
        }
        let e = NoiseVector::sample(&self.params, rng);
        let rec = EnrollmentRecord::new(id, self.params, s, e, device_counter)?;
        Ok(self.records.entry(id.to_string()).or_insert(rec))
    }

    /// Inserts a previously stored record.
    pub fn insert(&mut self, rec: EnrollmentRecord) -> Result<()> {
        if rec.params != self.params {
            return Err(Error::InvalidParams(format!(
                "record {} has different LWE parameters",
                rec.id
            )));
        }
        if self.records.contains_key(&rec.id) {
            return Err(Error::DuplicateDevice(rec.id));
        }
        self.records.insert(rec.id.clone(), rec);
        Ok(())
    }

    pub fn record(&self, id: &str) -> Result<&EnrollmentRecord> {
        self.records.get(id).ok_or_else(|| Error::UnknownDevice(id.to_string()))
    }

    pub fn records(&self) -> impl Iterator<Item = &EnrollmentRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn gen_session(&mut self, id: &str, t: usize, rng: &mut RngHandle) -> Result<ChallengeSession> {
        self.gen_session_with(id, t, SubsetMode::Random, rng)
    }

    pub fn gen_session_with(
        &mut self,
        id: &str,
        t: usize,
        mode: SubsetMode,
        rng: &mut RngHandle,
    ) -> Result<ChallengeSession> {
        let width = self.width;
        let rec = self
            .records
            .get_mut(id)
            .ok_or_else(|| Error::UnknownDevice(id.to_string()))?;
        gen_challenge_session(rec, t, width, mode, rng)
    }

    /// Overwrites the counter mirror with the value the device reports.
    pub fn resync(&mut self, id: &str, device_counter: u128) -> Result<()> {
        self.records
            .get_mut(id)
            .ok_or_else(|| Error::UnknownDevice(id.to_string()))?
            .expected_counter = device_counter;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::Device;
    use crate::ecc::{FeConfig, FeRow};
    use crate::lwe::decryption_error_rate;
    use crate::zq::{sample_uniform_vec, Modulus};

    fn setup(seed: u64) -> (Server, Device, RngHandle) {
        let mut rng = RngHandle::from_seed(seed);
        let params = LweParams::default();
        let (mut dev, sk) = Device::provision(params, FeConfig::for_row(FeRow::Ber5), 0.05, &mut rng).unwrap();
        dev.power_up(&mut rng).unwrap();
        let mut server = Server::new(params, SeedWidth::Bits128);
        server.enroll("dev0", sk, dev.counter(), &mut rng).unwrap();
        (server, dev, rng)
    }

    #[test]
    fn duplicate_and_unknown_ids() {
        let (mut server, _, mut rng) = setup(1);
        let sk = server.record("dev0").unwrap().secret().clone();
        assert_eq!(
            server.enroll("dev0", sk.clone(), 0, &mut rng).unwrap_err(),
            Error::DuplicateDevice("dev0".into())
        );
        assert_eq!(
            server.gen_session("nope", 1, &mut rng).unwrap_err(),
            Error::UnknownDevice("nope".into())
        );
        assert!(server.enroll("has space", sk, 0, &mut rng).is_err());
    }

    #[test]
    fn noise_vector_has_m_entries_with_gaussian_spread() {
        let mut rng = RngHandle::from_seed(2);
        let params = LweParams::default();
        let mut server = Server::new(params, SeedWidth::Bits128);
        let q = params.modulus();
        let mut sq = 0.0;
        let mut count = 0usize;
        for i in 0..400 {
            let sk = SecretKey::new(sample_uniform_vec(q, 160, &mut rng), &params).unwrap();
            let rec = server.enroll(&format!("d{i}"), sk, 0, &mut rng).unwrap();
            assert_eq!(rec.noise().as_slice().len(), 256);
            for &v in rec.noise().as_slice() {
                let c = q.centered(v) as f64;
                sq += c * c;
                count += 1;
            }
        }
        let std = (sq / count as f64).sqrt();
        let sigma = 0.022 * 256.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.02, "std {std}");
    }

    #[test]
    fn zero_subset_gives_exact_half_shift() {
        let (mut server, _, mut rng) = setup(3);
        let rec = server.record("dev0").unwrap().clone();
        let q = rec.params().modulus();
        let session = server
            .gen_session_with("dev0", 200, SubsetMode::Zero, &mut rng)
            .unwrap();
        assert_eq!(session.expected, session.plaintext);
        let material = SeedMaterial {
            external: session.challenge.seed(),
            counter: session.counter,
        };
        for ((a, &b), &r) in session_vectors(&material, rec.params(), 200)
            .zip(session.challenge.b_values())
            .zip(&session.plaintext)
        {
            let diff = q.sub(b, q.dot(&a, rec.secret().as_slice()));
            assert_eq!(u32::from(diff), if r { 128 } else { 0 });
        }
    }

    #[test]
    fn server_and_device_share_the_stream() {
        let (server, dev, mut rng) = setup(4);
        let rec = server.record("dev0").unwrap();
        let seed = SeedWidth::Bits128.sample(&mut rng);
        let material = SeedMaterial {
            external: seed,
            counter: dev.counter(),
        };
        // a device-side twin regenerates the same vectors independently
        let ours: Vec<_> = session_vectors(&material, rec.params(), 100).collect();
        let mut lfsr = material.lfsr();
        for a in ours {
            assert_eq!(a, lfsr.expand_a(160, Modulus::new(8).unwrap()).unwrap());
        }
    }

    #[test]
    fn device_matches_expectation_and_counters_stay_in_step() {
        let (mut server, mut dev, mut rng) = setup(5);
        for _ in 0..200 {
            let s = server.gen_session("dev0", 100, &mut rng).unwrap();
            let r = dev.respond(&s.challenge).unwrap();
            assert_eq!(r.counter_used, s.counter);
            assert_eq!(r.bits, s.expected);
            let recomputed = expected_response(server.record("dev0").unwrap(), &s.challenge, s.counter);
            assert_eq!(recomputed, s.expected);
        }
        assert_eq!(server.record("dev0").unwrap().expected_counter(), dev.counter());
    }

    #[test]
    fn desync_is_detected_and_resync_repairs_it() {
        let (mut server, mut dev, mut rng) = setup(6);
        let burn = server.gen_session("dev0", 1, &mut rng).unwrap();
        dev.respond(&burn.challenge).unwrap();
        dev.respond(&burn.challenge).unwrap();
        let mut hd = 0.0;
        for _ in 0..50 {
            let s = server.gen_session("dev0", 100, &mut rng).unwrap();
            let r = dev.respond(&s.challenge).unwrap();
            hd += verify(&s.expected, &r.bits, DEFAULT_TAU).unwrap().hd_fraction;
        }
        assert!((hd / 50.0 - 0.5).abs() < 0.05);
        server.resync("dev0", dev.counter()).unwrap();
        let s = server.gen_session("dev0", 100, &mut rng).unwrap();
        assert_eq!(dev.respond(&s.challenge).unwrap().bits, s.expected);
    }

    #[test]
    fn decryption_errors_flip_plaintext_at_the_expected_rate() {
        // e is fixed per device, so single-device rates scatter around the
        // population rate; average over many enrollments
        let mut rng = RngHandle::from_seed(7);
        let params = LweParams::default();
        let mut server = Server::new(params, SeedWidth::Bits128);
        let (mut wrong, mut total) = (0usize, 0usize);
        for i in 0..200 {
            let sk = SecretKey::new(sample_uniform_vec(params.modulus(), 160, &mut rng), &params).unwrap();
            let id = format!("d{i}");
            server.enroll(&id, sk, 0, &mut rng).unwrap();
            for _ in 0..25 {
                let s = server.gen_session(&id, 100, &mut rng).unwrap();
                wrong += hamming_distance(&s.expected, &s.plaintext).unwrap();
                total += 100;
            }
        }
        let rate = wrong as f64 / total as f64;
        assert!((0.010..=0.016).contains(&rate), "rate {rate}");
        assert!(rate > decryption_error_rate(0.022, 256) * 0.8);
    }

    #[test]
    fn verify_rule() {
        let a = vec![true; 100];
        assert_eq!(
            verify(&a, &a, 0.2).unwrap(),
            Verdict {
                accept: true,
                hd_fraction: 0.0
            }
        );
        let mut b = a.clone();
        b[..20].iter_mut().for_each(|x| *x = false);
        assert!(verify(&a, &b, 0.2).unwrap().accept);
        b[20] = false;
        assert!(!verify(&a, &b, 0.2).unwrap().accept);
        assert!(verify(&a, &b[..99], 0.2).is_err());
    }

    #[test]
    fn bits256_sessions_ignore_the_counter() {
        let mut rng = RngHandle::from_seed(8);
        let params = LweParams::default();
        let (mut dev, sk) = Device::provision(params, FeConfig::for_row(FeRow::Ber5), 0.0, &mut rng).unwrap();
        dev.power_up(&mut rng).unwrap();
        let mut server = Server::new(params, SeedWidth::Bits256);
        server.enroll("d", sk, 0, &mut rng).unwrap();
        let s = server.gen_session("d", 100, &mut rng).unwrap();
        assert_eq!(s.challenge.challenge_bits(params.modulus()), 1056);
        let first = dev.respond(&s.challenge).unwrap().bits;
        let second = dev.respond(&s.challenge).unwrap().bits;
        assert_eq!(first, s.expected);
        assert_eq!(first, second);
    }
}
