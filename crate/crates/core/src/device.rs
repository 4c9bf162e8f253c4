//! The PUF endpoint.
//!
//! A device owns a POK, the public helper data and a lifetime counter. At
//! power-up it reconstructs its LWE secret through the fuzzy extractor. The
//! only way to query it is [`Device::respond`], which takes a compact
//! challenge (external seed plus `b` values). The `a′` vectors are always
//! generated on-device from `seed ‖ counter`, so a caller can never fix `a`
//! across queries.

use crate::bits::{pack_lsb_first, unpack_lsb_first};
use crate::ecc::{fe_enroll, fe_reconstruct, FeConfig, HelperData};
use crate::lfsr::{ExternalSeed, LfsrState, SeedMaterial};
use crate::lwe::{decrypt_bit, quantize, Ciphertext, LweParams, SecretKey};
use crate::pok::PokInstance;
use crate::zq::{Modulus, RngHandle, ZqElem};
use crate::{Error, Result};

/// One session on the wire: an external seed and `t` values `b_1..b_t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompactChallenge {
    seed: ExternalSeed,
    b: Vec<ZqElem>,
}

impl CompactChallenge {
    pub fn new(seed: ExternalSeed, b: Vec<ZqElem>) -> Result<Self> {
        if b.is_empty() || b.len() > u16::MAX as usize {
            return Err(Error::InvalidParams(format!(
                "session length {} outside 1..=65535",
                b.len()
            )));
        }
        Ok(CompactChallenge { seed, b })
    }

    pub fn seed(&self) -> ExternalSeed {
        self.seed
    }

    pub fn b_values(&self) -> &[ZqElem] {
        &self.b
    }

    pub fn t(&self) -> usize {
        self.b.len()
    }

    /// Challenge payload in bits: seed plus `t·log2 q`. The 2-byte length
    /// prefix of [`Self::to_bytes`] is framing and not counted.
    pub fn challenge_bits(&self, q: Modulus) -> usize {
        self.seed.bit_len() + self.t() * q.log_q() as usize
    }

    /// `seed ‖ t (u16 BE) ‖ b values`, the `b` values packed as
    /// `log2 q`-bit groups LSB-first (one byte each at `q = 256`).
    pub fn to_bytes(&self, q: Modulus) -> Vec<u8> {
        let mut out = self.seed.as_bytes().to_vec();
        out.extend_from_slice(&(self.t() as u16).to_be_bytes());
        let k = q.log_q() as usize;
        let bits: Vec<bool> = self
            .b
            .iter()
            .flat_map(|v| (0..k).map(move |i| (v.value() >> i) & 1 == 1))
            .collect();
        out.extend(pack_lsb_first(&bits));
        out
    }

    pub fn from_bytes(bytes: &[u8], seed_bits: usize, q: Modulus) -> Result<Self> {
        let seed_len = seed_bits / 8;
        if bytes.len() < seed_len + 2 {
            return Err(Error::length("session header", seed_len + 2, bytes.len()));
        }
        let seed = ExternalSeed::from_bytes(&bytes[..seed_len])?;
        let t = u16::from_be_bytes([bytes[seed_len], bytes[seed_len + 1]]) as usize;
        let k = q.log_q() as usize;
        let body = &bytes[seed_len + 2..];
        if body.len() != (t * k).div_ceil(8) {
            return Err(Error::length("session body", (t * k).div_ceil(8), body.len()));
        }
        let bits = unpack_lsb_first(body, t * k)?;
        let b = bits
            .chunks(k)
            .map(|g| {
                let v = g.iter().rev().fold(0u32, |acc, &bit| (acc << 1) | bit as u32);
                q.reduce(v)
            })
            .collect();
        CompactChallenge::new(seed, b)
    }
}

/// Generates `a′_1..a′_t` for one session.
pub(crate) fn session_vectors(
    material: &SeedMaterial,
    params: &LweParams,
    t: usize,
) -> impl Iterator<Item = Vec<ZqElem>> {
    let mut lfsr: LfsrState = material.lfsr();
    let (n, q) = (params.n(), params.modulus());
    (0..t).map(move |_| lfsr.expand_a(n, q).expect("n >= 1 from params"))
}

/// Device-side evaluation: `Q(b_k − ⟨a′_k, s⟩)` for every `b_k`.
pub(crate) fn evaluate_session(sk: &SecretKey, params: &LweParams, material: &SeedMaterial, b: &[ZqElem]) -> Vec<bool> {
    let q = params.modulus();
    session_vectors(material, params, b.len())
        .zip(b)
        .map(|(a, &bk)| quantize(q.sub(bk, q.dot(&a, sk.as_slice())), q))
        .collect()
}

/// The device's answer to one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionResponse {
    pub bits: Vec<bool>,
    pub counter_used: u128,
}

#[derive(Debug, Clone)]
pub struct Device {
    params: LweParams,
    fe: FeConfig,
    pok: PokInstance,
    helper: HelperData,
    counter: u128,
    secret: Option<SecretKey>,
    unsafe_raw_oracle: bool,
}

impl Device {
    /// Trusted manufacturing step: fabricate a POK, enroll the fuzzy
    /// extractor on its noiseless power-up state and hand the resulting
    /// secret to the caller (for server enrollment). The device starts
    /// powered down with counter 0.
    pub fn provision(params: LweParams, fe: FeConfig, ber: f64, rng: &mut RngHandle) -> Result<(Device, SecretKey)> {
        check_fe(&params, &fe)?;
        let pok = PokInstance::new(fe.raw_bits(), ber, rng)?;
        let (key, helper) = fe_enroll(pok.enrollment(), &fe, rng)?;
        let sk = SecretKey::from_bits(&key, &params)?;
        let dev = Device::from_parts(params, fe, pok, helper, 0)?;
        Ok((dev, sk))
    }

    /// Reassembles a stored device. It starts powered down.
    pub fn from_parts(
        params: LweParams,
        fe: FeConfig,
        pok: PokInstance,
        helper: HelperData,
        counter: u128,
    ) -> Result<Device> {
        check_fe(&params, &fe)?;
        if pok.len() != fe.raw_bits() {
            return Err(Error::length("POK cells", fe.raw_bits(), pok.len()));
        }
        if helper.mask().len() != fe.raw_bits() {
            return Err(Error::length("helper mask", fe.raw_bits(), helper.mask().len()));
        }
        Ok(Device {
            params,
            fe,
            pok,
            helper,
            counter,
            secret: None,
            unsafe_raw_oracle: false,
        })
    }

    /// Reads the POK and reconstructs `s`. On failure the device stays
    /// powered down and the error is returned.
    pub fn power_up(&mut self, rng: &mut RngHandle) -> Result<()> {
        self.secret = None;
        let reading = self.pok.read(rng);
        let key = fe_reconstruct(&reading, &self.helper, &self.fe)?;
        self.secret = Some(SecretKey::from_bits(&key, &self.params)?);
        Ok(())
    }

    pub fn power_down(&mut self) {
        self.secret = None;
    }

    pub fn is_powered(&self) -> bool {
        self.secret.is_some()
    }

    pub fn counter(&self) -> u128 {
        self.counter
    }

    pub fn params(&self) -> &LweParams {
        &self.params
    }

    pub fn fe_config(&self) -> &FeConfig {
        &self.fe
    }

    pub fn pok(&self) -> &PokInstance {
        &self.pok
    }

    pub fn helper(&self) -> &HelperData {
        &self.helper
    }

    /// Answers one session and then advances the counter by one.
    pub fn respond(&mut self, ch: &CompactChallenge) -> Result<SessionResponse> {
        let sk = self.secret.as_ref().ok_or(Error::NotPoweredUp)?;
        let material = SeedMaterial {
            external: ch.seed(),
            counter: self.counter,
        };
        let bits = evaluate_session(sk, &self.params, &material, ch.b_values());
        let counter_used = self.counter;
        self.counter += 1;
        Ok(SessionResponse { bits, counter_used })
    }

    /// Debug builds of the hardware expose the bare decryption function.
    /// Off unless explicitly enabled; only the attack demonstration uses it.
    pub fn enable_unsafe_raw_oracle(&mut self) {
        self.unsafe_raw_oracle = true;
    }

    pub fn raw_oracle(&self) -> Option<RawOracle<'_>> {
        match (&self.secret, self.unsafe_raw_oracle) {
            (Some(sk), true) => Some(RawOracle { sk }),
            _ => None,
        }
    }
}

fn check_fe(params: &LweParams, fe: &FeConfig) -> Result<()> {
    if fe.key_bits() != params.secret_bits() {
        return Err(Error::InvalidParams(format!(
            "FE key length {} does not match the {}-bit secret",
            fe.key_bits(),
            params.secret_bits()
        )));
    }
    Ok(())
}

/// Direct ciphertext-in, bit-out access to a powered device.
#[derive(Debug)]
pub struct RawOracle<'a> {
    sk: &'a SecretKey,
}

impl RawOracle<'_> {
    pub fn decrypt(&self, c: &Ciphertext) -> Result<bool> {
        decrypt_bit(self.sk, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::hamming_distance;
    use crate::ecc::FeRow;
    use crate::zq::sample_uniform_vec;
    use rand::RngCore;

    fn seed128(rng: &mut RngHandle) -> ExternalSeed {
        let mut s = [0u8; 16];
        rng.fill_bytes(&mut s);
        ExternalSeed::Bits128(s)
    }

    fn provisioned(ber: f64, seed: u64) -> (Device, SecretKey, RngHandle) {
        let mut rng = RngHandle::from_seed(seed);
        let (dev, sk) = Device::provision(LweParams::default(), FeConfig::for_row(FeRow::Ber5), ber, &mut rng).unwrap();
        (dev, sk, rng)
    }

    #[test]
    fn respond_requires_power() {
        let (mut dev, _, mut rng) = provisioned(0.0, 1);
        let q = dev.params().modulus();
        let ch = CompactChallenge::new(seed128(&mut rng), vec![q.reduce(0)]).unwrap();
        assert_eq!(dev.respond(&ch), Err(Error::NotPoweredUp));
        assert_eq!(dev.counter(), 0);
    }

    #[test]
    fn noiseless_power_ups_are_stable() {
        let (mut dev, sk, mut rng) = provisioned(0.0, 2);
        for _ in 0..100 {
            dev.power_up(&mut rng).unwrap();
            assert_eq!(dev.secret.as_ref(), Some(&sk));
        }
    }

    #[test]
    fn noisy_power_ups_are_stable() {
        let (mut dev, sk, mut rng) = provisioned(0.05, 3);
        for _ in 0..10_000 {
            dev.power_up(&mut rng).unwrap();
            assert_eq!(dev.secret.as_ref(), Some(&sk));
        }
    }

    fn with_helper_bytes(dev: &Device, bytes: &[u8]) -> Result<Device> {
        let helper = HelperData::from_bytes(bytes)?;
        Device::from_parts(*dev.params(), dev.fe_config().clone(), dev.pok().clone(), helper, 0)
    }

    #[test]
    fn corrupted_helper_changes_the_key() {
        let (dev, sk, mut rng) = provisioned(0.0, 4);
        let clean = dev.helper().to_bytes();

        // header byte: the helper no longer matches the FE configuration
        let mut bytes = clean.clone();
        bytes[1] ^= 0xff;
        let mut bad = with_helper_bytes(&dev, &bytes).unwrap();
        assert!(matches!(bad.power_up(&mut rng), Err(Error::InvalidParams(_))));

        // a single mask byte touches at most 3 inner groups: absorbed by BCH
        let mut bytes = clean.clone();
        bytes[8 + 40] ^= 0xff;
        let mut absorbed = with_helper_bytes(&dev, &bytes).unwrap();
        absorbed.power_up(&mut rng).unwrap();
        assert_eq!(absorbed.secret.as_ref(), Some(&sk));

        // 40 mask bits in one block leave at least 13 wrong inner bits
        let mut bytes = clean;
        for b in &mut bytes[8..13] {
            *b ^= 0xff;
        }
        let mut bad = with_helper_bytes(&dev, &bytes).unwrap();
        match bad.power_up(&mut rng) {
            Ok(()) => assert_ne!(bad.secret.as_ref(), Some(&sk)),
            Err(e) => assert_eq!(e, Error::ReconstructFailure { block: 0 }),
        }
    }

    #[test]
    fn zero_distance_b_answers_zero() {
        let (mut dev, sk, mut rng) = provisioned(0.0, 5);
        dev.power_up(&mut rng).unwrap();
        let params = *dev.params();
        let q = params.modulus();
        let seed = seed128(&mut rng);
        let material = SeedMaterial {
            external: seed,
            counter: dev.counter(),
        };
        let a = session_vectors(&material, &params, 1).next().unwrap();
        let b = q.dot(&a, sk.as_slice());
        let ch = CompactChallenge::new(seed, vec![b]).unwrap();
        let resp = dev.respond(&ch).unwrap();
        assert_eq!(resp.bits, vec![false]);
        assert_eq!(resp.counter_used, 0);
    }

    #[test]
    fn replay_at_same_counter_is_identical() {
        let (mut dev, _, mut rng) = provisioned(0.0, 6);
        dev.power_up(&mut rng).unwrap();
        let q = dev.params().modulus();
        let ch = CompactChallenge::new(seed128(&mut rng), sample_uniform_vec(q, 100, &mut rng)).unwrap();
        let mut twin = dev.clone();
        assert_eq!(dev.respond(&ch).unwrap(), twin.respond(&ch).unwrap());
    }

    #[test]
    fn counter_counts_sessions() {
        let (mut dev, _, mut rng) = provisioned(0.0, 7);
        dev.power_up(&mut rng).unwrap();
        let q = dev.params().modulus();
        for k in 0..25u128 {
            let t = 1 + (k as usize % 7);
            let ch = CompactChallenge::new(seed128(&mut rng), sample_uniform_vec(q, t, &mut rng)).unwrap();
            assert_eq!(dev.respond(&ch).unwrap().counter_used, k);
        }
        assert_eq!(dev.counter(), 25);
        // the lifetime counter survives power cycles
        dev.power_down();
        dev.power_up(&mut rng).unwrap();
        assert_eq!(dev.counter(), 25);
    }

    #[test]
    fn counter_shift_decorrelates_responses() {
        let (mut dev, _, mut rng) = provisioned(0.0, 8);
        dev.power_up(&mut rng).unwrap();
        let q = dev.params().modulus();
        let mut total = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let ch = CompactChallenge::new(seed128(&mut rng), sample_uniform_vec(q, 100, &mut rng)).unwrap();
            let first = dev.respond(&ch).unwrap().bits;
            let second = dev.respond(&ch).unwrap().bits;
            total += hamming_distance(&first, &second).unwrap() as f64 / 100.0;
        }
        let mean = total / trials as f64;
        assert!((mean - 0.5).abs() <= 0.02, "mean HD {mean}");
    }

    #[test]
    fn raw_oracle_is_off_by_default() {
        let (mut dev, sk, mut rng) = provisioned(0.0, 9);
        dev.power_up(&mut rng).unwrap();
        assert!(dev.raw_oracle().is_none());
        dev.enable_unsafe_raw_oracle();
        let q = dev.params().modulus();
        let a = sample_uniform_vec(q, 160, &mut rng);
        let c = Ciphertext {
            b: q.add(q.dot(&a, sk.as_slice()), q.reduce(q.half())),
            a,
        };
        assert!(dev.raw_oracle().unwrap().decrypt(&c).unwrap());
        dev.power_down();
        assert!(dev.raw_oracle().is_none());
    }

    #[test]
    fn fe_length_must_match_secret() {
        let mut rng = RngHandle::from_seed(10);
        let small = LweParams::new(8, 256, 16, 0.022).unwrap();
        assert!(matches!(
            Device::provision(small, FeConfig::for_row(FeRow::Ber5), 0.0, &mut rng),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn compact_challenge_bytes_round_trip() {
        let mut rng = RngHandle::from_seed(11);
        let q = Modulus::new(8).unwrap();
        let ch = CompactChallenge::new(seed128(&mut rng), sample_uniform_vec(q, 100, &mut rng)).unwrap();
        let bytes = ch.to_bytes(q);
        assert_eq!(bytes.len(), 16 + 2 + 100);
        assert_eq!(&bytes[16..18], &[0, 100]);
        assert_eq!(bytes[18], ch.b_values()[0].value() as u8);
        assert_eq!(CompactChallenge::from_bytes(&bytes, 128, q).unwrap(), ch);
        assert_eq!(ch.challenge_bits(q), 128 + 100 * 8);

        let q5 = Modulus::new(5).unwrap();
        let mut s = [0u8; 32];
        rng.fill_bytes(&mut s);
        let ch = CompactChallenge::new(ExternalSeed::Bits256(s), sample_uniform_vec(q5, 9, &mut rng)).unwrap();
        let bytes = ch.to_bytes(q5);
        assert_eq!(bytes.len(), 32 + 2 + 6);
        assert_eq!(CompactChallenge::from_bytes(&bytes, 256, q5).unwrap(), ch);
        assert!(CompactChallenge::from_bytes(&bytes[..bytes.len() - 1], 256, q5).is_err());
    }

    #[test]
    fn empty_session_rejected() {
        assert!(CompactChallenge::new(ExternalSeed::Bits128([0; 16]), vec![]).is_err());
    }
}
