//! Code-offset fuzzy extractor over a concatenated BCH + repetition code.
//!
//! Enrollment picks a uniform key, splits it into `blocks` equal chunks,
//! pads each chunk with zeros to the BCH message length, encodes with the
//! outer and then the inner code, and publishes `codeword ⊕ reading` as the
//! helper mask. Reconstruction XORs a fresh reading with the mask and
//! decodes inner then outer code per block.
//!
//! Raw bit layout: block `b` occupies `[b·n·r, (b+1)·n·r)`; within a block,
//! BCH codeword bit `i` is repeated at positions `i·r .. i·r + r`.

use statrs::function::factorial::ln_binomial;

use super::bch::BchCode;
use super::repetition::RepCode;
use crate::bits::xor;
use crate::zq::{sample_uniform_bits, RngHandle};
use crate::{Error, Result};

/// The four raw-BER design points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeRow {
    Ber1,
    Ber5,
    Ber10,
    Ber15,
}

impl FeRow {
    pub const ALL: [FeRow; 4] = [FeRow::Ber1, FeRow::Ber5, FeRow::Ber10, FeRow::Ber15];

    /// Numeric id used in file headers: the raw BER in percent.
    pub fn id(self) -> u8 {
        match self {
            FeRow::Ber1 => 1,
            FeRow::Ber5 => 5,
            FeRow::Ber10 => 10,
            FeRow::Ber15 => 15,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        FeRow::ALL
            .into_iter()
            .find(|r| r.id() == id)
            .ok_or_else(|| Error::InvalidParams(format!("unknown FE row {id}")))
    }

    pub fn raw_ber(self) -> f64 {
        self.id() as f64 / 100.0
    }

    /// `(t, shortened length, repetition factor)` of the row.
    fn codes(self) -> (usize, usize, usize) {
        match self {
            FeRow::Ber1 => (14, 236, 1),
            FeRow::Ber5 => (11, 218, 3),
            FeRow::Ber10 => (12, 220, 5),
            FeRow::Ber15 => (15, 244, 7),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeConfig {
    id: u8,
    outer: BchCode,
    inner: RepCode,
    key_bits: usize,
    blocks: usize,
}

impl FeConfig {
    pub fn new(id: u8, outer: BchCode, inner: RepCode, key_bits: usize, blocks: usize) -> Result<Self> {
        if blocks == 0 || !key_bits.is_multiple_of(blocks) {
            return Err(Error::InvalidParams(format!(
                "{key_bits} key bits do not split into {blocks} blocks"
            )));
        }
        if key_bits / blocks > outer.message_len() {
            return Err(Error::InvalidParams(format!(
                "{} key bits per block exceed BCH message length {}",
                key_bits / blocks,
                outer.message_len()
            )));
        }
        Ok(FeConfig {
            id,
            outer,
            inner,
            key_bits,
            blocks,
        })
    }

    /// The row's configuration for a 1280-bit key in 10 blocks of 128 bits.
    pub fn for_row(row: FeRow) -> Self {
        let (t, n, r) = row.codes();
        let outer = BchCode::new(t, n).expect("static BCH parameters");
        let inner = RepCode::new(r).expect("static repetition factor");
        FeConfig::new(row.id(), outer, inner, 1280, 10).expect("static FE parameters")
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn outer(&self) -> &BchCode {
        &self.outer
    }

    pub fn inner(&self) -> &RepCode {
        &self.inner
    }

    pub fn key_bits(&self) -> usize {
        self.key_bits
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn key_bits_per_block(&self) -> usize {
        self.key_bits / self.blocks
    }

    /// Zero bits appended to each key chunk to fill the BCH message.
    pub fn pad_bits(&self) -> usize {
        self.outer.message_len() - self.key_bits_per_block()
    }

    fn block_raw_bits(&self) -> usize {
        self.outer.length() * self.inner.factor()
    }

    /// Number of POK cells consumed.
    pub fn raw_bits(&self) -> usize {
        self.blocks * self.block_raw_bits()
    }

    fn encode_key(&self, key: &[bool]) -> Result<Vec<bool>> {
        let mut out = Vec::with_capacity(self.raw_bits());
        for chunk in key.chunks(self.key_bits_per_block()) {
            let mut msg = chunk.to_vec();
            msg.resize(self.outer.message_len(), false);
            out.extend(self.inner.encode(&self.outer.encode(&msg)?));
        }
        Ok(out)
    }
}

/// Public helper string produced at enrollment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelperData {
    config_id: u8,
    blocks: u16,
    mask: Vec<bool>,
}

const HELPER_VERSION: u8 = 1;

impl HelperData {
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn config_id(&self) -> u8 {
        self.config_id
    }

    pub fn blocks(&self) -> usize {
        self.blocks as usize
    }

    /// 8-byte header (`version, config id, blocks u16 BE, mask bits u32 BE`)
    /// followed by the mask packed LSB-first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.mask.len().div_ceil(8));
        out.push(HELPER_VERSION);
        out.push(self.config_id);
        out.extend_from_slice(&self.blocks.to_be_bytes());
        out.extend_from_slice(&(self.mask.len() as u32).to_be_bytes());
        out.extend(crate::bits::pack_lsb_first(&self.mask));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::length("helper data header", 8, bytes.len()));
        }
        if bytes[0] != HELPER_VERSION {
            return Err(Error::format(
                0,
                format!("unsupported helper data version {}", bytes[0]),
            ));
        }
        let blocks = u16::from_be_bytes([bytes[2], bytes[3]]);
        let len = u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let mask = crate::bits::unpack_lsb_first(&bytes[8..], len)?;
        Ok(HelperData {
            config_id: bytes[1],
            blocks,
            mask,
        })
    }

    /// Flips one bit of the mask (fault injection for tests and demos).
    pub fn flip(&mut self, index: usize) {
        self.mask[index] ^= true;
    }
}

pub fn fe_enroll(reading: &[bool], config: &FeConfig, rng: &mut RngHandle) -> Result<(Vec<bool>, HelperData)> {
    let key = sample_uniform_bits(config.key_bits(), rng);
    let helper = fe_enroll_with_key(reading, &key, config)?;
    Ok((key, helper))
}

/// Enrollment with a caller-chosen key.
pub fn fe_enroll_with_key(reading: &[bool], key: &[bool], config: &FeConfig) -> Result<HelperData> {
    if reading.len() != config.raw_bits() {
        return Err(Error::length("POK reading", config.raw_bits(), reading.len()));
    }
    if key.len() != config.key_bits() {
        return Err(Error::length("key", config.key_bits(), key.len()));
    }
    let codeword = config.encode_key(key)?;
    Ok(HelperData {
        config_id: config.id(),
        blocks: config.blocks() as u16,
        mask: xor(&codeword, reading)?,
    })
}

pub fn fe_reconstruct(reading: &[bool], helper: &HelperData, config: &FeConfig) -> Result<Vec<bool>> {
    if helper.config_id != config.id() || helper.blocks() != config.blocks() {
        return Err(Error::InvalidParams(format!(
            "helper data is for config {} ({} blocks), not {} ({} blocks)",
            helper.config_id,
            helper.blocks,
            config.id(),
            config.blocks()
        )));
    }
    if helper.mask.len() != config.raw_bits() {
        return Err(Error::length("helper mask", config.raw_bits(), helper.mask.len()));
    }
    if reading.len() != config.raw_bits() {
        return Err(Error::length("POK reading", config.raw_bits(), reading.len()));
    }
    let noisy = xor(reading, &helper.mask)?;
    let per_block = config.key_bits_per_block();
    let mut key = Vec::with_capacity(config.key_bits());
    for (block, raw) in noisy.chunks(config.block_raw_bits()).enumerate() {
        let inner = config.inner.decode(raw)?;
        let decoded = match config.outer.decode(&inner) {
            Ok(d) => d,
            Err(Error::DecodeFailure) => return Err(Error::ReconstructFailure { block }),
            Err(e) => return Err(e),
        };
        // a nonzero pad means the decoder landed on the wrong codeword
        if decoded.message[per_block..].iter().any(|&b| b) {
            return Err(Error::ReconstructFailure { block });
        }
        key.extend_from_slice(&decoded.message[..per_block]);
    }
    Ok(key)
}

/// `P[Binomial(n, p) > t]`, summed term by term in log space.
pub(crate) fn binomial_upper_tail(n: u64, t: u64, p: f64) -> f64 {
    if p <= 0.0 || t >= n {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (t + 1..=n)
        .map(|i| (ln_binomial(n, i) + i as f64 * lp + (n - i) as f64 * lq).exp())
        .sum()
}

/// Analytic key-reconstruction failure probability under i.i.d. cell errors:
/// inner majority failure `p_in`, then more than `t` such failures among the
/// `n` bits of any of the `blocks` outer codewords.
pub fn fe_failure_rate(raw_ber: f64, config: &FeConfig) -> f64 {
    let p_in = config.inner.residual_ber(raw_ber);
    let outer = config.outer();
    let block = binomial_upper_tail(outer.length() as u64, outer.t() as u64, p_in);
    -((config.blocks() as f64) * (-block).ln_1p()).exp_m1()
}
