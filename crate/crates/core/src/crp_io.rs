//! Line-oriented text formats: CRP datasets, the server registry, stored
//! devices and session files. Every file starts with a `# <magic> v<N>`
//! header of space-separated `key=value` tokens. See `FORMATS.md` for the
//! full grammar.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::bits::{from_bit_string, pack_lsb_first, to_bit_string, unpack_lsb_first};
use crate::device::{session_vectors, CompactChallenge, Device};
use crate::ecc::{FeConfig, FeRow, HelperData};
use crate::lfsr::{ExternalSeed, SeedMaterial, PUF_POLYNOMIAL};
use crate::lwe::{
    decrypt_bit, encrypt_bit, unpack_challenge, Ciphertext, LweParams, NoiseVector, PublicKey, SecretKey,
};
use crate::pok::PokInstance;
use crate::server::{EnrollmentRecord, SeedWidth, Server};
use crate::zq::{Modulus, RngHandle, ZqElem};
use crate::{Error, Result};

pub const DATASET_MAGIC: &str = "lattice-puf-crp";
pub const DATASET_VERSION: u32 = 1;
pub const REGISTRY_MAGIC: &str = "lattice-puf-registry";
pub const DEVICE_MAGIC: &str = "lattice-puf-device";
pub const SESSION_MAGIC: &str = "lattice-puf-session";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordForm {
    Compact,
    Expanded,
}

impl RecordForm {
    fn name(self) -> &'static str {
        match self {
            RecordForm::Compact => "compact",
            RecordForm::Expanded => "expanded",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "compact" => Ok(RecordForm::Compact),
            "expanded" => Ok(RecordForm::Expanded),
            other => Err(Error::format(1, format!("unknown record form `{other}`"))),
        }
    }
}

/// Where expanded challenges come from: the LFSR-relaxed sessions a real
/// device answers, or reference encryptions under a full public key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChallengeSource {
    Prng,
    Ciphertext,
}

impl ChallengeSource {
    fn name(self) -> &'static str {
        match self {
            ChallengeSource::Prng => "prng",
            ChallengeSource::Ciphertext => "ciphertext",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "prng" => Ok(ChallengeSource::Prng),
            "ciphertext" => Ok(ChallengeSource::Ciphertext),
            other => Err(Error::format(1, format!("unknown challenge source `{other}`"))),
        }
    }
}

/// A `t = 1` session and the device's answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactRecord {
    pub seed: ExternalSeed,
    pub counter: u128,
    pub b: ZqElem,
    pub response: bool,
}

/// The full `(n+1)·log2 q`-bit challenge in `unpack_challenge` layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedRecord {
    pub challenge: Vec<bool>,
    pub response: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CrpRecord {
    Compact(CompactRecord),
    Expanded(ExpandedRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub form: RecordForm,
    pub source: ChallengeSource,
    pub params: LweParams,
    pub polynomial: String,
    pub seed_bits: usize,
    pub count: usize,
    pub rng_seed: u64,
    /// SHA-256 over all record lines, each terminated by `\n`.
    pub sha256: String,
}

impl DatasetManifest {
    pub fn header_line(&self) -> String {
        format!(
            "# {DATASET_MAGIC} v{} form={} source={} {} poly={} seed_bits={} count={} rng_seed={} sha256={}",
            self.version,
            self.form.name(),
            self.source.name(),
            params_tokens(&self.params),
            self.polynomial,
            self.seed_bits,
            self.count,
            self.rng_seed,
            self.sha256
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let (version, kv) = parse_header(line, DATASET_MAGIC, 1)?;
        if version != DATASET_VERSION {
            return Err(Error::format(1, format!("unsupported dataset version {version}")));
        }
        let polynomial = field(&kv, "poly", 1)?.to_string();
        if polynomial != PUF_POLYNOMIAL.id() {
            return Err(Error::PolynomialMismatch {
                expected: PUF_POLYNOMIAL.id(),
                found: polynomial,
            });
        }
        Ok(DatasetManifest {
            version,
            form: RecordForm::parse(field(&kv, "form", 1)?)?,
            source: ChallengeSource::parse(field(&kv, "source", 1)?)?,
            params: parse_params(&kv, 1)?,
            polynomial,
            seed_bits: parse_num(&kv, "seed_bits", 1)?,
            count: parse_num(&kv, "count", 1)?,
            rng_seed: parse_num(&kv, "rng_seed", 1)?,
            sha256: field(&kv, "sha256", 1)?.to_string(),
        })
    }
}

fn params_tokens(p: &LweParams) -> String {
    format!("n={} q={} m={} alpha={}", p.n(), p.q(), p.m(), p.alpha())
}

/// `# <magic> v<N> k=v ...` → version and the key/value map.
fn parse_header(line: &str, magic: &str, line_no: usize) -> Result<(u32, BTreeMap<String, String>)> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("#") || tokens.next() != Some(magic) {
        return Err(Error::format(line_no, format!("expected a `# {magic}` header")));
    }
    let version = tokens
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(line_no, "missing format version"))?;
    let mut kv = BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::format(line_no, format!("expected key=value, got `{tok}`")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    Ok((version, kv))
}

fn field<'a>(kv: &'a BTreeMap<String, String>, key: &str, line: usize) -> Result<&'a str> {
    kv.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::format(line, format!("missing `{key}`")))
}

fn parse_num<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str, line: usize) -> Result<T> {
    let v = field(kv, key, line)?;
    v.parse()
        .map_err(|_| Error::format(line, format!("bad value `{v}` for `{key}`")))
}

fn parse_params(kv: &BTreeMap<String, String>, line: usize) -> Result<LweParams> {
    LweParams::new(
        parse_num(kv, "n", line)?,
        parse_num(kv, "q", line)?,
        parse_num(kv, "m", line)?,
        parse_num(kv, "alpha", line)?,
    )
}

fn check_version(version: u32, what: &str, line: usize) -> Result<()> {
    if version != FILE_VERSION {
        return Err(Error::format(line, format!("unsupported {what} version {version}")));
    }
    Ok(())
}

fn elem_hex_width(q: Modulus) -> usize {
    (q.log_q() as usize).div_ceil(4)
}

fn render_compact(r: &CompactRecord, q: Modulus) -> String {
    format!(
        "{}\t{}\t{:0w$x}\t{}",
        hex::encode(r.seed.as_bytes()),
        r.counter,
        r.b.value(),
        r.response as u8,
        w = elem_hex_width(q)
    )
}

fn render_expanded(r: &ExpandedRecord) -> String {
    format!("{}\t{}", to_bit_string(&r.challenge), r.response as u8)
}

fn parse_bit(s: &str, line: usize) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::format(line, format!("response must be 0 or 1, got `{other}`"))),
    }
}

fn parse_record(text: &str, manifest: &DatasetManifest, line: usize) -> Result<CrpRecord> {
    let fields: Vec<&str> = text.split('\t').collect();
    let q = manifest.params.modulus();
    match (manifest.form, fields.as_slice()) {
        (RecordForm::Compact, [seed, counter, b, resp]) => {
            let seed_bytes = hex::decode(seed).map_err(|e| Error::format(line, format!("seed: {e}")))?;
            if seed_bytes.len() * 8 != manifest.seed_bits {
                return Err(Error::format(line, format!("seed has {} bits", seed_bytes.len() * 8)));
            }
            let counter = counter
                .parse()
                .map_err(|_| Error::format(line, format!("bad counter `{counter}`")))?;
            let b = u32::from_str_radix(b, 16)
                .ok()
                .and_then(|v| q.elem(v).ok())
                .ok_or_else(|| Error::format(line, format!("bad b value `{b}`")))?;
            Ok(CrpRecord::Compact(CompactRecord {
                seed: ExternalSeed::from_bytes(&seed_bytes)?,
                counter,
                b,
                response: parse_bit(resp, line)?,
            }))
        }
        (RecordForm::Expanded, [bits, resp]) => {
            let expected = manifest.params.challenge_bits();
            let challenge = from_bit_string(bits)
                .filter(|c| c.len() == expected)
                .ok_or_else(|| Error::format(line, format!("challenge must be {expected} characters of 0/1")))?;
            Ok(CrpRecord::Expanded(ExpandedRecord {
                challenge,
                response: parse_bit(resp, line)?,
            }))
        }
        (form, _) => Err(Error::format(
            line,
            format!("wrong field count {} for {} records", fields.len(), form.name()),
        )),
    }
}

/// Regenerates the challenge of a compact record from the LFSR.
pub fn expand_record(rec: &CompactRecord, params: &LweParams) -> ExpandedRecord {
    let material = SeedMaterial {
        external: rec.seed,
        counter: rec.counter,
    };
    let a = session_vectors(&material, params, 1).next().expect("t = 1");
    let c = Ciphertext { a, b: rec.b };
    ExpandedRecord {
        challenge: unpack_challenge(&c, params).expect("a has n entries"),
        response: rec.response,
    }
}

enum Pending {
    Compact(CompactRecord),
    Cipher(Ciphertext, bool),
}

/// Runs `count` single-bit sessions of `id` against `device` and writes the
/// dataset to `sink`. With [`ChallengeSource::Ciphertext`] the records are
/// instead reference encryptions under a fresh public key for the enrolled
/// secret, answered by decryption; those exist only in expanded form.
#[allow(clippy::too_many_arguments)]
pub fn export_crps<W: Write>(
    server: &mut Server,
    id: &str,
    device: &mut Device,
    count: usize,
    form: RecordForm,
    source: ChallengeSource,
    rng_seed: u64,
    sink: &mut W,
) -> Result<DatasetManifest> {
    let params = *server.params();
    let q = params.modulus();
    let mut rng = RngHandle::from_seed(rng_seed);
    let mut pending = Vec::with_capacity(count);
    match source {
        ChallengeSource::Prng => {
            for _ in 0..count {
                let s = server.gen_session(id, 1, &mut rng)?;
                let resp = device.respond(&s.challenge)?;
                pending.push(Pending::Compact(CompactRecord {
                    seed: s.challenge.seed(),
                    counter: resp.counter_used,
                    b: s.challenge.b_values()[0],
                    response: resp.bits[0],
                }));
            }
        }
        ChallengeSource::Ciphertext => {
            if form == RecordForm::Compact {
                return Err(Error::InvalidParams(
                    "ciphertext-source records have no compact form".into(),
                ));
            }
            let rec = server.record(id)?;
            let pk = PublicKey::for_secret(&params, rec.secret(), rec.noise(), &mut rng)?;
            for _ in 0..count {
                let r = rand::Rng::random(&mut rng);
                let c = encrypt_bit(&pk, r, &mut rng);
                let resp = decrypt_bit(rec.secret(), &c)?;
                pending.push(Pending::Cipher(c, resp));
            }
        }
    }
    let render = |p: &Pending| -> String {
        match (p, form) {
            (Pending::Compact(c), RecordForm::Compact) => render_compact(c, q),
            (Pending::Compact(c), RecordForm::Expanded) => render_expanded(&expand_record(c, &params)),
            (Pending::Cipher(c, r), _) => render_expanded(&ExpandedRecord {
                challenge: unpack_challenge(c, &params).expect("a has n entries"),
                response: *r,
            }),
        }
    };
    let mut hasher = Sha256::new();
    for p in &pending {
        hasher.update(render(p).as_bytes());
        hasher.update(b"\n");
    }
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        form,
        source,
        params,
        polynomial: PUF_POLYNOMIAL.id(),
        seed_bits: server.seed_width().bits(),
        count,
        rng_seed,
        sha256: hex::encode(hasher.finalize()),
    };
    writeln!(sink, "{}", manifest.header_line()).map_err(|e| Error::io(None, e))?;
    for (i, p) in pending.iter().enumerate() {
        writeln!(sink, "{}", render(p)).map_err(|e| Error::io(Some(i), e))?;
    }
    sink.flush().map_err(|e| Error::io(None, e))?;
    Ok(manifest)
}

/// Parses and integrity-checks a dataset.
pub fn import_crps<R: BufRead>(source: R) -> Result<(DatasetManifest, Vec<CrpRecord>)> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(1, "empty dataset"))?
        .map_err(|e| Error::io(None, e))?;
    let manifest = DatasetManifest::parse(&header)?;
    let mut hasher = Sha256::new();
    let mut records = Vec::with_capacity(manifest.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(Some(i), e))?;
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        records.push(parse_record(&line, &manifest, i + 2)?);
    }
    let actual = hex::encode(hasher.finalize());
    if actual != manifest.sha256 {
        return Err(Error::HashMismatch {
            expected: manifest.sha256.clone(),
            actual,
        });
    }
    if records.len() != manifest.count {
        return Err(Error::format(
            1,
            format!("manifest count {} but {} records", manifest.count, records.len()),
        ));
    }
    Ok((manifest, records))
}

fn pack_elems(v: &[ZqElem], q: Modulus) -> String {
    let k = q.log_q() as usize;
    let bits: Vec<bool> = v
        .iter()
        .flat_map(|x| (0..k).map(move |i| (x.value() >> i) & 1 == 1))
        .collect();
    hex::encode(pack_lsb_first(&bits))
}

fn unpack_elems(s: &str, len: usize, q: Modulus, line: usize) -> Result<Vec<ZqElem>> {
    let k = q.log_q() as usize;
    let bytes = hex::decode(s).map_err(|e| Error::format(line, e.to_string()))?;
    if bytes.len() != (len * k).div_ceil(8) {
        return Err(Error::format(line, format!("expected {len} packed elements")));
    }
    let bits = unpack_lsb_first(&bytes, len * k)?;
    Ok(bits
        .chunks(k)
        .map(|g| q.reduce(g.iter().rev().fold(0u32, |acc, &b| (acc << 1) | b as u32)))
        .collect())
}

/// Header plus one `id \t s \t e \t counter` line per record, sorted by id.
pub fn write_registry<W: Write>(server: &Server, sink: &mut W) -> Result<()> {
    let q = server.params().modulus();
    writeln!(
        sink,
        "# {REGISTRY_MAGIC} v{FILE_VERSION} {} seed_bits={}",
        params_tokens(server.params()),
        server.seed_width().bits()
    )
    .map_err(|e| Error::io(None, e))?;
    for (i, rec) in server.records().enumerate() {
        writeln!(
            sink,
            "{}\t{}\t{}\t{}",
            rec.id(),
            pack_elems(rec.secret().as_slice(), q),
            pack_elems(rec.noise().as_slice(), q),
            rec.expected_counter()
        )
        .map_err(|e| Error::io(Some(i), e))?;
    }
    Ok(())
}

pub fn read_registry<R: BufRead>(source: R) -> Result<Server> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(1, "empty registry"))?
        .map_err(|e| Error::io(None, e))?;
    let (version, kv) = parse_header(&header, REGISTRY_MAGIC, 1)?;
    check_version(version, "registry", 1)?;
    let params = parse_params(&kv, 1)?;
    let q = params.modulus();
    let mut server = Server::new(params, SeedWidth::from_bits(parse_num(&kv, "seed_bits", 1)?)?);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(Some(i), e))?;
        let f: Vec<&str> = line.split('\t').collect();
        let [id, s, e, counter] = f.as_slice() else {
            return Err(Error::format(line_no, "expected 4 tab-separated fields"));
        };
        let s = SecretKey::new(unpack_elems(s, params.n(), q, line_no)?, &params)?;
        let e = NoiseVector::new(unpack_elems(e, params.m(), q, line_no)?, &params)?;
        let counter = counter
            .parse()
            .map_err(|_| Error::format(line_no, format!("bad counter `{counter}`")))?;
        server.insert(EnrollmentRecord::new(*id, params, s, e, counter)?)?;
    }
    Ok(server)
}

/// Stored simulated device: parameters, FE row, lifetime counter, the POK's
/// ground-truth cells and the helper data.
pub fn write_device<W: Write>(device: &Device, sink: &mut W) -> Result<()> {
    let io = |e| Error::io(None, e);
    writeln!(
        sink,
        "# {DEVICE_MAGIC} v{FILE_VERSION} {} fe={} ber={} counter={}",
        params_tokens(device.params()),
        device.fe_config().id(),
        device.pok().ber(),
        device.counter()
    )
    .map_err(io)?;
    writeln!(sink, "pok\t{}", hex::encode(pack_lsb_first(device.pok().enrollment()))).map_err(io)?;
    writeln!(sink, "helper\t{}", hex::encode(device.helper().to_bytes())).map_err(io)?;
    Ok(())
}

pub fn read_device<R: BufRead>(source: R) -> Result<Device> {
    let lines: Vec<String> = source
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(None, e))?;
    let header = lines.first().ok_or_else(|| Error::format(1, "empty device file"))?;
    let (version, kv) = parse_header(header, DEVICE_MAGIC, 1)?;
    check_version(version, "device", 1)?;
    let params = parse_params(&kv, 1)?;
    let fe = FeConfig::for_row(FeRow::from_id(parse_num(&kv, "fe", 1)?)?);
    let ber: f64 = parse_num(&kv, "ber", 1)?;
    let counter: u128 = parse_num(&kv, "counter", 1)?;
    let body = |tag: &str, line: usize| -> Result<Vec<u8>> {
        let text = lines
            .get(line - 1)
            .and_then(|l| l.strip_prefix(tag))
            .and_then(|l| l.strip_prefix('\t'))
            .ok_or_else(|| Error::format(line, format!("expected `{tag}` line")))?;
        hex::decode(text).map_err(|e| Error::format(line, e.to_string()))
    };
    let pok_bits = unpack_lsb_first(&body("pok", 2)?, fe.raw_bits())?;
    let helper = HelperData::from_bytes(&body("helper", 3)?)?;
    Device::from_parts(params, fe, PokInstance::from_bits(pok_bits, ber)?, helper, counter)
}

/// One compact challenge, hex-encoded `CompactChallenge::to_bytes`.
pub fn write_session<W: Write>(ch: &CompactChallenge, q: Modulus, sink: &mut W) -> Result<()> {
    writeln!(
        sink,
        "# {SESSION_MAGIC} v{FILE_VERSION} q={} seed_bits={} t={}\n{}",
        q.q(),
        ch.seed().bit_len(),
        ch.t(),
        hex::encode(ch.to_bytes(q))
    )
    .map_err(|e| Error::io(None, e))
}

pub fn read_session<R: BufRead>(source: R) -> Result<CompactChallenge> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(1, "empty session file"))?
        .map_err(|e| Error::io(None, e))?;
    let (version, kv) = parse_header(&header, SESSION_MAGIC, 1)?;
    check_version(version, "session", 1)?;
    let q = Modulus::from_q(parse_num(&kv, "q", 1)?)?;
    let body = lines
        .next()
        .ok_or_else(|| Error::format(2, "missing session body"))?
        .map_err(|e| Error::io(None, e))?;
    let bytes = hex::decode(body.trim()).map_err(|e| Error::format(2, e.to_string()))?;
    CompactChallenge::from_bytes(&bytes, parse_num(&kv, "seed_bits", 1)?, q)
}
