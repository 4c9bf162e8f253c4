//! Population statistics: uniformity, uniqueness and reliability.
//!
//! Challenges always come from the instance's own ciphertext distribution
//! (server-generated sessions), never from uniform bit strings. Work is
//! split per instance across a rayon pool; instance `i` draws from
//! `RngHandle::derive(seed, i)` and results are collected in index order, so
//! summaries depend only on the inputs and the seed. Metrics run on clones,
//! leaving the population's counters untouched.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::bits::{hamming_distance, hamming_weight};
use crate::device::{evaluate_session, CompactChallenge, Device};
use crate::ecc::FeConfig;
use crate::lfsr::SeedMaterial;
use crate::lwe::{LweParams, NoiseVector, SecretKey};
use crate::server::{gen_challenge_session, EnrollmentRecord, SeedWidth, SubsetMode};
use crate::zq::RngHandle;
use crate::{Error, Result};

/// Bits per generated session when a metric needs many challenges.
pub const SESSION_BITS: usize = 100;

/// Histogram bin width, as a fraction.
pub const BIN_WIDTH: f64 = 0.005;

/// What the statistics harness needs from a device.
pub trait Responder: Clone + Send + Sync {
    fn counter(&self) -> u128;

    fn respond(&mut self, ch: &CompactChallenge) -> Result<Vec<bool>>;

    /// Fresh power-up (key reconstruction). Devices without a key store
    /// can ignore it.
    fn power_cycle(&mut self, _rng: &mut RngHandle) -> Result<()> {
        Ok(())
    }
}

impl Responder for Device {
    fn counter(&self) -> u128 {
        Device::counter(self)
    }

    fn respond(&mut self, ch: &CompactChallenge) -> Result<Vec<bool>> {
        Ok(Device::respond(self, ch)?.bits)
    }

    fn power_cycle(&mut self, rng: &mut RngHandle) -> Result<()> {
        self.power_up(rng)
    }
}

/// A bare key with a counter, answering sessions exactly like a device but
/// without the POK and fuzzy extractor.
#[derive(Debug, Clone)]
pub struct KeyedResponder {
    params: LweParams,
    sk: SecretKey,
    counter: u128,
}

impl KeyedResponder {
    pub fn new(params: LweParams, sk: SecretKey) -> Self {
        KeyedResponder { params, sk, counter: 0 }
    }
}

impl Responder for KeyedResponder {
    fn counter(&self) -> u128 {
        self.counter
    }

    fn respond(&mut self, ch: &CompactChallenge) -> Result<Vec<bool>> {
        let material = SeedMaterial {
            external: ch.seed(),
            counter: self.counter,
        };
        self.counter += 1;
        Ok(evaluate_session(&self.sk, &self.params, &material, ch.b_values()))
    }
}

#[derive(Debug, Clone)]
pub struct Instance<D> {
    pub device: D,
    pub record: EnrollmentRecord,
}

#[derive(Debug, Clone)]
pub struct Population<D> {
    params: LweParams,
    width: SeedWidth,
    instances: Vec<Instance<D>>,
}

impl<D: Responder> Population<D> {
    pub fn from_instances(params: LweParams, width: SeedWidth, instances: Vec<Instance<D>>) -> Result<Self> {
        if let Some(bad) = instances.iter().find(|i| *i.record.params() != params) {
            return Err(Error::InvalidParams(format!(
                "instance {} has different LWE parameters",
                bad.record.id()
            )));
        }
        Ok(Population {
            params,
            width,
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn params(&self) -> &LweParams {
        &self.params
    }

    pub fn instances(&self) -> &[Instance<D>] {
        &self.instances
    }
}

impl Population<Device> {
    /// Provisions, powers up and enrolls `count` devices in parallel.
    pub fn manufacture(
        count: usize,
        params: LweParams,
        fe: &FeConfig,
        ber: f64,
        width: SeedWidth,
        seed: u64,
    ) -> Result<Self> {
        let instances = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngHandle::derive(seed, i as u64);
                let (mut device, sk) = Device::provision(params, fe.clone(), ber, &mut rng)?;
                device.power_up(&mut rng)?;
                let e = NoiseVector::sample(&params, &mut rng);
                let record = EnrollmentRecord::new(format!("dev{i:05}"), params, sk, e, device.counter())?;
                Ok(Instance { device, record })
            })
            .collect::<Result<Vec<_>>>()?;
        Population::from_instances(params, width, instances)
    }
}

impl Population<KeyedResponder> {
    /// Instances without the key-storage layer, for metrics that do not
    /// depend on it.
    pub fn keyed(count: usize, params: LweParams, width: SeedWidth, seed: u64) -> Result<Self> {
        let q = params.modulus();
        let instances = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngHandle::derive(seed, i as u64);
                let s = crate::zq::sample_uniform_vec(q, params.n(), &mut rng);
                let sk = SecretKey::new(s, &params)?;
                let e = NoiseVector::sample(&params, &mut rng);
                let record = EnrollmentRecord::new(format!("dev{i:05}"), params, sk.clone(), e, 0)?;
                Ok(Instance {
                    device: KeyedResponder::new(params, sk),
                    record,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Population::from_instances(params, width, instances)
    }
}

/// Mean, sample standard deviation and a fixed-width histogram of
/// per-instance fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// `histogram[k]` counts values in `[k·BIN_WIDTH, (k+1)·BIN_WIDTH)`;
    /// the last bin is closed at 1.
    pub histogram: Vec<usize>,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        let bins = (1.0 / BIN_WIDTH).round() as usize;
        let mut histogram = vec![0usize; bins];
        for &v in values {
            let k = ((v / BIN_WIDTH).floor().max(0.0) as usize).min(bins - 1);
            histogram[k] += 1;
        }
        if count == 0 {
            return MetricSummary {
                mean: 0.0,
                std: 0.0,
                count,
                histogram,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        MetricSummary {
            mean,
            std,
            count,
            histogram,
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std / (self.count as f64).sqrt()
        }
    }

    /// `metric,mean,std,count` header and one row.
    pub fn summary_csv(&self, metric: &str) -> String {
        format!(
            "metric,mean,std,count\n{metric},{:.6},{:.6},{}\n",
            self.mean, self.std, self.count
        )
    }

    /// `bin_low,bin_high,count` for every bin.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (k, c) in self.histogram.iter().enumerate() {
            let lo = k as f64 * BIN_WIDTH;
            let _ = writeln!(out, "{:.3},{:.3},{}", lo, lo + BIN_WIDTH, c);
        }
        out
    }
}

/// Which reference a response bit is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReliabilityMode {
    /// The encrypted bit `r`: decryption errors count as bit errors.
    #[default]
    Plaintext,
    /// The server's own decryption: only key-storage noise remains.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityConfig {
    pub challenges: usize,
    /// Power-up cycles per instance, each answering `challenges` bits.
    pub repeats: usize,
    pub mode: ReliabilityMode,
    /// Count a failed key reconstruction as a cycle with every bit wrong
    /// instead of retrying the power-up.
    pub fold_fe_failures: bool,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        ReliabilityConfig {
            challenges: 1000,
            repeats: 1,
            mode: ReliabilityMode::Plaintext,
            fold_fe_failures: false,
        }
    }
}

struct Session {
    challenge: CompactChallenge,
    expected: Vec<bool>,
    plaintext: Vec<bool>,
}

/// Sessions of at most [`SESSION_BITS`] bits covering `total` challenges.
fn sessions<'a>(
    rec: &'a mut EnrollmentRecord,
    total: usize,
    width: SeedWidth,
    rng: &mut RngHandle,
) -> impl Iterator<Item = Result<Session>> + 'a {
    let mut rng = rng.fork();
    (0..total.div_ceil(SESSION_BITS)).map(move |k| {
        let t = SESSION_BITS.min(total - k * SESSION_BITS);
        let s = gen_challenge_session(rec, t, width, SubsetMode::Random, &mut rng)?;
        Ok(Session {
            challenge: s.challenge,
            expected: s.expected,
            plaintext: s.plaintext,
        })
    })
}

fn per_instance<D, F>(pop: &Population<D>, seed: u64, f: F) -> Result<Vec<f64>>
where
    D: Responder,
    F: Fn(usize, &Instance<D>, &mut RngHandle) -> Result<f64> + Sync,
{
    (0..pop.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = RngHandle::derive(seed, i as u64);
            f(i, &pop.instances[i], &mut rng)
        })
        .collect()
}

/// Mean response weight per instance.
pub fn eval_uniformity<D: Responder>(pop: &Population<D>, n_challenges: usize, seed: u64) -> Result<MetricSummary> {
    check_challenges(n_challenges)?;
    let width = pop.width;
    let values = per_instance(pop, seed, |_, inst, rng| {
        let (mut dev, mut rec) = (inst.device.clone(), inst.record.clone());
        let mut ones = 0usize;
        for s in sessions(&mut rec, n_challenges, width, rng) {
            ones += hamming_weight(&dev.respond(&s?.challenge)?);
        }
        Ok(ones as f64 / n_challenges as f64)
    })?;
    Ok(MetricSummary::from_values(&values))
}

/// Instance `i` is paired with a uniformly chosen `j ≠ i`. Both answer the
/// same sessions, generated from `i`'s ciphertext distribution at equal
/// counters. One value per pair.
pub fn eval_uniqueness<D: Responder>(pop: &Population<D>, n_challenges: usize, seed: u64) -> Result<MetricSummary> {
    check_challenges(n_challenges)?;
    if pop.len() < 2 {
        return Err(Error::InvalidParams("uniqueness needs at least 2 instances".into()));
    }
    let width = pop.width;
    let values = per_instance(pop, seed, |i, inst, rng| {
        let mut j = rng.random_range(0..pop.len() - 1);
        if j >= i {
            j += 1;
        }
        let mut mine = inst.device.clone();
        let mut other = pop.instances[j].device.clone();
        if mine.counter() != other.counter() {
            return Err(Error::InvalidParams(format!(
                "instances {i} and {j} are at different counters"
            )));
        }
        let mut rec = inst.record.clone();
        let mut hd = 0usize;
        for s in sessions(&mut rec, n_challenges, width, rng) {
            let s = s?;
            hd += hamming_distance(&mine.respond(&s.challenge)?, &other.respond(&s.challenge)?)?;
        }
        Ok(hd as f64 / n_challenges as f64)
    })?;
    Ok(MetricSummary::from_values(&values))
}

/// Intra-class error fraction per instance.
pub fn eval_reliability<D: Responder>(
    pop: &Population<D>,
    cfg: &ReliabilityConfig,
    seed: u64,
) -> Result<MetricSummary> {
    check_challenges(cfg.challenges)?;
    if cfg.repeats == 0 {
        return Err(Error::InvalidParams("reliability needs repeats >= 1".into()));
    }
    const MAX_RETRIES: usize = 1000;
    let width = pop.width;
    let values = per_instance(pop, seed, |_, inst, rng| {
        let (mut dev, mut rec) = (inst.device.clone(), inst.record.clone());
        let mut errors = 0usize;
        for _ in 0..cfg.repeats {
            let mut attempts = 0;
            let folded = loop {
                match dev.power_cycle(rng) {
                    Ok(()) => break false,
                    Err(Error::ReconstructFailure { .. }) if cfg.fold_fe_failures => break true,
                    Err(Error::ReconstructFailure { .. }) if attempts < MAX_RETRIES => attempts += 1,
                    Err(e) => return Err(e),
                }
            };
            if folded {
                errors += cfg.challenges;
                continue;
            }
            for s in sessions(&mut rec, cfg.challenges, width, rng) {
                let s = s?;
                let got = dev.respond(&s.challenge)?;
                let reference = match cfg.mode {
                    ReliabilityMode::Plaintext => &s.plaintext,
                    ReliabilityMode::Expected => &s.expected,
                };
                errors += hamming_distance(&got, reference)?;
            }
        }
        Ok(errors as f64 / (cfg.challenges * cfg.repeats) as f64)
    })?;
    Ok(MetricSummary::from_values(&values))
}

fn check_challenges(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParams("need at least one challenge".into()));
    }
    Ok(())
}
