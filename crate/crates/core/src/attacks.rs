//! Active secret extraction through a chosen-ciphertext decryption oracle.
//!
//! With a fixed `a`, sweeping `b` over `Z_q` shows exactly one rising edge
//! of `Q(b − ⟨a, s⟩)`, at `b = ⟨a, s⟩ + q/4 + 1` for the quantizer
//! `(q/4, 3q/4] → 1`. Each swept `a` yields one exact linear equation in
//! `s`, and `n` independent equations determine `s` over `Z_{2^k}`.
//!
//! A counter-protected device has no entry point that takes `a`, so the
//! sweep cannot even be expressed against it: [`active_attack`] returns
//! [`Error::AttackBlocked`].

use crate::bits::hamming_distance;
use crate::device::{CompactChallenge, Device, RawOracle};
use crate::lwe::{decrypt_bit, Ciphertext, LweParams, SecretKey};
use crate::zq::{sample_uniform_vec, Modulus, RngHandle, ZqElem};
use crate::{Error, Result};

/// Ciphertext in, response bit out.
pub trait DecryptionOracle {
    fn query(&mut self, c: &Ciphertext) -> Result<bool>;
}

impl DecryptionOracle for RawOracle<'_> {
    fn query(&mut self, c: &Ciphertext) -> Result<bool> {
        self.decrypt(c)
    }
}

/// Anything an attacker holds. Yields a chosen-ciphertext oracle only if
/// the target exposes one.
pub trait AttackTarget {
    fn chosen_ciphertext_oracle(&mut self) -> Option<Box<dyn DecryptionOracle + '_>>;
}

impl AttackTarget for Device {
    fn chosen_ciphertext_oracle(&mut self) -> Option<Box<dyn DecryptionOracle + '_>> {
        self.raw_oracle().map(|o| Box::new(o) as Box<dyn DecryptionOracle + '_>)
    }
}

/// Bare decryption with a known key, for small-parameter experiments.
#[derive(Debug, Clone)]
pub struct KeyOracle {
    sk: SecretKey,
}

impl KeyOracle {
    pub fn new(sk: SecretKey) -> Self {
        KeyOracle { sk }
    }
}

impl DecryptionOracle for KeyOracle {
    fn query(&mut self, c: &Ciphertext) -> Result<bool> {
        decrypt_bit(&self.sk, c)
    }
}

impl AttackTarget for KeyOracle {
    fn chosen_ciphertext_oracle(&mut self) -> Option<Box<dyn DecryptionOracle + '_>> {
        Some(Box::new(&mut *self))
    }
}

impl<T: DecryptionOracle + ?Sized> DecryptionOracle for &mut T {
    fn query(&mut self, c: &Ciphertext) -> Result<bool> {
        (**self).query(c)
    }
}

/// Sweeps `b = 0..q−1` under a fixed `a` (exactly `q` queries) and returns
/// the smallest `b` whose response is 1 while `b − 1 (mod q)` gave 0.
pub fn find_threshold_b(oracle: &mut dyn DecryptionOracle, a: &[ZqElem], q: Modulus) -> Result<ZqElem> {
    let mut responses = Vec::with_capacity(q.q() as usize);
    let mut c = Ciphertext {
        a: a.to_vec(),
        b: q.reduce(0),
    };
    for b in 0..q.q() {
        c.b = q.reduce(b);
        responses.push(oracle.query(&c)?);
    }
    let len = responses.len();
    (0..len)
        .find(|&b| responses[b] && !responses[(b + len - 1) % len])
        .map(|b| q.reduce(b as u32))
        .ok_or(Error::NoTransition)
}

/// `⟨a, s⟩` from the rising edge returned by [`find_threshold_b`].
pub fn inner_product_from_edge(b_hat: ZqElem, q: Modulus) -> ZqElem {
    q.sub(b_hat, q.reduce(q.quarter() + 1))
}

/// Rows `⟨a_i, s⟩ = y_i` over `Z_q`, `q = 2^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSystemModQ {
    q: Modulus,
    n: usize,
    rows: Vec<(Vec<ZqElem>, ZqElem)>,
}

impl LinearSystemModQ {
    pub fn new(n: usize, q: Modulus) -> Self {
        LinearSystemModQ { q, n, rows: Vec::new() }
    }

    pub fn push(&mut self, a: Vec<ZqElem>, y: ZqElem) -> Result<()> {
        if a.len() != self.n {
            return Err(Error::length("equation row", self.n, a.len()));
        }
        self.rows.push((a, y));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[(Vec<ZqElem>, ZqElem)] {
        &self.rows
    }
}

/// Gauss–Jordan elimination over `Z_{2^k}` with odd (unit) pivots. Fails
/// with [`Error::Unsolvable`] when some column has no odd entry left; the
/// caller may add rows and retry. The result is checked against every row.
pub fn solve_linear_mod_2k(system: &LinearSystemModQ) -> Result<Vec<ZqElem>> {
    let (n, q) = (system.n, system.q);
    let unsolvable = |rank| Error::Unsolvable {
        rank,
        needed: n,
        rows: system.rows.len(),
    };
    if system.rows.len() < n {
        return Err(unsolvable(0));
    }
    let mut m: Vec<Vec<ZqElem>> = system
        .rows
        .iter()
        .map(|(a, y)| a.iter().copied().chain([*y]).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..m.len())
            .find(|&r| m[r][col].value() & 1 == 1)
            .ok_or_else(|| unsolvable(col))?;
        m.swap(col, pivot);
        let inv = q.inv(m[col][col]).expect("odd pivot is a unit");
        for v in m[col].iter_mut() {
            *v = q.mul(*v, inv);
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            let f = row[col];
            if r == col || f.value() == 0 {
                continue;
            }
            for (v, &p) in row.iter_mut().zip(&pivot_row).skip(col) {
                *v = q.sub(*v, q.mul(f, p));
            }
        }
    }
    let s: Vec<ZqElem> = m[..n].iter().map(|row| row[n]).collect();
    if let Some(row) = system.rows.iter().position(|(a, y)| q.dot(a, &s) != *y) {
        return Err(Error::InconsistentSystem { row });
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub secret: Vec<ZqElem>,
    pub queries: u64,
    pub rows: usize,
}

/// Sweeps fresh uniform `a` vectors until the system solves or
/// `row_budget` rows have been spent.
pub fn active_attack(
    target: &mut dyn AttackTarget,
    params: &LweParams,
    row_budget: usize,
    rng: &mut RngHandle,
) -> Result<AttackReport> {
    let mut oracle = target.chosen_ciphertext_oracle().ok_or(Error::AttackBlocked)?;
    let (n, q) = (params.n(), params.modulus());
    let mut system = LinearSystemModQ::new(n, q);
    let mut queries = 0u64;
    let mut last = Error::Unsolvable {
        rank: 0,
        needed: n,
        rows: 0,
    };
    while system.len() < row_budget {
        let a = sample_uniform_vec(q, n, rng);
        let edge = find_threshold_b(oracle.as_mut(), &a, q)?;
        queries += q.q() as u64;
        system.push(a, inner_product_from_edge(edge, q))?;
        if system.len() < n {
            continue;
        }
        match solve_linear_mod_2k(&system) {
            Ok(secret) => {
                return Ok(AttackReport {
                    secret,
                    queries,
                    rows: system.len(),
                })
            }
            Err(e @ Error::Unsolvable { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    if system.len() < n {
        last = Error::Unsolvable {
            rank: 0,
            needed: n,
            rows: system.len(),
        };
    }
    Err(last)
}

/// Sends the same compact challenge twice in a row (consecutive counter
/// values) and returns the fractional Hamming distance of the answers.
pub fn counter_replay_hd(device: &mut Device, challenge: &CompactChallenge) -> Result<f64> {
    let first = device.respond(challenge)?.bits;
    let second = device.respond(challenge)?.bits;
    Ok(hamming_distance(&first, &second)? as f64 / first.len() as f64)
}
