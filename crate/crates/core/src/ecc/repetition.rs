//! `[r, 1, (r−1)/2]` repetition code with majority decoding.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepCode {
    r: usize,
}

impl RepCode {
    pub fn new(r: usize) -> Result<Self> {
        if r == 0 || r.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "repetition factor must be odd and >= 1, got {r}"
            )));
        }
        Ok(RepCode { r })
    }

    /// The trivial code (`r = 1`), used when a configuration has no inner code.
    pub fn identity() -> Self {
        RepCode { r: 1 }
    }

    pub fn factor(&self) -> usize {
        self.r
    }

    pub fn correctable(&self) -> usize {
        (self.r - 1) / 2
    }

    pub fn encode(&self, bits: &[bool]) -> Vec<bool> {
        bits.iter().flat_map(|&b| std::iter::repeat_n(b, self.r)).collect()
    }

    pub fn decode(&self, bits: &[bool]) -> Result<Vec<bool>> {
        if !bits.len().is_multiple_of(self.r) {
            return Err(Error::length(
                "repetition codeword",
                bits.len().next_multiple_of(self.r),
                bits.len(),
            ));
        }
        Ok(bits
            .chunks(self.r)
            .map(|g| g.iter().filter(|&&b| b).count() > self.r / 2)
            .collect())
    }

    /// Post-decoding bit error rate `Σ_{i > (r−1)/2} C(r,i) p^i (1−p)^{r−i}`.
    pub fn residual_ber(&self, p: f64) -> f64 {
        let r = self.r as u64;
        (self.correctable() as u64 + 1..=r)
            .map(|i| binomial(r, i) * p.powi(i as i32) * (1.0 - p).powi((r - i) as i32))
            .sum()
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
