//! Homogeneous SRAM power-up key model: every cell has the same per-read
//! flip probability, independent across cells and reads.

use rand::Rng;

use crate::zq::{sample_uniform_bits, RngHandle};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PokInstance {
    enrollment: Vec<bool>,
    ber: f64,
}

impl PokInstance {
    /// `n_cells` cells with uniform power-up values.
    pub fn new(n_cells: usize, ber: f64, rng: &mut RngHandle) -> Result<Self> {
        let bits = sample_uniform_bits(n_cells, rng);
        PokInstance::from_bits(bits, ber)
    }

    pub fn from_bits(enrollment: Vec<bool>, ber: f64) -> Result<Self> {
        if enrollment.is_empty() {
            return Err(Error::InvalidParams("POK needs at least one cell".into()));
        }
        if !(0.0..=0.5).contains(&ber) {
            return Err(Error::InvalidParams(format!("POK BER {ber} outside [0, 0.5]")));
        }
        Ok(PokInstance { enrollment, ber })
    }

    pub fn len(&self) -> usize {
        self.enrollment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.enrollment.is_empty()
    }

    pub fn ber(&self) -> f64 {
        self.ber
    }

    /// Ground-truth power-up values.
    pub fn enrollment(&self) -> &[bool] {
        &self.enrollment
    }

    /// One noisy power-up read.
    pub fn read(&self, rng: &mut RngHandle) -> Vec<bool> {
        if self.ber == 0.0 {
            return self.enrollment.clone();
        }
        self.enrollment.iter().map(|&b| b ^ rng.random_bool(self.ber)).collect()
    }
}
