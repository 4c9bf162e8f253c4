//! Behavioral model of a lattice PUF.
//!
//! The device computes the decryption function of an LWE cryptosystem over
//! `Z_q` (`q = 2^k`). Its secret comes from a noisy SRAM key (POK) stabilized
//! by a concatenated BCH + repetition fuzzy extractor. Challenges are
//! compressed to a seed that drives a 256-bit LFSR, and a self-incrementing
//! counter mixed into that seed blocks chosen-ciphertext extraction of the
//! secret.
//!
//! Module map:
//!
//! - [`zq`]: modular arithmetic, the reproducible RNG, the discrete Gaussian.
//! - [`lwe`]: the cryptosystem, challenge packing, the analytic error model.
//! - [`lfsr`]: the challenge-expanding LFSR.
//! - [`ecc`]: GF(2^8), BCH, repetition codes, and the fuzzy extractor.
//! - [`pok`]: the SRAM cell model.
//! - [`device`] and [`server`]: the two protocol endpoints.
//! - [`stats`]: uniformity/uniqueness/reliability over populations.
//! - [`attacks`]: the active threshold-sweep attack and its linear solver.
//! - [`crp_io`]: text formats for sessions, registries and CRP datasets.

pub mod attacks;
pub mod bits;
pub mod crp_io;
pub mod device;
pub mod ecc;
pub mod error;
pub mod lfsr;
pub mod lwe;
pub mod pok;
pub mod server;
pub mod stats;
pub mod zq;

pub use error::{Error, Result};
