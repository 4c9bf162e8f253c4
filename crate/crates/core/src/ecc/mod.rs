//! Error-correcting codes and the code-offset fuzzy extractor.
//!
//! The extractor concatenates a shortened binary BCH outer code over
//! GF(2^8) with a repetition inner code.

pub mod bch;
pub mod fe;
pub mod gf256;
pub mod repetition;

pub use bch::{BchCode, BchDecoded};
pub use fe::{fe_enroll, fe_enroll_with_key, fe_failure_rate, fe_reconstruct, FeConfig, FeRow, HelperData};
pub use gf256::Gf256;
pub use repetition::RepCode;
