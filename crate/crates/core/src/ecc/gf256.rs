//! GF(2^8) with primitive polynomial `x^8 + x^4 + x^3 + x^2 + 1` (0x11d).

use std::ops::{Add, Mul};

pub const PRIMITIVE_POLY: u16 = 0x11d;

const fn build_tables() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        exp[i + 255] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= PRIMITIVE_POLY;
        }
        i += 1;
    }
    exp[510] = exp[0];
    exp[511] = exp[1];
    (exp, log)
}

const TABLES: ([u8; 512], [u8; 256]) = build_tables();
static EXP: [u8; 512] = TABLES.0;
static LOG: [u8; 256] = TABLES.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0);
    pub const ONE: Gf256 = Gf256(1);

    /// `alpha^i` for any `i` (reduced mod 255).
    #[inline]
    pub fn alpha_pow(i: usize) -> Gf256 {
        Gf256(EXP[i % 255])
    }

    /// Discrete log base alpha; `None` for zero.
    #[inline]
    pub fn log(self) -> Option<usize> {
        (self.0 != 0).then(|| LOG[self.0 as usize] as usize)
    }

    pub fn inv(self) -> Option<Gf256> {
        self.log().map(|l| Gf256(EXP[(255 - l) % 255]))
    }

    pub fn pow(self, e: usize) -> Gf256 {
        match self.log() {
            None if e == 0 => Gf256::ONE,
            None => Gf256::ZERO,
            Some(l) => Gf256(EXP[(l * e) % 255]),
        }
    }
}

impl Add for Gf256 {
    type Output = Gf256;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl Mul for Gf256 {
    type Output = Gf256;
    #[inline]
    fn mul(self, rhs: Gf256) -> Gf256 {
        if self.0 == 0 || rhs.0 == 0 {
            return Gf256::ZERO;
        }
        Gf256(EXP[LOG[self.0 as usize] as usize + LOG[rhs.0 as usize] as usize])
    }
}
