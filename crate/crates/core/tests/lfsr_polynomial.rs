//! The production feedback polynomial is primitive: `x` has multiplicative
//! order exactly `2^256 − 1` in `GF(2)[x] / p(x)`.

use lattice_puf::lfsr::PUF_POLYNOMIAL;
use num_bigint::BigUint;

/// Published factorization of `2^256 − 1`.
const FACTORS: [&str; 11] = [
    "3",
    "5",
    "17",
    "257",
    "641",
    "65537",
    "274177",
    "6700417",
    "67280421310721",
    "59649589127497217",
    "5704689200685129054721",
];

/// Polynomials over GF(2) as little-endian bit vectors of u64 words.
#[derive(Clone, PartialEq, Eq, Debug)]
struct Poly(Vec<u64>);

impl Poly {
    fn degree(&self) -> Option<usize> {
        self.0
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * 64 + 63 - w.leading_zeros() as usize)
    }

    fn bit(&self, i: usize) -> bool {
        self.0.get(i / 64).is_some_and(|w| (w >> (i % 64)) & 1 == 1)
    }

    fn flip(&mut self, i: usize) {
        if self.0.len() <= i / 64 {
            self.0.resize(i / 64 + 1, 0);
        }
        self.0[i / 64] ^= 1 << (i % 64);
    }

    fn mul_mod(&self, other: &Poly, modulus: &Poly) -> Poly {
        let mut prod = Poly(vec![0; self.0.len() + other.0.len()]);
        for i in 0..self.0.len() * 64 {
            if !self.bit(i) {
                continue;
            }
            for j in 0..other.0.len() * 64 {
                if other.bit(j) {
                    prod.flip(i + j);
                }
            }
        }
        prod.reduce(modulus)
    }

    fn reduce(mut self, modulus: &Poly) -> Poly {
        let dm = modulus.degree().expect("nonzero modulus");
        while let Some(d) = self.degree() {
            if d < dm {
                break;
            }
            for k in 0..=dm {
                if modulus.bit(k) {
                    self.flip(k + d - dm);
                }
            }
        }
        self.0.truncate(dm.div_ceil(64).max(1));
        self
    }

    fn pow_mod(&self, e: &BigUint, modulus: &Poly) -> Poly {
        let mut result = Poly(vec![1]);
        for i in (0..e.bits()).rev() {
            result = result.mul_mod(&result, modulus);
            if e.bit(i) {
                result = result.mul_mod(self, modulus);
            }
        }
        result
    }

    fn is_one(&self) -> bool {
        self.degree() == Some(0)
    }
}

/// Deterministic for `n < 3.3·10^24` with the first 13 prime bases.
fn is_prime(n: &BigUint) -> bool {
    let one = BigUint::from(1u32);
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    let bases = [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];
    for &b in &bases {
        if *n == BigUint::from(b) {
            return true;
        }
        if (n % b) == BigUint::ZERO {
            return false;
        }
    }
    let n1 = n - &one;
    let r = n1.trailing_zeros().expect("n > 1");
    let d = &n1 >> r;
    'witness: for &b in &bases {
        let mut x = BigUint::from(b).modpow(&d, n);
        if x == one || x == n1 {
            continue;
        }
        for _ in 1..r {
            x = x.modpow(&two, n);
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn characteristic_polynomial() -> Poly {
    // s[k+L] = XOR_t s[k+L−t]  ⇔  x^L + Σ_t x^(L−t)
    let l = PUF_POLYNOMIAL.degree();
    let mut p = Poly(vec![0; l / 64 + 1]);
    p.flip(l);
    for &t in PUF_POLYNOMIAL.taps() {
        p.flip(l - t);
    }
    p
}

#[test]
fn factorization_is_complete_and_prime() {
    let order = (BigUint::from(1u32) << 256) - 1u32;
    let product = FACTORS
        .iter()
        .map(|f| f.parse::<BigUint>().unwrap())
        .fold(BigUint::from(1u32), |acc, f| acc * f);
    assert_eq!(product, order);
    for f in FACTORS {
        assert!(is_prime(&f.parse().unwrap()), "{f} is not prime");
    }
}

#[test]
fn characteristic_polynomial_has_the_documented_form() {
    let p = characteristic_polynomial();
    let ones: Vec<usize> = (0..=256).filter(|&i| p.bit(i)).collect();
    assert_eq!(ones, vec![0, 2, 5, 10, 256]);
}

#[test]
fn x_has_full_order() {
    let p = characteristic_polynomial();
    let x = Poly(vec![2]);
    let order = (BigUint::from(1u32) << 256) - 1u32;
    assert!(x.pow_mod(&order, &p).is_one());
    for f in FACTORS {
        let f: BigUint = f.parse().unwrap();
        assert!(!x.pow_mod(&(&order / &f), &p).is_one(), "order divides (2^256-1)/{f}");
    }
}

#[test]
fn reducible_polynomials_fail_the_check() {
    // x^256 + 1 = (x + 1)^256 is far from primitive
    let mut p = Poly(vec![0; 5]);
    p.flip(256);
    p.flip(0);
    let order = (BigUint::from(1u32) << 256) - 1u32;
    assert!(!Poly(vec![2]).pow_mod(&order, &p).is_one());
}
