//! Monte Carlo decryption error at the default parameters against an exact
//! distribution of the accumulated noise, and the gap to the closed form.

use lattice_puf::lwe::{decryption_error_rate, quantize, LweParams, NoiseVector};
use lattice_puf::zq::{sample_uniform_bits, RngHandle};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// Cyclic convolution of two pmfs on `Z_q`.
fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let q = a.len();
    let mut out = vec![0.0; q];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[(i + j) % q] += x * y;
        }
    }
    out
}

/// `P[error]` when every CRP sees fresh noise: the pmf of `Σ x_i e_i mod q`
/// with `x_i` fair bits and `e_i` the rounded Gaussian, then the mass that
/// lands in the wrong quantizer half for either plaintext bit.
fn exact_error(params: &LweParams) -> f64 {
    let q = params.q() as usize;
    let sigma = params.alpha() * q as f64 / (2.0 * std::f64::consts::PI).sqrt();
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut term = vec![0.0; q];
    term[0] += 0.5;
    for k in -(q as i64)..=(q as i64) {
        let p = normal.cdf(k as f64 + 0.5) - normal.cdf(k as f64 - 0.5);
        term[k.rem_euclid(q as i64) as usize] += 0.5 * p;
    }
    // m = 2^j: square j times
    let mut m = params.m();
    assert!(m.is_power_of_two());
    let mut pmf = term;
    while m > 1 {
        pmf = convolve(&pmf, &pmf);
        m /= 2;
    }
    // r = 0 errs iff the sum is in (q/4, 3q/4]; r = 1 shifts by q/2 and
    // errs on the same set
    pmf[q / 4 + 1..=3 * q / 4].iter().sum()
}

fn monte_carlo(params: &LweParams, samples: usize, seed: u64) -> f64 {
    let q = params.modulus();
    let chunks = 100;
    let wrong: usize = (0..chunks as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngHandle::derive(seed, c);
            (0..samples / chunks)
                .filter(|_| {
                    let e = NoiseVector::sample(params, &mut rng);
                    let x = sample_uniform_bits(params.m(), &mut rng);
                    let r: bool = rng.random();
                    let mut v = e.masked_sum(&x, q);
                    if r {
                        v = q.add(v, q.reduce(params.q() / 2));
                    }
                    quantize(v, q) != r
                })
                .count()
        })
        .sum();
    wrong as f64 / samples as f64
}

#[test]
fn closed_form_is_the_continuous_tail_beyond_q_over_4() {
    // variance (m/2)·σ², no rounding term
    let params = LweParams::default();
    let sigma = 0.022 * 256.0 / (2.0 * std::f64::consts::PI).sqrt();
    let sd = (128.0f64 * sigma * sigma).sqrt();
    let tail = 2.0 * (1.0 - Normal::new(0.0, 1.0).unwrap().cdf(64.0 / sd));
    assert!((tail - decryption_error_rate(0.022, 256)).abs() < 1e-12);
    assert!(exact_error(&params) > tail);
}

#[test]
fn monte_carlo_matches_the_exact_noise_distribution() {
    let params = LweParams::default();
    let exact = exact_error(&params);
    let n = 1_000_000;
    let mc = monte_carlo(&params, n, 11);
    let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((mc - exact).abs() <= 3.0 * sigma, "mc {mc} exact {exact} sigma {sigma}");
}

#[test]
fn closed_form_underestimates_by_a_bounded_margin() {
    let params = LweParams::default();
    let exact = exact_error(&params);
    let analytic = decryption_error_rate(0.022, 256);
    assert!((analytic - 0.0118).abs() < 5e-5);
    println!("analytic {analytic:.6} exact {exact:.6}");
    assert!(
        analytic < exact && (exact - analytic) / exact < 0.1,
        "analytic {analytic} exact {exact}"
    );
}

#[test]
fn halved_alpha_is_negligible_in_both_models() {
    let params = LweParams::default().with_alpha(0.011).unwrap();
    let exact = exact_error(&params);
    let analytic = decryption_error_rate(0.011, 256);
    assert!((analytic - 4.8e-7).abs() < 0.1e-7);
    assert!(exact < 1e-5, "{exact}");
}
