//! Random market generators shared by the integration suites.
#![allow(dead_code)]

use pdmarket_core::{Buyer, Market, UtilityFn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn coeffs(rng: &mut ChaCha8Rng, g: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..g).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_linear(rng: &mut ChaCha8Rng, g: usize) -> UtilityFn {
    UtilityFn::linear(coeffs(rng, g, 0.2, 2.0)).unwrap()
}

pub fn random_cobb_douglas(rng: &mut ChaCha8Rng, g: usize) -> UtilityFn {
    let w = coeffs(rng, g, 0.2, 1.0);
    let total: f64 = w.iter().sum();
    let degree = rng.random_range(0.5..1.0);
    UtilityFn::cobb_douglas(w.iter().map(|v| degree * v / total).collect()).unwrap()
}

pub fn random_ces(rng: &mut ChaCha8Rng, g: usize) -> UtilityFn {
    let rho = [-2.0, -0.5, 0.3, 0.6][rng.random_range(0..4)];
    UtilityFn::ces(coeffs(rng, g, 0.5, 2.0), rho).unwrap()
}

/// Concave, nondecreasing expression utilities.
pub fn random_expr(rng: &mut ChaCha8Rng, g: usize) -> UtilityFn {
    let c = coeffs(rng, g, 0.3, 2.0);
    let vars: Vec<String> = (1..=g).map(|j| format!("x{j}")).collect();
    let src = match rng.random_range(0..3) {
        0 => c
            .iter()
            .zip(&vars)
            .map(|(c, v)| format!("{c} * ({v} + 0.1)^0.5"))
            .collect::<Vec<_>>()
            .join(" + "),
        1 => {
            let inner: Vec<String> = c.iter().zip(&vars).map(|(c, v)| format!("{c} * {v}")).collect();
            format!("log(1 + {})", inner.join(" + "))
        }
        _ => {
            let lin: Vec<String> = c.iter().zip(&vars).map(|(c, v)| format!("{c} * {v}")).collect();
            if g >= 2 {
                format!("{} + (x1 * x2)^0.5", lin.join(" + "))
            } else {
                lin.join(" + ")
            }
        }
    };
    UtilityFn::expr(&src, g).unwrap()
}

pub fn random_money(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.5..2.0)
}

pub fn random_linear_market(rng: &mut ChaCha8Rng, n: usize, g: usize) -> Market {
    let buyers = (0..n)
        .map(|_| Buyer::new(random_money(rng), random_linear(rng, g)))
        .collect();
    Market::new(g, buyers).unwrap()
}

/// Mixed concave market drawing each buyer's family at random.
pub fn random_concave_market(rng: &mut ChaCha8Rng, n: usize, g: usize) -> Market {
    let buyers = (0..n)
        .map(|_| {
            let f = match rng.random_range(0..4) {
                0 => random_linear(rng, g),
                1 => random_cobb_douglas(rng, g),
                2 => random_ces(rng, g),
                _ => random_expr(rng, g),
            };
            Buyer::new(random_money(rng), f)
        })
        .collect();
    Market::new(g, buyers).unwrap()
}

pub fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> (usize, usize) {
    (rng.random_range(1..=max), rng.random_range(1..=max))
}
