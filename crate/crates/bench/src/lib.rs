//! Fixed benchmark instances.

use pdmarket_core::{Buyer, Market, UtilityFn};

/// `n` buyers over `g` goods with deterministic mixed concave utilities.
pub fn mixed_market(n: usize, g: usize) -> Market {
    let buyers = (0..n)
        .map(|i| {
            let w: Vec<f64> = (0..g).map(|j| 0.5 + ((i * 7 + j * 3) % 5) as f64 * 0.3).collect();
            let f = match i % 3 {
                0 => UtilityFn::linear(w),
                1 => {
                    let total: f64 = w.iter().sum();
                    UtilityFn::cobb_douglas(w.iter().map(|v| 0.8 * v / total).collect())
                }
                _ => UtilityFn::ces(w, 0.5),
            }
            .expect("valid parameters");
            Buyer::new(1.0 + (i % 4) as f64 * 0.25, f)
        })
        .collect();
    Market::new(g, buyers).expect("valid market")
}
