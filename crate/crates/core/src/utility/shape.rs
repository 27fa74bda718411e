//! Sampling probes for concavity, quasiconcavity and non-satiation.
//!
//! A `false` flag comes with a concrete witness; a `true` flag only means no
//! violation was found among the samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::UtilityFn;
use crate::error::{Error, Result};

pub const SHAPE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairWitness {
    pub y: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub lambda: f64,
    /// Amount by which the inequality is violated.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeReport {
    pub concave: bool,
    pub quasiconcave: bool,
    pub nonsatiated: bool,
    pub concavity_witness: Option<PairWitness>,
    pub quasiconcavity_witness: Option<PairWitness>,
    pub satiation_witness: Option<Vec<f64>>,
    pub samples: usize,
}

fn mix(y: &[f64], yp: &[f64], lambda: f64) -> Vec<f64> {
    y.iter()
        .zip(yp)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect()
}

/// Tests `samples` random pairs drawn from `[0, upper]^g`.
pub fn probe_shape(f: &UtilityFn, upper: f64, samples: usize, seed: u64) -> Result<ShapeReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    if !(upper > 0.0 && upper.is_finite()) {
        return Err(Error::InvalidParameter("box bound must be > 0".into()));
    }
    let g = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..g).map(|_| rng.random_range(0.0..=upper)).collect()
    };

    let mut report = ShapeReport {
        concave: true,
        quasiconcave: true,
        nonsatiated: true,
        concavity_witness: None,
        quasiconcavity_witness: None,
        satiation_witness: None,
        samples,
    };
    let step = 1e-3 * upper;

    for _ in 0..samples {
        let y = draw(&mut rng);
        let yp = draw(&mut rng);
        let lambda: f64 = rng.random_range(0.0..1.0);
        let fy = f.eval(&y)?;
        let fyp = f.eval(&yp)?;

        let mid = f.eval(&mix(&y, &yp, 0.5))?;
        let gap = 0.5 * (fy + fyp) - mid;
        if gap > SHAPE_SLACK {
            report.concave = false;
            let worse = report
                .concavity_witness
                .as_ref()
                .is_none_or(|w| gap > w.gap);
            if worse {
                report.concavity_witness = Some(PairWitness {
                    y: y.clone(),
                    y_prime: yp.clone(),
                    lambda: 0.5,
                    gap,
                });
            }
        }

        for l in [lambda, 0.5] {
            let v = f.eval(&mix(&y, &yp, l))?;
            let gap = fy.min(fyp) - v;
            if gap > SHAPE_SLACK {
                report.quasiconcave = false;
                let worse = report
                    .quasiconcavity_witness
                    .as_ref()
                    .is_none_or(|w| gap > w.gap);
                if worse {
                    report.quasiconcavity_witness = Some(PairWitness {
                        y: y.clone(),
                        y_prime: yp.clone(),
                        lambda: l,
                        gap,
                    });
                }
            }
        }

        if report.nonsatiated {
            // coordinate directions, then the all-goods direction
            let mut improves = false;
            for j in 0..g {
                if y[j] >= upper {
                    continue;
                }
                let mut z = y.clone();
                z[j] = (z[j] + step).min(upper);
                if f.eval(&z)? > fy {
                    improves = true;
                    break;
                }
            }
            if !improves {
                let z: Vec<f64> = y.iter().map(|v| (v + step).min(upper)).collect();
                improves = f.eval(&z)? > fy;
            }
            if !improves {
                report.nonsatiated = false;
                report.satiation_witness = Some(y.clone());
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_passes_everything() {
        let f = UtilityFn::linear(vec![1.0, 1.0]).unwrap();
        let r = probe_shape(&f, 2.0, 1000, 7).unwrap();
        assert!(r.concave && r.quasiconcave && r.nonsatiated);
        assert!(r.concavity_witness.is_none());
    }

    #[test]
    fn cobb_douglas_passes() {
        let f = UtilityFn::cobb_douglas(vec![0.5, 0.5]).unwrap();
        let r = probe_shape(&f, 2.0, 1000, 7).unwrap();
        assert!(r.concave && r.quasiconcave && r.nonsatiated);
    }

    #[test]
    fn pwl_quasi_is_quasiconcave_not_concave() {
        let f = UtilityFn::pwl_quasi(0.25, 0.0, vec![1.0]).unwrap();
        let r = probe_shape(&f, 1.0, 1000, 7).unwrap();
        assert!(!r.concave);
        assert!(r.quasiconcave);
        let w = r.concavity_witness.unwrap();
        let mid = f.eval(&mix(&w.y, &w.y_prime, 0.5)).unwrap();
        let avg = 0.5 * (f.eval(&w.y).unwrap() + f.eval(&w.y_prime).unwrap());
        assert!(mid < avg - SHAPE_SLACK);
    }

    #[test]
    fn satiated_expression_is_flagged() {
        // decreasing in its only good
        let f = UtilityFn::expr("exp(0 - x1)", 1);
        // the grammar has no unary minus, "0 - x1" is the spelling
        let f = f.unwrap();
        let r = probe_shape(&f, 1.0, 50, 1).unwrap();
        assert!(!r.nonsatiated);
        assert!(r.satiation_witness.is_some());
    }

    #[test]
    fn convex_expression_fails_quasiconcavity() {
        let f = UtilityFn::expr("(x1 - 1)^2", 1).unwrap();
        let r = probe_shape(&f, 2.0, 500, 3).unwrap();
        assert!(!r.quasiconcave);
    }

    #[test]
    fn rejects_bad_arguments() {
        let f = UtilityFn::linear(vec![1.0]).unwrap();
        assert!(probe_shape(&f, 1.0, 0, 0).is_err());
        assert!(probe_shape(&f, 0.0, 10, 0).is_err());
    }
}
