//! Buyer rates at fixed prices, computed without the solver.
//!
//! For a rate `r` the maximal allocations feasible at that rate are the
//! stationary points of `f(y) - r p.y`; `U(r)` is the best utility among them
//! and `r*` is the largest rate with `U(r) >= m r`. Sups are taken over a box
//! `[0, Y_max]^g` since homogeneous utilities have unbounded ray solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::PriceVector;
use crate::utility::UtilityFn;

pub const DEFAULT_NO_LOSS_SAMPLES: usize = 500;
/// Coordinates this close to `Y_max` count as hitting the box.
pub const CAP_SLACK: f64 = 1e-6;
pub const RATE_MIN: f64 = 1e-9;
pub const RATE_MAX: f64 = 1e9;
/// Bisection stops once the bracket is narrower than this times `r_hi`.
pub const RATE_REL_WIDTH: f64 = 1e-8;

/// Lower end of the search box; partials of Cobb-Douglas style utilities
/// diverge at zero, so the ascent stays just above it.
const FLOOR: f64 = 1e-12;
/// Coordinates this close to the floor count as pinned there.
const PINNED: f64 = 1e-9;
const MAX_ITERS: usize = 20_000;
const STATIONARY_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct RateProblem {
    pub f: UtilityFn,
    pub p: PriceVector,
    pub m: f64,
    pub box_cap: f64,
}

impl RateProblem {
    /// Uses the default box `Y_max = 10 g`.
    pub fn new(f: UtilityFn, p: PriceVector, m: f64) -> Result<Self> {
        let cap = 10.0 * f.dim() as f64;
        Self::with_box_cap(f, p, m, cap)
    }

    pub fn with_box_cap(f: UtilityFn, p: PriceVector, m: f64, box_cap: f64) -> Result<Self> {
        if p.len() != f.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got: p.len(),
            });
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !p.iter().any(|v| *v > 0.0) {
            return Err(Error::InvalidParameter(
                "prices must be finite, >= 0 and not all zero".into(),
            ));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!("money must be > 0, got {m}")));
        }
        if !(box_cap >= 1.0 && box_cap.is_finite()) {
            return Err(Error::InvalidParameter(format!("box cap must be >= 1, got {box_cap}")));
        }
        Ok(RateProblem { f, p, m, box_cap })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCurvePoint {
    pub r: f64,
    #[serde(rename = "U")]
    pub u: f64,
    /// The sup was cut off by the box: some good with positive marginal
    /// utility sits at `Y_max`.
    pub capped: bool,
    pub y_witness: Vec<f64>,
}

/// Gradient of `f(y) - r p.y`.
fn surplus_grad(prob: &RateProblem, r: f64, y: &[f64]) -> Result<Vec<f64>> {
    let d = prob.f.partials(y)?;
    d.iter()
        .zip(prob.p.iter())
        .enumerate()
        .map(|(j, (d, p))| {
            let v = d - r * p;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::GradientDiverges {
                    point: y.to_vec(),
                    coord: j,
                })
            }
        })
        .collect()
}

fn surplus(prob: &RateProblem, r: f64, y: &[f64]) -> Result<f64> {
    let cost: f64 = y.iter().zip(prob.p.iter()).map(|(a, b)| a * b).sum();
    Ok(prob.f.eval(y)? - r * cost)
}

/// `U(r)` with a witness from `S(r)`.
///
/// Ascends `f(y) - r p.y` from the top corner of the box, so among a ray or
/// face of maximizers it stops at the largest one.
pub fn u_of_r(prob: &RateProblem, r: f64) -> Result<RateCurvePoint> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("rate must be > 0, got {r}")));
    }
    let cap = prob.box_cap;
    let g = prob.f.dim();
    let clamp = |v: f64| v.clamp(FLOOR, cap);

    let mut y = vec![cap; g];
    let mut val = surplus(prob, r, &y)?;
    let mut grad = surplus_grad(prob, r, &y)?;
    let mut step: f64 = 1.0;
    let mut free_step: f64 = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;

    for _ in 0..MAX_ITERS {
        let moved = y
            .iter()
            .zip(&grad)
            .map(|(a, d)| (clamp(a + d) - a).abs())
            .fold(0.0, f64::max);
        if moved <= STATIONARY_TOL * (1.0 + cap) {
            break;
        }
        let t = match &prev {
            Some((py, pg)) => {
                let (mut ss, mut sy) = (0.0, 0.0);
                // coordinates pinned at the floor carry no curvature
                // information for the free ones
                for k in (0..g).filter(|&k| y[k] > PINNED || py[k] > PINNED) {
                    let s = y[k] - py[k];
                    ss += s * s;
                    sy += s * (grad[k] - pg[k]);
                }
                if sy < 0.0 && ss > 0.0 {
                    (ss / -sy).clamp(1e-12, 1e12)
                } else {
                    (2.0 * step).min(1e12)
                }
            }
            None => 1.0,
        };
        let search = |mut t: f64, dir: &[f64]| -> Option<(f64, Vec<f64>, f64, Vec<f64>)> {
            for _ in 0..80 {
                let z: Vec<f64> = y.iter().zip(dir).map(|(a, d)| clamp(a + t * d)).collect();
                let lin: f64 = z.iter().zip(&y).zip(&grad).map(|((a, b), d)| d * (a - b)).sum();
                if lin <= 0.0 {
                    return None;
                }
                if let Ok(v) = surplus(prob, r, &z) {
                    if v >= val + 1e-4 * lin || (v >= val && v - val <= 64.0 * f64::EPSILON * (1.0 + v.abs())) {
                        if let Ok(dz) = surplus_grad(prob, r, &z) {
                            return Some((t, z, v, dz));
                        }
                    }
                }
                t *= 0.5;
            }
            None
        };
        let full = search(t, &grad);
        // Near the floor a kink (e.g. sqrt(y1 y2) at 0) can make every full
        // step tiny; a step that leaves the pinned coordinates alone keeps
        // the rest moving.
        let free: Vec<f64> = y
            .iter()
            .zip(&grad)
            .map(|(v, d)| if *v <= PINNED { 0.0 } else { *d })
            .collect();
        let free = if free != grad && free.iter().any(|d| *d != 0.0) {
            search(free_step, &free)
        } else {
            None
        };
        let best = match (full, free) {
            (Some(a), Some(b)) if b.2 > a.2 => {
                free_step = (2.0 * b.0).min(1e12);
                Some(b)
            }
            (Some(a), _) => Some(a),
            (None, Some(b)) => {
                free_step = (2.0 * b.0).min(1e12);
                Some(b)
            }
            (None, None) => None,
        };
        match best {
            Some((t, z, v, dz)) => {
                step = t;
                prev = Some((std::mem::replace(&mut y, z), std::mem::replace(&mut grad, dz)));
                val = v;
            }
            None => break,
        }
    }

    let d = prob.f.partials(&y)?;
    let capped = y
        .iter()
        .zip(&d)
        .any(|(v, d)| *v >= cap - CAP_SLACK && *d > 0.0);
    for v in y.iter_mut() {
        if *v <= 2.0 * FLOOR {
            *v = 0.0;
        }
    }
    let u = prob.f.eval(&y)?;
    Ok(RateCurvePoint {
        r,
        u,
        capped,
        y_witness: y,
    })
}

/// `U(r) >= m r`, with capped values counting as `+inf`.
fn affordable(prob: &RateProblem, r: f64) -> Result<bool> {
    let pt = u_of_r(prob, r)?;
    Ok(pt.capped || pt.u >= prob.m * r)
}

/// The buyer's optimal rate `r* = max { r : U(r) >= m r }` by bisection.
pub fn r_star(prob: &RateProblem) -> Result<f64> {
    let (mut lo, mut hi);
    if affordable(prob, 1.0)? {
        lo = 1.0;
        hi = 2.0;
        while affordable(prob, hi)? {
            lo = hi;
            hi *= 2.0;
            if hi > RATE_MAX {
                return Err(Error::NoBracket { lo: RATE_MIN, hi: RATE_MAX });
            }
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while !affordable(prob, lo)? {
            hi = lo;
            lo *= 0.5;
            if lo < RATE_MIN {
                return Err(Error::NoBracket { lo: RATE_MIN, hi: RATE_MAX });
            }
        }
    }
    while hi - lo > RATE_REL_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        if affordable(prob, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoLossWitness {
    pub y_prime: Vec<f64>,
    pub good: usize,
    /// `(df/dy_j)(y') / r - p_j`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoLossReport {
    /// The condition holds at `y` itself.
    pub pointwise_ok: bool,
    pub pointwise_margin: f64,
    /// The condition holds at every sampled `y' <= y`.
    pub universal_ok: bool,
    /// `min` over samples and held goods of `(df/dy_j)(y') / r - p_j`.
    pub worst_margin: f64,
    /// The same in utility units, `r * worst_margin = df/dy_j - r p_j`.
    pub worst_utility_margin: f64,
    pub witness: Option<NoLossWitness>,
    pub samples: usize,
    /// Samples dropped because the gradient is undefined there.
    pub skipped: usize,
}

/// Margins down to this (price units) count as equality.
pub const NO_LOSS_SLACK: f64 = 1e-6;

/// `min_j (df/dy_j)(at) / r - p_j` over goods with `held[j]`, and its argmin.
/// Returns `+inf` when nothing is held.
pub fn no_loss_margin_at(prob: &RateProblem, at: &[f64], held: &[bool], r: f64) -> Result<(f64, usize)> {
    let d = prob.f.grad(at)?;
    Ok(d.iter()
        .zip(prob.p.iter())
        .enumerate()
        .filter(|(j, _)| held[*j])
        .map(|(j, (d, p))| (d / r - p, j))
        .fold((f64::INFINITY, 0), |acc, v| if v.0 < acc.0 { v } else { acc }))
}

/// Checks the no-loss condition at `y` and at `samples` points drawn
/// uniformly from the box `[0, y]`.
///
/// Only goods actually allocated (`y_j > 0`) can be sold at a loss; an
/// unallocated good may well be a worse deal than the rate.
pub fn check_no_loss(
    prob: &RateProblem,
    y: &[f64],
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<NoLossReport> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("rate must be > 0, got {r}")));
    }
    if y.len() != prob.f.dim() {
        return Err(Error::DimensionMismatch {
            expected: prob.f.dim(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("allocation must be finite and >= 0".into()));
    }
    let held: Vec<bool> = y.iter().map(|v| *v > 0.0).collect();
    let (pointwise_margin, pointwise_good) = no_loss_margin_at(prob, y, &held, r)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = pointwise_margin;
    let mut witness = (pointwise_margin < -NO_LOSS_SLACK).then(|| NoLossWitness {
        y_prime: y.to_vec(),
        good: pointwise_good,
        margin: pointwise_margin,
    });
    let mut skipped = 0;
    for _ in 0..samples {
        let yp: Vec<f64> = y.iter().map(|&v| rng.random_range(0.0..=v)).collect();
        match no_loss_margin_at(prob, &yp, &held, r) {
            Ok((margin, j)) if margin < worst => {
                worst = margin;
                if margin < -NO_LOSS_SLACK {
                    witness = Some(NoLossWitness {
                        y_prime: yp,
                        good: j,
                        margin,
                    });
                }
            }
            Ok(_) => {}
            Err(_) => skipped += 1,
        }
    }
    Ok(NoLossReport {
        pointwise_ok: pointwise_margin >= -NO_LOSS_SLACK,
        pointwise_margin,
        universal_ok: worst >= -NO_LOSS_SLACK,
        worst_margin: worst,
        worst_utility_margin: r * worst,
        witness,
        samples,
        skipped,
    })
}
