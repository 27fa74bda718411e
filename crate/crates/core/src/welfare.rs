//! Welfare theorems on a discretized utility-possibility set.
//!
//! `S` is approximated by the utility vectors of grid allocations; every
//! comparison against it carries a resolution slack `L * step`, where `L`
//! bounds how much a utility can change when an allocation is rounded to the
//! grid.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{Allocation, Buyer, Market};
use crate::oracle::{fold_grid, grid_optimize, GridSpec};
use crate::solver::{solve, SolveConfig};
use crate::utility::UtilityFn;

/// Upper bound on the number of grid allocations a welfare check enumerates.
pub const PARETO_GUARD: f64 = 1e8;
const LIPSCHITZ_SAMPLES: usize = 256;
const LIPSCHITZ_SEED: u64 = 0x5eed;
const SUBGRADIENT_ITERS: usize = 4000;
const REFINE_ROUNDS: usize = 60;
const REFINE_TOL: f64 = 1e-7;

/// Default smoothing of the counterexample utility.
pub const COUNTEREXAMPLE_DELTA: f64 = 0.01;
/// Step of the 1-D money-sweep search.
pub const SWEEP_STEP: f64 = 1e-4;
pub const SWEEP_POINTS: usize = 41;

fn grid_spec(m: &Market, step: f64) -> Result<GridSpec> {
    let spec = GridSpec::new(step)?;
    let points = spec.count(m.n_buyers(), m.goods());
    if points > PARETO_GUARD {
        return Err(Error::GuardExceeded {
            points,
            guard: PARETO_GUARD,
        });
    }
    Ok(spec)
}

/// Sampled bound on `||grad f_i||_1` over `[step, 1]^g`, max over buyers.
pub fn lipschitz_bound(m: &Market, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(LIPSCHITZ_SEED);
    let g = m.goods();
    let mut best = 0.0f64;
    for b in m.buyers() {
        for s in 0..LIPSCHITZ_SAMPLES {
            // include the corners of the box
            let y: Vec<f64> = match s {
                0 => vec![step; g],
                1 => vec![1.0; g],
                _ => (0..g).map(|_| rng.random_range(step..=1.0)).collect(),
            };
            if let Ok(d) = b.utility.partials(&y) {
                let norm: f64 = d.iter().map(|v| v.abs()).sum();
                if norm.is_finite() {
                    best = best.max(norm);
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoWitness {
    pub allocation: Allocation,
    pub utilities: Vec<f64>,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoReport {
    pub pareto_ok: bool,
    pub dominating_witness: Option<ParetoWitness>,
    pub slack: f64,
    pub step: f64,
}

/// Looks for a grid allocation whose utilities weakly dominate `u` with some
/// coordinate better by more than the resolution slack.
pub fn check_pareto(m: &Market, u: &[f64], step: f64) -> Result<ParetoReport> {
    let n = m.n_buyers();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    if u.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("utilities must be finite and >= 0".into()));
    }
    let spec = grid_spec(m, step)?;
    let slack = lipschitz_bound(m, step) * step;
    let g = m.goods();

    // per chunk: the first dominating point with the largest improvement
    let chunks = fold_grid(m, &spec, || None, |best: &mut Option<(f64, Vec<f64>)>, x| {
        let mut gain = f64::NEG_INFINITY;
        for (i, b) in m.buyers().iter().enumerate() {
            let v = b.utility.eval_unchecked(&x[i * g..(i + 1) * g]);
            let d = v - u[i];
            if !(d >= 0.0) {
                return;
            }
            gain = gain.max(d);
        }
        if gain > slack && best.as_ref().is_none_or(|b| gain > b.0) {
            *best = Some((gain, x.to_vec()));
        }
    });
    let witness = chunks
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .map(|(improvement, data)| {
            let allocation = Allocation::from_raw(n, g, data);
            let utilities = m.utilities(&allocation).expect("grid point is feasible");
            ParetoWitness {
                allocation,
                utilities,
                improvement,
            }
        });
    Ok(ParetoReport {
        pareto_ok: witness.is_none(),
        dominating_witness: witness,
        slack,
        step,
    })
}

/// Removes weakly dominated points (and duplicates).
pub fn pareto_filter(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let cmp = |a: &Vec<f64>, b: &Vec<f64>| {
        b.iter()
            .zip(a)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    // lexicographically descending: a point can only be dominated by an
    // earlier one
    pts.sort_by(cmp);
    pts.dedup();
    match pts.first().map(Vec::len) {
        None => pts,
        Some(1) => pts.into_iter().take(1).collect(),
        Some(2) => {
            let mut out = Vec::new();
            let mut top = f64::NEG_INFINITY;
            for p in pts {
                if p[1] > top {
                    top = p[1];
                    out.push(p);
                }
            }
            out
        }
        Some(3) => {
            // staircase over (u1, u2): as u1 grows, u2 falls
            let mut stair: BTreeMap<OrdF64, f64> = BTreeMap::new();
            let mut out = Vec::new();
            for p in pts {
                let dominated = stair
                    .range(OrdF64(p[1])..)
                    .next()
                    .is_some_and(|(_, &z)| z >= p[2]);
                if dominated {
                    continue;
                }
                let covered: Vec<OrdF64> = stair
                    .range(..=OrdF64(p[1]))
                    .filter(|(_, &z)| z <= p[2])
                    .map(|(k, _)| *k)
                    .collect();
                for k in covered {
                    stair.remove(&k);
                }
                stair.insert(OrdF64(p[1]), p[2]);
                out.push(p);
            }
            out
        }
        Some(_) => {
            let mut out: Vec<Vec<f64>> = Vec::new();
            for p in pts {
                if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| a >= b)) {
                    out.push(p);
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Pareto points accumulated with periodic compaction, so memory stays
/// proportional to the frontier rather than to the grid.
struct FrontierAcc {
    pts: Vec<Vec<f64>>,
    compact_at: usize,
}

impl FrontierAcc {
    fn new() -> Self {
        FrontierAcc {
            pts: Vec::new(),
            compact_at: 4096,
        }
    }

    fn push(&mut self, u: Vec<f64>) {
        self.pts.push(u);
        if self.pts.len() >= self.compact_at {
            self.pts = pareto_filter(std::mem::take(&mut self.pts));
            self.compact_at = (2 * self.pts.len()).max(4096);
        }
    }
}

/// Pareto frontier of the grid image of `S`.
pub fn grid_frontier(m: &Market, step: f64) -> Result<Vec<Vec<f64>>> {
    let spec = grid_spec(m, step)?;
    let (n, g) = (m.n_buyers(), m.goods());
    let chunks = fold_grid(m, &spec, FrontierAcc::new, |acc: &mut FrontierAcc, x| {
        let u: Vec<f64> = (0..n)
            .map(|i| m.buyer(i).utility.eval_unchecked(&x[i * g..(i + 1) * g]))
            .collect();
        if u.iter().all(|v| v.is_finite()) {
            acc.push(u);
        }
    });
    let merged: Vec<Vec<f64>> = chunks.into_iter().flat_map(|c| pareto_filter(c.pts)).collect();
    Ok(pareto_filter(merged))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareWeights {
    /// Supporting hyperplane normal, `a >= 0`, `sum a = 1`.
    pub a: Vec<f64>,
    /// `sum_i a_i u*_i`.
    pub c: f64,
    /// `sum_i m_i log u*_i` for the constructed moneys.
    pub c_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondWelfare {
    pub weights: WelfareWeights,
    pub moneys: Vec<f64>,
    /// `max_s a.(s - u*)` over the discretized set at the returned `a`.
    pub support_gap: f64,
    pub slack: f64,
    pub frontier_points: usize,
}

/// `max_s a.(s - u)` and a maximizing point.
fn support_gap(frontier: &[Vec<f64>], u: &[f64], a: &[f64]) -> (f64, usize) {
    frontier
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let v: f64 = s.iter().zip(u).zip(a).map(|((s, u), a)| a * (s - u)).sum();
            (v, k)
        })
        .fold((f64::NEG_INFINITY, 0), |acc, v| if v.0 > acc.0 { v } else { acc })
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Minimizes the support gap over the simplex by projected subgradient
/// descent with a diminishing step. Returns the best normal seen.
fn supporting_normal(frontier: &[Vec<f64>], u: &[f64]) -> (Vec<f64>, f64) {
    let n = u.len();
    let mut a = vec![1.0 / n as f64; n];
    let (mut best_gap, _) = support_gap(frontier, u, &a);
    let mut best = a.clone();
    let scale = frontier
        .iter()
        .flat_map(|s| s.iter().zip(u).map(|(s, u)| (s - u).abs()))
        .fold(0.0, f64::max)
        .max(1e-12);
    for k in 0..SUBGRADIENT_ITERS {
        let (gap, arg) = support_gap(frontier, u, &a);
        if gap < best_gap {
            best_gap = gap;
            best.clone_from(&a);
        }
        let sub: Vec<f64> = frontier[arg].iter().zip(u).map(|(s, u)| s - u).collect();
        let norm = sub.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let t = 0.5 / (scale * ((k + 1) as f64).sqrt());
        for (ai, si) in a.iter_mut().zip(&sub) {
            *ai -= t * si / norm * scale;
        }
        project_simplex(&mut a);
    }
    (best, best_gap)
}

/// Sharpens a grid normal: re-solve with `m_i = a_i u*_i`, then scale each
/// buyer's money by `u*_i / u_i`. Keeps the iterate whose equilibrium lands
/// closest to `u_star`.
fn refine_normal(m: &Market, u_star: &[f64], a0: Vec<f64>) -> Vec<f64> {
    let cfg = SolveConfig::default();
    let miss = |money: &[f64]| -> Option<(f64, Vec<f64>)> {
        let r = solve(&m.with_moneys(money).ok()?, &cfg).ok()?;
        let u = m.utilities(&r.x).ok()?;
        let d = u.iter().zip(u_star).map(|(u, t)| (u - t).abs()).fold(0.0, f64::max);
        Some((d, u))
    };
    let mut money: Vec<f64> = a0.iter().zip(u_star).map(|(a, u)| a * u).collect();
    let Some((mut best_d, mut u)) = miss(&money) else { return a0 };
    let mut best = money.clone();
    for _ in 0..REFINE_ROUNDS {
        if best_d <= REFINE_TOL {
            break;
        }
        for ((mi, t), ui) in money.iter_mut().zip(u_star).zip(&u) {
            *mi *= (t / ui.max(1e-12)).clamp(0.5, 2.0);
        }
        let total: f64 = money.iter().sum();
        money.iter_mut().for_each(|v| *v /= total);
        let Some((d, next)) = miss(&money) else { break };
        if d < best_d {
            best_d = d;
            best.clone_from(&money);
        }
        u = next;
    }
    let mut a: Vec<f64> = best.iter().zip(u_star).map(|(m, u)| m / u).collect();
    let total: f64 = a.iter().sum();
    a.iter_mut().for_each(|v| *v /= total);
    a
}

/// Moneys that make `u_star` an equilibrium: `m_i = a_i u*_i` for a normal
/// `a` of a hyperplane supporting `S` at `u_star`.
pub fn second_welfare_moneys(m: &Market, u_star: &[f64], step: f64) -> Result<SecondWelfare> {
    let pareto = check_pareto(m, u_star, step)?;
    if !pareto.pareto_ok {
        return Err(Error::NotParetoOptimal);
    }
    if u_star.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("target utilities must be > 0".into()));
    }
    let frontier = grid_frontier(m, step)?;
    let (a, gap) = supporting_normal(&frontier, u_star);
    if gap > pareto.slack {
        return Err(Error::NoSupportingHyperplane {
            violation: gap,
            slack: pareto.slack,
        });
    }
    if a.iter().any(|v| !(*v > 0.0)) {
        // a buyer with zero weight would get zero money
        return Err(Error::InvalidParameter(
            "supporting normal has a zero component; target lies on the boundary of S".into(),
        ));
    }
    let a = refine_normal(m, u_star, a);
    let (gap, _) = support_gap(&frontier, u_star, &a);
    if gap > pareto.slack {
        return Err(Error::NoSupportingHyperplane {
            violation: gap,
            slack: pareto.slack,
        });
    }
    let moneys: Vec<f64> = a.iter().zip(u_star).map(|(a, u)| a * u).collect();
    let c = a.iter().zip(u_star).map(|(a, u)| a * u).sum();
    let c_prime = moneys.iter().zip(u_star).map(|(m, u)| m * u.ln()).sum();
    Ok(SecondWelfare {
        weights: WelfareWeights { a, c, c_prime },
        moneys,
        support_gap: gap,
        slack: pareto.slack,
        frontier_points: frontier.len(),
    })
}

/// Maximizer of `sum_i w_i f_i(x_i)`: the best grid allocation, refined by
/// projected gradient ascent over the continuous polytope. Positive weights
/// make the result Pareto optimal.
pub fn weighted_pareto_point(m: &Market, w: &[f64], step: f64) -> Result<(Allocation, Vec<f64>)> {
    let (n, g) = (m.n_buyers(), m.goods());
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
        });
    }
    if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("weights must be > 0".into()));
    }
    let spec = grid_spec(m, step)?;
    let value = |x: &[f64]| -> f64 {
        (0..n)
            .map(|i| w[i] * m.buyer(i).utility.eval_unchecked(&x[i * g..(i + 1) * g]))
            .sum()
    };
    let chunks = fold_grid(m, &spec, || None, |best: &mut Option<(f64, Vec<f64>)>, x| {
        let v = value(x);
        if v.is_finite() && best.as_ref().is_none_or(|b| v > b.0) {
            *best = Some((v, x.to_vec()));
        }
    });
    let (mut val, mut x) = chunks
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .ok_or_else(|| Error::InvalidParameter("no finite grid point".into()))?;

    let grad = |x: &[f64]| -> Option<Vec<f64>> {
        let mut d = Vec::with_capacity(n * g);
        for i in 0..n {
            let p = m.buyer(i).utility.partials(&x[i * g..(i + 1) * g]).ok()?;
            d.extend(p.into_iter().map(|v| w[i] * v));
        }
        d.iter().all(|v| v.is_finite()).then_some(d)
    };
    let mut t = 1.0;
    let mut col = vec![0.0; n];
    for _ in 0..20_000 {
        let Some(d) = grad(&x) else { break };
        let mut moved = false;
        for _ in 0..60 {
            let mut y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            for j in 0..g {
                for i in 0..n {
                    col[i] = y[i * g + j];
                }
                crate::solver::project_capped_simplex(&mut col);
                for i in 0..n {
                    y[i * g + j] = col[i];
                }
            }
            let lin: f64 = y.iter().zip(&x).zip(&d).map(|((a, b), g)| g * (a - b)).sum();
            if lin <= 1e-15 * (1.0 + val.abs()) {
                break;
            }
            let v = value(&y);
            if v >= val + 1e-4 * lin {
                x = y;
                val = v;
                moved = true;
                t *= 2.0;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let alloc = Allocation::from_raw(n, g, x);
    let u = m.utilities(&alloc)?;
    Ok((alloc, u))
}

/// One good, two buyers with the same kinked quasiconcave utility and equal
/// money.
pub fn counterexample_market(a: f64, delta: f64) -> Result<Market> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::InvalidParameter(format!("a must lie in (0, 1/2), got {a}")));
    }
    let f = UtilityFn::pwl_quasi(a, delta, vec![1.0])?;
    Market::new(1, vec![Buyer::new(1.0, f.clone()), Buyer::new(1.0, f)])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub money_ratio: f64,
    pub utilities: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub a: f64,
    pub delta: f64,
    pub u_star: Vec<f64>,
    /// `(f(1/2), f(1/2))`, the equal split on the smoothed frontier.
    pub frontier_point: Vec<f64>,
    pub frontier_offset: f64,
    pub frontier_pareto_ok: bool,
    pub equal_money_utilities: Vec<f64>,
    pub asymmetry: f64,
    pub best_equilibrium_gap: f64,
    pub sweep: Vec<SweepPoint>,
}

/// Equilibrium utilities of the counterexample market at moneys `(m1, 1)`
/// by 1-D grid search.
fn sweep_point(base: &Market, ratio: f64, u_star: &[f64]) -> Result<SweepPoint> {
    let m = base.with_moneys(&[ratio, 1.0])?;
    let best = grid_optimize(&m, &GridSpec::saturating(SWEEP_STEP)?)?;
    let utilities = m.utilities(&best.allocation)?;
    let distance = utilities
        .iter()
        .zip(u_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(SweepPoint {
        money_ratio: ratio,
        utilities,
        distance,
    })
}

/// Shows that the symmetric Pareto point `(a, a)` is not an equilibrium for
/// any money split.
pub fn demonstrate_second_welfare_failure(a: f64, delta: f64) -> Result<CounterexampleReport> {
    let m = counterexample_market(a, delta)?;
    let u_star = vec![a, a];
    let half = m.buyer(0).utility.eval(&[0.5])?;
    let frontier_point = vec![half, half];
    let frontier_pareto_ok = check_pareto(&m, &frontier_point, 1e-3)?.pareto_ok;

    let sweep = (0..SWEEP_POINTS)
        .map(|k| {
            let e = -2.0 + 4.0 * k as f64 / (SWEEP_POINTS - 1) as f64;
            sweep_point(&m, 10f64.powf(e), &u_star)
        })
        .collect::<Result<Vec<_>>>()?;
    let best_equilibrium_gap = sweep.iter().map(|p| p.distance).fold(f64::INFINITY, f64::min);
    let equal = sweep_point(&m, 1.0, &u_star)?;
    Ok(CounterexampleReport {
        a,
        delta,
        u_star,
        frontier_offset: half - a,
        frontier_point,
        frontier_pareto_ok,
        asymmetry: (equal.utilities[0] - equal.utilities[1]).abs(),
        equal_money_utilities: equal.utilities,
        best_equilibrium_gap,
        sweep,
    })
}
