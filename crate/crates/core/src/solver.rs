//! Log-utility welfare maximization and dual price recovery.
//!
//! Maximizes `sum_i m_i log f_i(x_i)` over `{x >= 0, sum_i x_ij <= 1}` by
//! projected gradient ascent with an Armijo backtracking line search, then
//! reads prices off the KKT stationarity conditions. Concave utilities use a
//! single ascent from a fixed interior point; quasiconcave utilities run a
//! seeded multistart and keep the best local optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{verify_equilibrium, Allocation, Market, PriceVector};

/// Utilities below this are treated as zero (log = -inf).
pub const UTILITY_FLOOR: f64 = 1e-12;
pub const ARMIJO_C: f64 = 1e-4;
pub const BACKTRACK: f64 = 0.5;
pub const MAX_BACKTRACKS: usize = 60;
pub const INITIAL_STEP: f64 = 1.0;
/// Largest trial step after warm-starting from the previous accepted one.
pub const MAX_STEP: f64 = 1e8;
pub const MIN_STEP: f64 = 1e-10;
/// Window over which objective stagnation is measured.
pub const STAGNATION_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityCase {
    Concave,
    Quasiconcave,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveConfig {
    pub tol_obj: f64,
    pub tol_kkt: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub starts: usize,
    pub case: UtilityCase,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol_obj: 1e-10,
            tol_kkt: 1e-6,
            max_iters: 10_000,
            seed: 42,
            starts: 32,
            case: UtilityCase::Concave,
        }
    }
}

impl SolveConfig {
    pub fn quasiconcave() -> Self {
        SolveConfig {
            case: UtilityCase::Quasiconcave,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol_obj > 0.0 && self.tol_kkt > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be > 0".into()));
        }
        if self.starts == 0 {
            return Err(Error::InvalidParameter("starts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Maximum violation of each KKT condition:
/// 1. `p_j >= 0`;
/// 2. `p_j > 0` implies good `j` is sold out;
/// 3. `p_j >= (m_i / f_i) df_i/dx_ij`;
/// 4. `x_ij > 0` implies equality in 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.c1.max(self.c2).max(self.c3).max(self.c4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub x: Allocation,
    pub p: PriceVector,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residuals: KktResiduals,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
    /// Index of the start that produced this result (0 for the default start).
    pub start: usize,
}

/// Bang-per-buck matrix `q_ij = (m_i / f_i(x_i)) df_i/dx_ij`; divergent
/// partials come back as `+inf`.
fn weighted_partials(m: &Market, x: &Allocation) -> Result<Vec<f64>> {
    let g = m.goods();
    let mut q = Vec::with_capacity(m.n_buyers() * g);
    for (i, b) in m.buyers().iter().enumerate() {
        let xi = x.row(i);
        let f = b.utility.eval(xi)?;
        if !(f > 0.0) {
            return Err(Error::ZeroUtility { buyer: i });
        }
        let scale = b.money / f;
        q.extend(b.utility.partials(xi)?.into_iter().map(|d| scale * d));
    }
    Ok(q)
}

/// Dual prices implied by an allocation: `p_j = max_i q_ij`, zeroed for
/// goods that are not sold out and have (near) zero marginal value.
pub fn recover_prices(m: &Market, x: &Allocation, tol: f64) -> Result<PriceVector> {
    m.check_allocation(x)?;
    let q = weighted_partials(m, x)?;
    Ok(prices_from_partials(m, x, &q, tol))
}

fn prices_from_partials(m: &Market, x: &Allocation, q: &[f64], tol: f64) -> PriceVector {
    let (n, g) = (m.n_buyers(), m.goods());
    let p = (0..g)
        .map(|j| {
            let best = (0..n)
                .map(|i| q[i * g + j])
                .filter(|v| v.is_finite())
                .fold(0.0f64, f64::max);
            if x.col_sum(j) < 1.0 - tol && best < tol {
                0.0
            } else {
                best
            }
        })
        .collect();
    PriceVector(p)
}

pub fn kkt_residuals(m: &Market, x: &Allocation, p: &PriceVector, tol: f64) -> Result<KktResiduals> {
    m.check_allocation(x)?;
    m.check_prices(p)?;
    let q = weighted_partials(m, x)?;
    Ok(residuals_from_partials(m, x, p, &q, tol))
}

fn residuals_from_partials(
    m: &Market,
    x: &Allocation,
    p: &PriceVector,
    q: &[f64],
    tol: f64,
) -> KktResiduals {
    let (n, g) = (m.n_buyers(), m.goods());
    let c1 = p.iter().fold(0.0f64, |acc, &v| acc.max(-v));
    let mut c2 = 0.0f64;
    for j in 0..g {
        if p[j] > tol {
            c2 = c2.max(1.0 - x.col_sum(j));
        }
    }
    let mut c3 = 0.0f64;
    let mut c4 = 0.0f64;
    for i in 0..n {
        for j in 0..g {
            let qij = q[i * g + j];
            c3 = c3.max(qij - p[j]);
            if x.get(i, j) > tol {
                c4 = c4.max((p[j] - qij).abs());
            }
        }
    }
    KktResiduals { c1, c2, c3, c4 }
}

/// `sum_i m_i log f_i(x_i)`, or `-inf` if some utility is below the floor.
pub fn objective(m: &Market, x: &Allocation) -> Result<f64> {
    m.check_allocation(x)?;
    Ok(objective_unchecked(m, x.as_slice()))
}

fn objective_unchecked(m: &Market, x: &[f64]) -> f64 {
    let g = m.goods();
    let mut total = 0.0;
    for (i, b) in m.buyers().iter().enumerate() {
        let f = b.utility.eval_unchecked(&x[i * g..(i + 1) * g]);
        if f.is_nan() || f < UTILITY_FLOOR {
            return f64::NEG_INFINITY;
        }
        total += b.money * f.ln();
    }
    total
}

/// Euclidean projection of `v` onto `{w >= 0, sum(w) <= 1}`.
pub fn project_capped_simplex(v: &mut [f64]) {
    for w in v.iter_mut() {
        *w = w.max(0.0);
    }
    if v.iter().sum::<f64>() <= 1.0 {
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    for w in v.iter_mut() {
        *w = (*w - tau).max(0.0);
    }
    // rounding can leave the sum an ulp or two above one
    loop {
        let s: f64 = v.iter().sum();
        if s <= 1.0 {
            break;
        }
        let (k, _) = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        v[k] = (v[k] - (s - 1.0)).max(0.0);
    }
}

/// Simplex threshold: `tau` with `sum_i max(v_i - tau, 0) = 1`.
fn simplex_threshold(v: &[f64], sorted: &mut Vec<f64>) -> f64 {
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    tau
}

/// A trial point `y = P(x + t * grad)` together with the displacement
/// `y - x` computed without cancellation.
struct Trial {
    y: Vec<f64>,
    d: Vec<f64>,
    /// Per-column shift `c_j = max_i grad_ij`.
    shift: Vec<f64>,
}

impl Trial {
    /// `sum_ij h_ij d_ij`, evaluated as `sum (h_ij - c_j) d_ij + sum c_j D_j`
    /// so that both parts stay accurate when `d` is tiny.
    fn dot(&self, h: &[f64], g: usize) -> f64 {
        let mut shifted = 0.0;
        let mut cols = vec![0.0; g];
        for (k, (&hk, &dk)) in h.iter().zip(&self.d).enumerate() {
            shifted += (hk - self.shift[k % g]) * dk;
            cols[k % g] += dk;
        }
        shifted + cols.iter().zip(&self.shift).map(|(s, c)| s * c).sum::<f64>()
    }
}

/// Projects column by column.
///
/// Each column's gradient is shifted by its maximum `c_j` first, so the
/// projected point is formed from small displacements `t (grad - c_j)` and
/// keeps full precision near stationarity. The threshold of the unshifted
/// problem is `max(0, tau' + t c_j)`.
fn projected_step(x: &[f64], grad: &[f64], t: f64, n: usize, g: usize, sorted: &mut Vec<f64>) -> Trial {
    let mut y = vec![0.0; n * g];
    let mut d = vec![0.0; n * g];
    let mut shift = vec![0.0; g];
    let mut step = Vec::with_capacity(n);
    let mut col = Vec::with_capacity(n);
    for j in 0..g {
        let c = (0..n).map(|i| grad[i * g + j]).fold(f64::NEG_INFINITY, f64::max);
        shift[j] = c;
        step.clear();
        step.extend((0..n).map(|i| t * (grad[i * g + j] - c)));
        col.clear();
        col.extend((0..n).map(|i| x[i * g + j] + step[i]));
        let tau = simplex_threshold(&col, sorted).max(-t * c);
        for i in 0..n {
            let k = i * g + j;
            let v = col[i] - tau;
            if v > 0.0 {
                y[k] = v;
                d[k] = step[i] - tau;
            } else {
                y[k] = 0.0;
                d[k] = -x[k];
            }
        }
        // rounding can leave the sum an ulp or two above one
        loop {
            let s: f64 = (0..n).map(|i| y[i * g + j]).sum();
            if s <= 1.0 {
                break;
            }
            let i = (0..n)
                .max_by(|&a, &b| y[a * g + j].total_cmp(&y[b * g + j]))
                .expect("non-empty");
            let k = i * g + j;
            let cut = (s - 1.0).min(y[k]);
            y[k] -= cut;
            d[k] -= cut;
        }
    }
    Trial { y, d, shift }
}

/// The default interior start `x_ij = 1 / (2n)`.
pub fn default_start(m: &Market) -> Allocation {
    let n = m.n_buyers();
    Allocation::from_raw(n, m.goods(), vec![0.5 / n as f64; n * m.goods()])
}

/// A strictly interior start with random proportions and column sums in
/// `[0.5, 0.99]`.
pub fn random_start(m: &Market, rng: &mut impl Rng) -> Allocation {
    let (n, g) = (m.n_buyers(), m.goods());
    let mut data = vec![0.0; n * g];
    for j in 0..g {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        let fill: f64 = rng.random_range(0.5..0.99);
        for i in 0..n {
            data[i * g + j] = fill * w[i] / total;
        }
    }
    Allocation::from_raw(n, g, data)
}

/// Solves with the configured strategy: one ascent from [`default_start`]
/// for concave utilities, best-of-`starts` for quasiconcave ones.
pub fn solve(m: &Market, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    match cfg.case {
        UtilityCase::Concave => ascend(m, cfg, default_start(m), 0),
        UtilityCase::Quasiconcave => multistart(m, cfg),
    }
}

/// Single local ascent from a caller-supplied feasible start.
pub fn solve_from(m: &Market, cfg: &SolveConfig, start: &Allocation) -> Result<SolveResult> {
    cfg.validate()?;
    m.check_allocation(start)?;
    ascend(m, cfg, start.clone(), 0)
}

fn multistart(m: &Market, cfg: &SolveConfig) -> Result<SolveResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![default_start(m)];
    for _ in 1..cfg.starts {
        starts.push(random_start(m, &mut rng));
    }
    let runs: Vec<Result<SolveResult>> = starts
        .into_par_iter()
        .enumerate()
        .map(|(k, x0)| ascend(m, cfg, x0, k))
        .collect();
    let mut ok = Vec::with_capacity(runs.len());
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(first_err.expect("at least one start"));
    }
    Ok(pick_best(ok))
}

/// Highest objective; near-ties (relative 1e-9) go to the lexicographically
/// smallest allocation.
fn pick_best(runs: Vec<SolveResult>) -> SolveResult {
    let best = runs
        .iter()
        .map(|r| r.objective)
        .fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-9 * best.abs().max(1.0);
    runs.into_iter()
        .filter(|r| r.objective >= best - tie)
        .min_by(|a, b| a.x.lex_cmp(&b.x).then(a.start.cmp(&b.start)))
        .expect("non-empty")
}

struct Point {
    x: Vec<f64>,
    obj: f64,
    /// Objective gradient `q_ij`.
    grad: Vec<f64>,
}

fn evaluate(m: &Market, x: Vec<f64>) -> Option<Point> {
    let obj = objective_unchecked(m, &x);
    if !obj.is_finite() {
        return None;
    }
    let alloc = Allocation::from_raw(m.n_buyers(), m.goods(), x);
    let grad = weighted_partials(m, &alloc).ok()?;
    if grad.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Point {
        x: alloc.as_slice().to_vec(),
        obj,
        grad,
    })
}

/// KKT residuals are in price units; the certificate also checks rates and
/// budgets, which can lag by a factor of `1 / p_j`.
fn certifies(m: &Market, x: &Allocation, p: &PriceVector, tol: f64) -> bool {
    verify_equilibrium(m, x, p, tol).is_ok_and(|c| c.passed())
}

fn ascend(m: &Market, cfg: &SolveConfig, x0: Allocation, start: usize) -> Result<SolveResult> {
    let (n, g) = (m.n_buyers(), m.goods());
    for (i, b) in m.buyers().iter().enumerate() {
        let f = b.utility.eval(x0.row(i))?;
        if !(f >= UTILITY_FLOOR) {
            return Err(Error::ZeroUtility { buyer: i });
        }
    }
    let mut cur = evaluate(m, x0.as_slice().to_vec()).ok_or_else(|| Error::GradientDiverges {
        point: x0.as_slice().to_vec(),
        coord: 0,
    })?;

    // Rounding noise of the objective; below this, differences are meaningless.
    let noise = |obj: f64| 64.0 * f64::EPSILON * (obj.abs() + m.total_money());

    let mut trace = vec![cur.obj];
    let mut step = INITIAL_STEP;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut sorted = Vec::with_capacity(n);
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let alloc = Allocation::from_raw(n, g, cur.x.clone());
        let p = prices_from_partials(m, &alloc, &cur.grad, cfg.tol_kkt);
        let res = residuals_from_partials(m, &alloc, &p, &cur.grad, cfg.tol_kkt);
        if res.max() <= cfg.tol_kkt {
            converged = certifies(m, &alloc, &p, cfg.tol_kkt);
        }
        let stagnant = trace.len() > STAGNATION_WINDOW && {
            let old = trace[trace.len() - 1 - STAGNATION_WINDOW];
            (cur.obj - old).abs() <= cfg.tol_obj * cur.obj.abs().max(1.0)
        };
        if converged || stagnant || iterations >= cfg.max_iters {
            return Ok(SolveResult {
                x: alloc,
                p,
                objective: cur.obj,
                iterations,
                kkt_residuals: res,
                converged,
                objective_trace: trace,
                start,
            });
        }
        iterations += 1;

        // Barzilai-Borwein trial step from the last accepted move, falling
        // back to doubling the previous step when curvature is not negative.
        let mut t = match &prev {
            Some((px, pg)) => {
                let (mut ss, mut sy) = (0.0, 0.0);
                for k in 0..n * g {
                    let s = cur.x[k] - px[k];
                    ss += s * s;
                    sy += s * (cur.grad[k] - pg[k]);
                }
                if sy < 0.0 && ss > 0.0 {
                    (ss / -sy).clamp(MIN_STEP, MAX_STEP)
                } else {
                    (2.0 * step).min(MAX_STEP)
                }
            }
            None => INITIAL_STEP,
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = projected_step(&cur.x, &cur.grad, t, n, g, &mut sorted);
            let lin = trial.dot(&cur.grad, g);
            if lin <= 0.0 {
                // projected step is null: x is stationary up to rounding
                break;
            }
            if let Some(next) = evaluate(m, trial.y.clone()) {
                let armijo = next.obj >= cur.obj + ARMIJO_C * lin;
                // In the rounding regime accept a step whose endpoint still
                // has a non-negative slope along the segment.
                let flat = next.obj >= cur.obj
                    && (next.obj - cur.obj <= noise(cur.obj))
                    && trial.dot(&next.grad, g) >= -noise(cur.obj);
                if armijo || flat {
                    accepted = Some(next);
                    break;
                }
            }
            t *= BACKTRACK;
        }
        match accepted {
            Some(next) => {
                debug_assert!(next.obj >= cur.obj - noise(cur.obj));
                step = t;
                trace.push(next.obj);
                let old = std::mem::replace(&mut cur, next);
                prev = Some((old.x, old.grad));
            }
            None => {
                // line search exhausted: report the current point as is
                let alloc = Allocation::from_raw(n, g, cur.x.clone());
                let p = prices_from_partials(m, &alloc, &cur.grad, cfg.tol_kkt);
                let res = residuals_from_partials(m, &alloc, &p, &cur.grad, cfg.tol_kkt);
                let converged = res.max() <= cfg.tol_kkt && certifies(m, &alloc, &p, cfg.tol_kkt);
                return Ok(SolveResult {
                    x: alloc,
                    p,
                    objective: cur.obj,
                    iterations,
                    converged,
                    kkt_residuals: res,
                    objective_trace: trace,
                    start,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Buyer;
    use crate::utility::UtilityFn;

    fn identity_market() -> Market {
        Market::new(
            2,
            vec![
                Buyer::new(1.0, UtilityFn::linear(vec![1.0, 0.0]).unwrap()),
                Buyer::new(1.0, UtilityFn::linear(vec![0.0, 1.0]).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn projection_examples() {
        let mut v = vec![0.2, -0.3, 0.1];
        project_capped_simplex(&mut v);
        assert_eq!(v, vec![0.2, 0.0, 0.1]);
        let mut v = vec![1.0, 1.0];
        project_capped_simplex(&mut v);
        assert_eq!(v, vec![0.5, 0.5]);
        let mut v = vec![2.0, 0.1, 0.5];
        project_capped_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn decoupled_linear_market() {
        let m = identity_market();
        let r = solve(&m, &SolveConfig::default()).unwrap();
        assert!(r.converged);
        for (a, b) in r.x.as_slice().iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((r.p[0] - 1.0).abs() < 1e-6 && (r.p[1] - 1.0).abs() < 1e-6);
        assert!(r.objective.abs() < 1e-6);
    }

    #[test]
    fn single_cobb_douglas_buyer_takes_everything() {
        let m = Market::new(
            2,
            vec![Buyer::new(2.0, UtilityFn::cobb_douglas(vec![0.5, 0.5]).unwrap())],
        )
        .unwrap();
        let r = solve(&m, &SolveConfig::default()).unwrap();
        assert!(r.converged);
        for v in r.x.as_slice() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert!((r.p[0] - 1.0).abs() < 1e-6 && (r.p[1] - 1.0).abs() < 1e-6);
        assert!(r.objective.abs() < 1e-9);
    }

    #[test]
    fn recover_prices_examples() {
        let m = Market::new(1, vec![Buyer::new(1.0, UtilityFn::linear(vec![1.0]).unwrap())]).unwrap();
        let x = Allocation::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(recover_prices(&m, &x, 1e-9).unwrap().0, vec![1.0]);

        let m = Market::new(
            2,
            vec![Buyer::new(2.0, UtilityFn::cobb_douglas(vec![0.25, 0.25]).unwrap())],
        )
        .unwrap();
        let x = Allocation::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let p = recover_prices(&m, &x, 1e-9).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        // good 2 is worthless to everyone and unsold
        let m = Market::new(
            2,
            vec![
                Buyer::new(1.0, UtilityFn::linear(vec![1.0, 0.0]).unwrap()),
                Buyer::new(1.0, UtilityFn::linear(vec![2.0, 0.0]).unwrap()),
            ],
        )
        .unwrap();
        let x = Allocation::from_rows(&[vec![0.5, 0.0], vec![0.5, 0.0]]).unwrap();
        assert_eq!(recover_prices(&m, &x, 1e-9).unwrap()[1], 0.0);
    }

    #[test]
    fn recover_prices_skips_divergent_boundary_partial() {
        let m = Market::new(
            2,
            vec![
                Buyer::new(1.0, UtilityFn::ces(vec![1.0, 1.0], 0.5).unwrap()),
                Buyer::new(1.0, UtilityFn::linear(vec![1.0, 1.0]).unwrap()),
            ],
        )
        .unwrap();
        let x = Allocation::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = recover_prices(&m, &x, 1e-9).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        // ...but the stationarity residual exposes the non-optimal point
        assert!(kkt_residuals(&m, &x, &p, 1e-9).unwrap().c3.is_infinite());
    }

    #[test]
    fn residual_examples() {
        let m = identity_market();
        let x = Allocation::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = kkt_residuals(&m, &x, &PriceVector(vec![1.0, 1.0]), 1e-9).unwrap();
        assert_eq!(r, KktResiduals { c1: 0.0, c2: 0.0, c3: 0.0, c4: 0.0 });
        let r = kkt_residuals(&m, &x, &PriceVector(vec![1.0, 0.5]), 1e-9).unwrap();
        assert_eq!(r.c3, 0.5);

        let single = Market::new(1, vec![Buyer::new(1.0, UtilityFn::linear(vec![1.0]).unwrap())]).unwrap();
        let x = Allocation::from_rows(&[vec![1.0]]).unwrap();
        let r = kkt_residuals(&single, &x, &PriceVector(vec![1.0]), 1e-9).unwrap();
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn zero_utility_is_rejected() {
        let m = Market::new(1, vec![Buyer::new(1.0, UtilityFn::expr("x1 - 1", 1).unwrap())]).unwrap();
        assert!(matches!(
            solve(&m, &SolveConfig::default()),
            Err(Error::ZeroUtility { buyer: 0 })
        ));
    }

    #[test]
    fn invalid_config() {
        let m = identity_market();
        let cfg = SolveConfig {
            starts: 0,
            ..SolveConfig::quasiconcave()
        };
        assert!(solve(&m, &cfg).is_err());
    }
}
