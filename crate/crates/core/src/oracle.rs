//! Brute-force ground truth on a grid of allocations.
//!
//! Allocations take values `k * step` and are enumerated row-major (buyer by
//! buyer, good by good). The search is split into prefix tasks that run in
//! parallel; merging keeps the highest objective and, among exact ties, the
//! lexicographically smallest allocation, so results do not depend on the
//! thread schedule.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{verify_equilibrium, Allocation, EquilibriumCertificate, Market, PriceVector};
use crate::solver::{recover_prices, UTILITY_FLOOR};

pub const DEFAULT_GUARD: f64 = 1e8;
pub const MIN_STEP: f64 = 1e-4;
pub const MAX_STEP: f64 = 0.5;

/// Prefix tasks are split until there are at least this many.
const MIN_TASKS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub step: f64,
    pub guard: f64,
    /// Enumerate only allocations that sell every good out. For
    /// nondecreasing utilities some optimum is of this form, so the search is
    /// still exact while visiting far fewer points.
    pub saturate: bool,
}

impl GridSpec {
    pub fn new(step: f64) -> Result<Self> {
        let spec = GridSpec {
            step,
            guard: DEFAULT_GUARD,
            saturate: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn saturating(step: f64) -> Result<Self> {
        Ok(GridSpec {
            saturate: true,
            ..Self::new(step)?
        })
    }

    pub fn with_guard(self, guard: f64) -> Result<Self> {
        let spec = GridSpec { guard, ..self };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(MIN_STEP..=MAX_STEP).contains(&self.step) {
            return Err(Error::InvalidParameter(format!(
                "grid step must lie in [{MIN_STEP}, {MAX_STEP}], got {}",
                self.step
            )));
        }
        if !(self.guard >= 1.0) {
            return Err(Error::InvalidParameter("guard must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of levels above zero: the largest `K` with `K * step <= 1`.
    pub fn levels(&self) -> u32 {
        (1.0 / self.step + 1e-9).floor() as u32
    }

    /// Grid points for `n` buyers and `g` goods.
    pub fn count(&self, n: usize, g: usize) -> f64 {
        let k = self.levels() as f64;
        let per_column = if self.saturate {
            binomial(k + n as f64 - 1.0, n - 1)
        } else {
            binomial(k + n as f64, n)
        };
        per_column.powi(g as i32)
    }

    fn check_guard(&self, n: usize, g: usize) -> Result<()> {
        let points = self.count(n, g);
        if points > self.guard {
            return Err(Error::GuardExceeded {
                points,
                guard: self.guard,
            });
        }
        Ok(())
    }
}

/// `C(top, k)` in floating point.
fn binomial(top: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (top - i as f64) / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOptimum {
    pub objective: f64,
    pub allocation: Allocation,
    pub points: f64,
}

/// Search state along the row-major walk.
#[derive(Clone)]
struct Node {
    levels: Vec<u32>,
    caps: Vec<u32>,
    /// Objective of the completed rows.
    partial: f64,
}

struct Walk<'a> {
    m: &'a Market,
    k: u32,
    step: f64,
    saturate: bool,
    n: usize,
    g: usize,
}

impl Walk<'_> {
    fn row_value(&self, levels: &[u32], i: usize) -> f64 {
        let g = self.g;
        let row: Vec<f64> = levels[i * g..(i + 1) * g]
            .iter()
            .map(|&l| l as f64 * self.step)
            .collect();
        let b = self.m.buyer(i);
        let f = b.utility.eval_unchecked(&row);
        if f.is_nan() || f < UTILITY_FLOOR {
            f64::NEG_INFINITY
        } else {
            b.money * f.ln()
        }
    }

    /// Values cell `pos` may take given the remaining column capacity.
    fn choices(&self, pos: usize, caps: &[u32]) -> std::ops::RangeInclusive<u32> {
        let (i, j) = (pos / self.g, pos % self.g);
        if self.saturate && i + 1 == self.n {
            caps[j]..=caps[j]
        } else {
            0..=caps[j]
        }
    }

    /// Places `v` at `pos`; returns false if the finished row scores `-inf`.
    fn place(&self, node: &mut Node, pos: usize, v: u32) -> bool {
        let j = pos % self.g;
        node.levels[pos] = v;
        node.caps[j] -= v;
        if j + 1 == self.g {
            let val = self.row_value(&node.levels, pos / self.g);
            if val == f64::NEG_INFINITY {
                return false;
            }
            node.partial += val;
        }
        true
    }

    /// Prefixes of length `depth` in enumeration order. Rows that score
    /// `-inf` are kept (with `partial = -inf`) so that an all-`-inf` market
    /// still reports its first allocation.
    fn prefixes(&self, depth: usize) -> Vec<Node> {
        let root = Node {
            levels: vec![0; self.n * self.g],
            caps: vec![self.k; self.g],
            partial: 0.0,
        };
        let mut out = vec![root];
        for pos in 0..depth {
            let mut next = Vec::new();
            for node in out {
                for v in self.choices(pos, &node.caps) {
                    let mut child = node.clone();
                    if !self.place(&mut child, pos, v) {
                        child.partial = f64::NEG_INFINITY;
                    }
                    next.push(child);
                }
            }
            out = next;
        }
        out
    }

    /// Best completion of `node` from `pos` on: `(objective, levels)`.
    fn best_from(&self, node: &mut Node, pos: usize, best: &mut (f64, Vec<u32>)) {
        if node.partial == f64::NEG_INFINITY {
            if best.1.is_empty() {
                // no finite point seen yet; remember the first allocation
                let mut first = node.levels.clone();
                self.fill_first(&mut first, pos, node.caps.clone());
                *best = (f64::NEG_INFINITY, first);
            }
            return;
        }
        if pos == self.n * self.g {
            if node.partial > best.0 || best.1.is_empty() {
                *best = (node.partial, node.levels.clone());
            }
            return;
        }
        let j = pos % self.g;
        for v in self.choices(pos, &node.caps) {
            let saved = node.partial;
            if self.place(node, pos, v) {
                self.best_from(node, pos + 1, best);
            } else if best.1.is_empty() {
                let mut first = node.levels.clone();
                self.fill_first(&mut first, pos + 1, node.caps.clone());
                *best = (f64::NEG_INFINITY, first);
            }
            node.partial = saved;
            node.caps[j] += v;
            node.levels[pos] = 0;
        }
    }

    /// The first allocation in enumeration order extending `levels[..pos]`.
    fn fill_first(&self, levels: &mut [u32], pos: usize, mut caps: Vec<u32>) {
        for q in pos..self.n * self.g {
            let v = *self.choices(q, &caps).start();
            levels[q] = v;
            caps[q % self.g] -= v;
        }
    }

    fn visit_all(&self, node: &mut Node, pos: usize, out: &mut dyn FnMut(&[u32])) {
        if pos == self.n * self.g {
            out(&node.levels);
            return;
        }
        let j = pos % self.g;
        for v in self.choices(pos, &node.caps) {
            node.levels[pos] = v;
            node.caps[j] -= v;
            self.visit_all(node, pos + 1, out);
            node.caps[j] += v;
        }
        node.levels[pos] = 0;
    }

    fn split_depth(&self) -> usize {
        let cells = self.n * self.g;
        let mut depth = 0;
        let mut tasks = 1usize;
        while depth < cells && tasks < MIN_TASKS {
            tasks = tasks.saturating_mul(self.k as usize + 1);
            depth += 1;
        }
        depth
    }

    fn to_allocation(&self, levels: &[u32]) -> Allocation {
        let data = levels.iter().map(|&l| l as f64 * self.step).collect();
        Allocation::from_raw(self.n, self.g, data)
    }
}

fn lex(a: &[u32], b: &[u32]) -> Ordering {
    a.cmp(b)
}

/// Maximizes `sum_i m_i log f_i(x_i)` over the grid.
pub fn grid_optimize(m: &Market, spec: &GridSpec) -> Result<GridOptimum> {
    spec.validate()?;
    let (n, g) = (m.n_buyers(), m.goods());
    spec.check_guard(n, g)?;
    let walk = Walk {
        m,
        k: spec.levels(),
        step: spec.step,
        saturate: spec.saturate,
        n,
        g,
    };
    let depth = walk.split_depth();
    let results: Vec<(f64, Vec<u32>)> = walk
        .prefixes(depth)
        .into_par_iter()
        .map(|mut node| {
            let mut best = (f64::NEG_INFINITY, Vec::new());
            walk.best_from(&mut node, depth, &mut best);
            best
        })
        .collect();
    let (objective, levels) = results
        .into_iter()
        .filter(|r| !r.1.is_empty())
        .reduce(|a, b| match b.0.partial_cmp(&a.0) {
            Some(Ordering::Greater) => b,
            Some(Ordering::Equal) if lex(&b.1, &a.1) == Ordering::Less => b,
            _ => a,
        })
        .expect("grid is never empty");
    Ok(GridOptimum {
        objective,
        allocation: walk.to_allocation(&levels),
        points: spec.count(n, g),
    })
}

/// Visits every grid point with a row-major allocation buffer, in parallel
/// prefix chunks. Returns one accumulator per chunk, in enumeration order.
/// The caller is responsible for the guard.
pub(crate) fn fold_grid<T, I, V>(m: &Market, spec: &GridSpec, init: I, visit: V) -> Vec<T>
where
    T: Send,
    I: Fn() -> T + Sync,
    V: Fn(&mut T, &[f64]) + Sync,
{
    let walk = Walk {
        m,
        k: spec.levels(),
        step: spec.step,
        saturate: spec.saturate,
        n: m.n_buyers(),
        g: m.goods(),
    };
    let depth = walk.split_depth();
    walk.prefixes(depth)
        .into_par_iter()
        .map(|mut node| {
            let mut acc = init();
            let mut buf = vec![0.0; walk.n * walk.g];
            walk.visit_all(&mut node, depth, &mut |levels| {
                for (b, &l) in buf.iter_mut().zip(levels) {
                    *b = l as f64 * walk.step;
                }
                visit(&mut acc, &buf);
            });
            acc
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanEntry {
    pub allocation: Allocation,
    pub prices: PriceVector,
    pub certificate: EquilibriumCertificate,
    /// Largest violation among the certificate's checks.
    pub worst_slack: f64,
}

pub fn worst_slack(c: &EquilibriumCertificate) -> f64 {
    let spread = c.rate_spreads.iter().copied().fold(0.0, f64::max);
    c.cond1_worst
        .max(c.cond2_worst)
        .max(c.cond3_worst)
        .max(spread)
}

/// Every grid allocation whose recovered prices pass `verify_equilibrium`
/// at `tol`, best first. Allocations where prices or rates are undefined are
/// skipped.
pub fn grid_equilibrium_scan(m: &Market, spec: &GridSpec, tol: f64) -> Result<Vec<ScanEntry>> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be > 0".into()));
    }
    let (n, g) = (m.n_buyers(), m.goods());
    spec.check_guard(n, g)?;
    let chunks = fold_grid(m, spec, Vec::new, |found: &mut Vec<ScanEntry>, data| {
        let x = Allocation::from_raw(n, g, data.to_vec());
        let Ok(p) = recover_prices(m, &x, tol) else {
            return;
        };
        let Ok(c) = verify_equilibrium(m, &x, &p, tol) else {
            return;
        };
        if c.passed() {
            found.push(ScanEntry {
                worst_slack: worst_slack(&c),
                allocation: x,
                prices: p,
                certificate: c,
            });
        }
    });
    let mut entries: Vec<ScanEntry> = chunks.into_iter().flatten().collect();
    // stable: ties keep enumeration order
    entries.sort_by(|a, b| a.worst_slack.total_cmp(&b.worst_slack));
    Ok(entries)
}
