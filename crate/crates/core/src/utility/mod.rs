//! Buyer utility functions.
//!
//! Four builtin families (linear, Cobb-Douglas, CES and a smoothed
//! piecewise-linear quasiconcave curve) plus arbitrary parsed expressions.
//! Builtins have closed-form gradients; expressions are differentiated with
//! forward-mode dual numbers.

pub mod dual;
pub mod expr;
pub mod shape;

use std::sync::Arc;

use crate::error::{Error, Result};
use dual::Dual;
pub use expr::{parse_utility, ExprAst, Func};
pub use shape::{probe_shape, ShapeReport};

/// Default half-width of the quadratic blend around the kink of [`UtilityKind::PwlQuasi`].
pub const DEFAULT_PWL_DELTA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum UtilityKind {
    /// `sum_j a_j y_j`
    Linear { coeffs: Vec<f64> },
    /// `prod_j y_j^alpha_j`
    CobbDouglas { exponents: Vec<f64> },
    /// `(sum_j a_j y_j^rho)^(1/rho)`
    Ces { weights: Vec<f64>, rho: f64 },
    /// Scalar curve `2a s` below the kink at `s = 1/2`, `2(1-a)s + 2a - 1`
    /// above it, applied to `s = w . y`. The kink is blended by a quadratic on
    /// `[1/2 - delta, 1/2 + delta]`.
    PwlQuasi { a: f64, delta: f64, weights: Vec<f64> },
    Expr { ast: Arc<ExprAst>, source: String },
}

/// An immutable, evaluable utility over `dim` goods.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityFn {
    kind: UtilityKind,
    dim: usize,
}

fn check_len(v: &[f64], name: &str) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} must be non-empty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} must be finite")));
    }
    Ok(v.len())
}

impl UtilityFn {
    pub fn linear(coeffs: Vec<f64>) -> Result<Self> {
        let dim = check_len(&coeffs, "coeffs")?;
        if coeffs.iter().any(|&a| a < 0.0) || coeffs.iter().all(|&a| a == 0.0) {
            return Err(Error::InvalidParameter(
                "linear coefficients must be >= 0 and not all zero".into(),
            ));
        }
        Ok(UtilityFn {
            kind: UtilityKind::Linear { coeffs },
            dim,
        })
    }

    pub fn cobb_douglas(exponents: Vec<f64>) -> Result<Self> {
        let dim = check_len(&exponents, "exponents")?;
        if exponents.iter().any(|&a| a <= 0.0) {
            return Err(Error::InvalidParameter(
                "Cobb-Douglas exponents must be > 0".into(),
            ));
        }
        Ok(UtilityFn {
            kind: UtilityKind::CobbDouglas { exponents },
            dim,
        })
    }

    pub fn ces(weights: Vec<f64>, rho: f64) -> Result<Self> {
        let dim = check_len(&weights, "weights")?;
        if weights.iter().any(|&a| a <= 0.0) {
            return Err(Error::InvalidParameter("CES weights must be > 0".into()));
        }
        if !(rho < 1.0 && rho != 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "CES exponent must satisfy rho < 1, rho != 0 (got {rho})"
            )));
        }
        Ok(UtilityFn {
            kind: UtilityKind::Ces { weights, rho },
            dim,
        })
    }

    /// Smoothed piecewise-linear quasiconcave curve. `delta = 0` gives the
    /// exact kinked function (not C1; meant for grid oracles).
    pub fn pwl_quasi(a: f64, delta: f64, weights: Vec<f64>) -> Result<Self> {
        let dim = check_len(&weights, "weights")?;
        if !(a > 0.0 && a < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "slope parameter a must lie in (0, 1/2) (got {a})"
            )));
        }
        if !(0.0..0.5).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "smoothing half-width must lie in [0, 1/2) (got {delta})"
            )));
        }
        if weights.iter().any(|&w| w < 0.0) || weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be >= 0 and not all zero".into(),
            ));
        }
        Ok(UtilityFn {
            kind: UtilityKind::PwlQuasi { a, delta, weights },
            dim,
        })
    }

    pub fn expr(source: &str, dim: usize) -> Result<Self> {
        let ast = parse_utility(source, dim)?;
        Ok(UtilityFn {
            kind: UtilityKind::Expr {
                ast: Arc::new(ast),
                source: source.to_string(),
            },
            dim,
        })
    }

    pub fn from_ast(ast: ExprAst, dim: usize) -> Result<Self> {
        if let Some(i) = ast.max_var() {
            if i >= dim {
                return Err(Error::VariableOutOfRange { index: i + 1, dim });
            }
        }
        let source = ast.to_string();
        Ok(UtilityFn {
            kind: UtilityKind::Expr {
                ast: Arc::new(ast),
                source,
            },
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &UtilityKind {
        &self.kind
    }

    /// True for the builtin families, all of which are concave except
    /// `PwlQuasi`.
    pub fn is_builtin_concave(&self) -> bool {
        matches!(
            self.kind,
            UtilityKind::Linear { .. } | UtilityKind::CobbDouglas { .. } | UtilityKind::Ces { .. }
        )
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: y.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        self.check_dim(y)?;
        let v = self.eval_unchecked(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { point: y.to_vec() })
        }
    }

    /// Evaluates without dimension or finiteness checks. Hot loops in the
    /// oracle use this directly.
    pub fn eval_unchecked(&self, y: &[f64]) -> f64 {
        match &self.kind {
            UtilityKind::Linear { coeffs } => coeffs.iter().zip(y).map(|(a, v)| a * v).sum(),
            UtilityKind::CobbDouglas { exponents } => exponents
                .iter()
                .zip(y)
                .map(|(a, v)| v.powf(*a))
                .product(),
            UtilityKind::Ces { weights, rho } => {
                let s: f64 = weights.iter().zip(y).map(|(a, v)| a * v.powf(*rho)).sum();
                s.powf(1.0 / rho)
            }
            UtilityKind::PwlQuasi { a, delta, weights } => {
                let s: f64 = weights.iter().zip(y).map(|(w, v)| w * v).sum();
                pwl_value(*a, *delta, s)
            }
            UtilityKind::Expr { ast, .. } => ast.eval(y),
        }
    }

    /// Partial derivatives; divergent or undefined entries are reported as
    /// `f64::INFINITY` rather than an error.
    pub fn partials(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        let clean = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
        let g = match &self.kind {
            UtilityKind::Linear { coeffs } => coeffs.clone(),
            UtilityKind::CobbDouglas { exponents } => {
                if y.iter().all(|&v| v > 0.0) {
                    let f = self.eval_unchecked(y);
                    exponents.iter().zip(y).map(|(a, v)| a * f / v).collect()
                } else {
                    (0..self.dim)
                        .map(|j| {
                            if y[j] <= 0.0 {
                                return f64::INFINITY;
                            }
                            let rest: f64 = (0..self.dim)
                                .filter(|&k| k != j)
                                .map(|k| y[k].powf(exponents[k]))
                                .product();
                            clean(exponents[j] * y[j].powf(exponents[j] - 1.0) * rest)
                        })
                        .collect()
                }
            }
            UtilityKind::Ces { weights, rho } => {
                let s: f64 = weights.iter().zip(y).map(|(a, v)| a * v.powf(*rho)).sum();
                let outer = s.powf(1.0 / rho - 1.0);
                weights
                    .iter()
                    .zip(y)
                    .map(|(a, v)| {
                        if *v <= 0.0 {
                            f64::INFINITY
                        } else {
                            clean(a * v.powf(rho - 1.0) * outer)
                        }
                    })
                    .collect()
            }
            UtilityKind::PwlQuasi { a, delta, weights } => {
                let s: f64 = weights.iter().zip(y).map(|(w, v)| w * v).sum();
                let d = pwl_slope(*a, *delta, s);
                weights.iter().map(|w| w * d).collect()
            }
            UtilityKind::Expr { ast, .. } => {
                let mut vars: Vec<Dual> = y.iter().map(|&v| Dual::new(v, 0.0)).collect();
                let mut out = Vec::with_capacity(self.dim);
                for j in 0..self.dim {
                    vars[j].eps = 1.0;
                    out.push(clean(ast.eval(&vars).eps));
                    vars[j].eps = 0.0;
                }
                out
            }
        };
        Ok(g)
    }

    /// Exact gradient. Errors where any partial diverges, and for
    /// Cobb-Douglas/CES at any zero coordinate.
    pub fn grad(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        if matches!(
            self.kind,
            UtilityKind::CobbDouglas { .. } | UtilityKind::Ces { .. }
        ) {
            if let Some(j) = y.iter().position(|&v| v <= 0.0) {
                return Err(Error::GradientDiverges {
                    point: y.to_vec(),
                    coord: j,
                });
            }
        }
        let g = self.partials(y)?;
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::GradientDiverges {
                point: y.to_vec(),
                coord: j,
            });
        }
        Ok(g)
    }
}

/// Piecewise formula, `delta` half-width blend around `s = 1/2`.
pub fn pwl_value(a: f64, delta: f64, s: f64) -> f64 {
    let left = 0.5 - delta;
    let right = 0.5 + delta;
    if delta == 0.0 {
        return if s <= 0.5 {
            2.0 * a * s
        } else {
            2.0 * (1.0 - a) * s + (2.0 * a - 1.0)
        };
    }
    if s < left {
        2.0 * a * s
    } else if s > right {
        2.0 * (1.0 - a) * s + (2.0 * a - 1.0)
    } else {
        let s1 = 2.0 * a;
        let s2 = 2.0 * (1.0 - a);
        let t = s - left;
        s1 * left + s1 * t + (s2 - s1) * t * t / (4.0 * delta)
    }
}

pub fn pwl_slope(a: f64, delta: f64, s: f64) -> f64 {
    let s1 = 2.0 * a;
    let s2 = 2.0 * (1.0 - a);
    if delta == 0.0 {
        return if s <= 0.5 { s1 } else { s2 };
    }
    let left = 0.5 - delta;
    if s < left {
        s1
    } else if s > 0.5 + delta {
        s2
    } else {
        s1 + (s2 - s1) * (s - left) / (2.0 * delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn linear_eval_and_grad() {
        let f = UtilityFn::linear(vec![2.0, 3.0]).unwrap();
        assert_eq!(f.eval(&[1.0, 1.0]).unwrap(), 5.0);
        assert_eq!(f.grad(&[0.0, 7.0]).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn pwl_exact_pieces() {
        let f = UtilityFn::pwl_quasi(0.25, 0.0, vec![1.0]).unwrap();
        assert_eq!(f.eval(&[0.5]).unwrap(), 0.25);
        assert_eq!(f.eval(&[1.0]).unwrap(), 1.0);
        let f = UtilityFn::pwl_quasi(0.25, 0.01, vec![1.0]).unwrap();
        assert!(close(f.eval(&[0.5]).unwrap(), 0.2525, 1e-15));
        assert_eq!(f.eval(&[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn pwl_blend_matches_right_line_at_seam() {
        let (a, d) = (0.3, 0.05);
        let right = 0.5 + d;
        let q = pwl_value(a, d, right - 1e-15);
        let line = 2.0 * (1.0 - a) * right + (2.0 * a - 1.0);
        assert!(close(q, line, 1e-12));
    }

    #[test]
    fn cobb_douglas_grad() {
        let f = UtilityFn::cobb_douglas(vec![0.5, 0.5]).unwrap();
        let g = f.grad(&[1.0, 1.0]).unwrap();
        assert!(close(g[0], 0.5, 1e-15) && close(g[1], 0.5, 1e-15));
        assert_eq!(f.eval(&[0.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(
            f.grad(&[0.0, 3.0]),
            Err(Error::GradientDiverges { coord: 0, .. })
        ));
        let p = f.partials(&[0.0, 3.0]).unwrap();
        assert!(p[0].is_infinite());
    }

    #[test]
    fn ces_boundary_limits() {
        let f = UtilityFn::ces(vec![1.0, 1.0], -1.0).unwrap();
        assert_eq!(f.eval(&[0.0, 1.0]).unwrap(), 0.0);
        // harmonic-type mean: (1/1 + 1/1)^-1
        assert!(close(f.eval(&[1.0, 1.0]).unwrap(), 0.5, 1e-15));
        assert!(f.grad(&[0.0, 1.0]).is_err());
        let f = UtilityFn::ces(vec![1.0, 1.0], 0.5).unwrap();
        assert!(close(f.eval(&[0.0, 4.0]).unwrap(), 4.0, 1e-12));
    }

    #[test]
    fn expr_gradient_matches_example() {
        let f = UtilityFn::expr("x1^0.5 * x2^0.5", 2).unwrap();
        let g = f.grad(&[4.0, 1.0]).unwrap();
        assert!(close(g[0], 0.25, 1e-14));
        assert!(close(g[1], 1.0, 1e-14));
    }

    #[test]
    fn expr_divergent_gradient_is_error() {
        let f = UtilityFn::expr("sqrt(x1) + x2", 2).unwrap();
        assert!(matches!(
            f.grad(&[0.0, 1.0]),
            Err(Error::GradientDiverges { coord: 0, .. })
        ));
        assert_eq!(f.eval(&[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let f = UtilityFn::linear(vec![1.0, 1.0]).unwrap();
        assert_eq!(
            f.eval(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn constructor_validation() {
        assert!(UtilityFn::ces(vec![1.0], 0.0).is_err());
        assert!(UtilityFn::ces(vec![1.0], 1.0).is_err());
        assert!(UtilityFn::cobb_douglas(vec![0.0]).is_err());
        assert!(UtilityFn::pwl_quasi(0.6, 0.01, vec![1.0]).is_err());
        assert!(UtilityFn::linear(vec![0.0, 0.0]).is_err());
        assert!(UtilityFn::from_ast(ExprAst::Var(2), 2).is_err());
    }

    #[test]
    fn non_finite_expr_value_is_error() {
        let f = UtilityFn::expr("log(x1)", 1).unwrap();
        assert!(matches!(f.eval(&[0.0]), Err(Error::NonFinite { .. })));
    }
}
