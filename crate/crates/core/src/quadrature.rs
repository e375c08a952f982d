//! Gauss–Legendre and Gauss–Hermite rules and their tensor products.
//!
//! Nodes are found by Newton iteration on the three-term recurrence of the
//! orthogonal polynomial. Only the non-negative half is iterated; the other
//! half is mirrored so that symmetry holds exactly.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of tensor-grid points.
pub const DEFAULT_POINT_BUDGET: usize = 10_000_000;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Legendre,
    Hermite,
}

/// A one-dimensional Gauss rule. Nodes are stored in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub kind: RuleKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Integration interval for Legendre rules; `None` marks the real line.
    pub interval: Option<(f64, f64)>,
    /// Hermite only: weights premultiplied by `exp(node²)`.
    pub deweighted: bool,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i f(x_i)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Newton refinement, stopping on a relative step below [`NEWTON_TOL`].
fn newton(mut z: f64, eval: impl Fn(f64) -> (f64, f64)) -> (f64, f64) {
    let mut deriv = eval(z).1;
    for _ in 0..NEWTON_MAX_ITER {
        let (p, dp) = eval(z);
        deriv = dp;
        let step = p / dp;
        z -= step;
        if step.abs() <= NEWTON_TOL * z.abs().max(1.0) {
            deriv = eval(z).1;
            break;
        }
    }
    (z, deriv)
}

/// Legendre polynomial `P_n(z)` and its derivative.
fn legendre_eval(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
    }
    let dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
    (p1, dp)
}

/// n-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre_1d(n: usize, a: f64, b: f64) -> Result<Rule1D> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Gauss-Legendre rule needs at least one point".into(),
        ));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid interval [{a}, {b}]"
        )));
    }

    let half = n.div_ceil(2);
    // Reference nodes on [-1, 1], largest first.
    let mut pos = Vec::with_capacity(half);
    for i in 0..half {
        let (z, w) = if n % 2 == 1 && i == half - 1 {
            let (_, dp) = legendre_eval(n, 0.0);
            (0.0, 2.0 / (dp * dp))
        } else {
            let guess = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let (z, dp) = newton(guess, |z| legendre_eval(n, z));
            (z, 2.0 / ((1.0 - z * z) * dp * dp))
        };
        pos.push((z, w));
    }

    let mid = 0.5 * (a + b);
    let scale = 0.5 * (b - a);
    let (nodes, weights) = mirror(n, &pos)
        .into_iter()
        .map(|(z, w)| (mid + scale * z, scale * w))
        .unzip();
    Ok(Rule1D {
        kind: RuleKind::Legendre,
        nodes,
        weights,
        interval: Some((a, b)),
        deweighted: false,
    })
}

/// Orthonormal Hermite polynomial of degree `n` at `z` and the derivative
/// factor used by the weight formula.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// n-point Gauss–Hermite rule for the weight `e^{-x²}`.
///
/// With `deweighted`, each weight is multiplied by `exp(x²)` (computed in the
/// log domain) so that `Σ w_i g(x_i) ≈ ∫ g(x) dx` for integrands that already
/// carry Gaussian decay.
pub fn gauss_hermite_1d(n: usize, deweighted: bool) -> Result<Rule1D> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Gauss-Hermite rule needs at least one point".into(),
        ));
    }
    let half = n.div_ceil(2);
    let guesses = hermite_guesses(n)?;
    let mut pos = Vec::with_capacity(half);
    for (i, &guess) in guesses.iter().enumerate().take(half) {
        let z = if n % 2 == 1 && i == half - 1 {
            0.0
        } else {
            newton(guess, |z| hermite_orthonormal(n, z)).0
        };
        let (_, dp) = hermite_orthonormal(n, z);
        let log_w = std::f64::consts::LN_2 - 2.0 * dp.abs().ln();
        let w = if deweighted {
            (log_w + z * z).exp()
        } else {
            log_w.exp()
        };
        pos.push((z, w));
    }
    let (nodes, weights) = mirror(n, &pos).into_iter().unzip();
    Ok(Rule1D {
        kind: RuleKind::Hermite,
        nodes,
        weights,
        interval: None,
        deweighted,
    })
}

/// Starting points for the Hermite Newton iteration, largest first: the
/// eigenvalues of the symmetric tridiagonal recurrence matrix. The closed-form
/// asymptotic guesses used for Legendre lose root separation beyond about
/// 150 Hermite points.
fn hermite_guesses(n: usize) -> Result<Vec<f64>> {
    let mut t = Array2::<f64>::zeros((n, n));
    for j in 1..n {
        let off = (j as f64 / 2.0).sqrt();
        t[[j - 1, j]] = off;
        t[[j, j - 1]] = off;
    }
    let mut vals = crate::linalg::sym_eigvals(t.view())?.to_vec();
    vals.reverse();
    Ok(vals)
}

/// Expand the non-negative half (largest first) into a full ascending rule.
fn mirror(n: usize, pos: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    out.extend(pos.iter().map(|&(z, w)| (-z, w)));
    let skip_center = n % 2 == 1;
    out.extend(
        pos.iter()
            .rev()
            .skip(usize::from(skip_center))
            .map(|&(z, w)| (z, w)),
    );
    out
}

/// Per-axis metadata kept alongside a grid for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisInfo {
    pub kind: RuleKind,
    pub points: usize,
    pub deweighted: bool,
}

/// Tensor-product quadrature grid: one row of `points` per node.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub points: Array2<f64>,
    pub weights: Array1<f64>,
    pub axes: Vec<AxisInfo>,
}

impl QuadratureGrid {
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points
            .rows()
            .into_iter()
            .zip(self.weights.iter())
            .map(|(x, &w)| w * f(x.as_slice().expect("grid rows are contiguous")))
            .sum()
    }

    /// Same grid with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut g = self.clone();
        g.weights.mapv_inplace(|w| w * factor);
        g
    }
}

pub fn tensor_grid(rules: &[Rule1D]) -> Result<QuadratureGrid> {
    tensor_grid_with_budget(rules, DEFAULT_POINT_BUDGET)
}

/// Cartesian product of `rules`, dimension 0 varying slowest.
pub fn tensor_grid_with_budget(rules: &[Rule1D], budget: usize) -> Result<QuadratureGrid> {
    if rules.is_empty() {
        return Err(Error::InvalidArgument(
            "tensor grid needs at least one rule".into(),
        ));
    }
    if rules.iter().any(Rule1D::is_empty) {
        return Err(Error::InvalidArgument("empty 1-D rule".into()));
    }
    let count = rules
        .iter()
        .try_fold(1usize, |acc, r| acc.checked_mul(r.len()))
        .unwrap_or(usize::MAX);
    if count > budget {
        return Err(Error::PointBudgetExceeded {
            points: count,
            budget,
        });
    }

    let d = rules.len();
    let mut points = Array2::zeros((count, d));
    let mut weights = Array1::zeros(count);
    let mut idx = vec![0usize; d];
    for p in 0..count {
        let mut w = 1.0;
        for (axis, rule) in rules.iter().enumerate() {
            points[[p, axis]] = rule.nodes[idx[axis]];
            w *= rule.weights[idx[axis]];
        }
        weights[p] = w;
        for axis in (0..d).rev() {
            idx[axis] += 1;
            if idx[axis] < rules[axis].len() {
                break;
            }
            idx[axis] = 0;
        }
    }
    let axes = rules
        .iter()
        .map(|r| AxisInfo {
            kind: r.kind,
            points: r.len(),
            deweighted: r.deweighted,
        })
        .collect();
    Ok(QuadratureGrid {
        points,
        weights,
        axes,
    })
}
