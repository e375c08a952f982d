//! Benchmark eigenvalue problems and their analytic reference eigenpairs.

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::assembly::OperatorCoeffs;
use crate::basisnet::{BasisEval, Envelope};
use crate::error::{Error, Result};
use crate::quadrature::{
    gauss_hermite_1d, gauss_legendre_1d, tensor_grid, QuadratureGrid, RuleKind,
};

/// Relative gap below which consecutive reference eigenvalues form a cluster.
pub const CLUSTER_GAP: f64 = 1e-9;

/// Physicists' Hermite polynomial `H_n(x)` by the three-term recurrence.
pub fn hermite_poly(n: usize, x: f64) -> f64 {
    hermite_pair(n, x).0
}

/// `(H_n(x), H_{n−1}(x))`, with `H_{−1} = 0`.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for j in 0..n {
        let next = 2.0 * x * cur - 2.0 * j as f64 * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `h_n(z) = H_n(z) e^{−z²/2}` and its derivative `(2n H_{n−1}(z) − z H_n(z)) e^{−z²/2}`.
fn hermite_function(n: usize, z: f64) -> (f64, f64) {
    let (h, h_prev) = hermite_pair(n, z);
    let g = (-0.5 * z * z).exp();
    (h * g, (2.0 * n as f64 * h_prev - z * h) * g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Box { lower: [f64; 2], upper: [f64; 2] },
    Unbounded,
}

/// `V(x) = ½(a₁₁x₁² + 2a₁₂x₁x₂ + a₂₂x₂²)` or zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    Quadratic { a11: f64, a12: f64, a22: f64 },
}

impl Potential {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Quadratic { a11, a12, a22 } => {
                0.5 * (a11 * x[0] * x[0] + 2.0 * a12 * x[0] * x[1] + a22 * x[1] * x[1])
            }
        }
    }
}

/// Analytic eigenpairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// `sin(πn₁x₁) sin(πn₂x₂)` on the unit square, `λ = π²(n₁² + n₂²)`, `n ≥ 1`.
    LaplaceSquare,
    /// Products of Hermite functions in rotated coordinates `y = Qx` for
    /// `−½Δ + ½(μ₁y₁² + μ₂y₂²)`, `λ = (½+n₁)√μ₁ + (½+n₂)√μ₂`, `n ≥ 0`.
    Oscillator {
        mu: [f64; 2],
        rotation: [[f64; 2]; 2],
    },
}

/// One reference eigenpair, identified by its quantum numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefMode {
    pub n: (usize, usize),
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureDefault {
    pub kind: RuleKind,
    pub points_per_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub dim: usize,
    pub domain: Domain,
    pub alpha: f64,
    pub potential: Potential,
    pub envelope: Envelope,
    pub quadrature: QuadratureDefault,
    pub default_m: usize,
    pub default_k: usize,
    pub default_eps: f64,
    pub default_gamma: f64,
    pub reference: Reference,
}

pub const PROBLEM_NAMES: [&str; 3] = ["laplace2d", "ho-decoupled", "ho-coupled"];

/// `−Δu = λu` on `[0,1]²` with homogeneous Dirichlet conditions.
pub fn laplace2d() -> ProblemSpec {
    ProblemSpec {
        name: "laplace2d",
        dim: 2,
        domain: Domain::Box {
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
        },
        alpha: 1.0,
        potential: Potential::Zero,
        envelope: Envelope::unit_box(2),
        quadrature: QuadratureDefault {
            kind: RuleKind::Legendre,
            points_per_dim: 32,
        },
        default_m: 300,
        default_k: 15,
        default_eps: 1e-3,
        default_gamma: 1e-11,
        reference: Reference::LaplaceSquare,
    }
}

/// `−½Δu + ½|x|²u = λu` on `ℝ²`.
pub fn decoupled_ho() -> ProblemSpec {
    ProblemSpec {
        name: "ho-decoupled",
        dim: 2,
        domain: Domain::Unbounded,
        alpha: 0.5,
        potential: Potential::Quadratic {
            a11: 1.0,
            a12: 0.0,
            a22: 1.0,
        },
        envelope: Envelope::Gaussian,
        quadrature: QuadratureDefault {
            kind: RuleKind::Hermite,
            points_per_dim: 99,
        },
        default_m: 900,
        default_k: 15,
        default_eps: 1e-2,
        default_gamma: 1e-10,
        reference: Reference::Oscillator {
            mu: [1.0, 1.0],
            rotation: [[1.0, 0.0], [0.0, 1.0]],
        },
    }
}

pub const COUPLED_A: [f64; 3] = [0.8851, -0.1382, 1.1933];
pub const COUPLED_MU: [f64; 2] = [0.8322071257, 1.2461928742];
pub const COUPLED_Q: [[f64; 2]; 2] = [
    [-0.9339352418, -0.3574422527],
    [0.3574422527, -0.9339352418],
];

/// `−½Δu + ½(a₁₁x₁² + 2a₁₂x₁x₂ + a₂₂x₂²)u = λu` on `ℝ²`.
pub fn coupled_ho() -> ProblemSpec {
    ProblemSpec {
        name: "ho-coupled",
        potential: Potential::Quadratic {
            a11: COUPLED_A[0],
            a12: COUPLED_A[1],
            a22: COUPLED_A[2],
        },
        reference: Reference::Oscillator {
            mu: COUPLED_MU,
            rotation: COUPLED_Q,
        },
        ..decoupled_ho()
    }
}

pub fn problem_by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "laplace2d" => Ok(laplace2d()),
        "ho-decoupled" => Ok(decoupled_ho()),
        "ho-coupled" => Ok(coupled_ho()),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

impl ProblemSpec {
    /// Tensor quadrature grid with `points` per dimension (default if `None`).
    pub fn grid(&self, points: Option<usize>) -> Result<QuadratureGrid> {
        let n = points.unwrap_or(self.quadrature.points_per_dim);
        let rule = match (self.quadrature.kind, self.domain) {
            (RuleKind::Legendre, Domain::Box { lower, upper }) => (0..self.dim)
                .map(|k| gauss_legendre_1d(n, lower[k], upper[k]))
                .collect::<Result<Vec<_>>>()?,
            (RuleKind::Hermite, _) => vec![gauss_hermite_1d(n, true)?; self.dim],
            (RuleKind::Legendre, Domain::Unbounded) => {
                return Err(Error::InvalidArgument(
                    "Legendre rule needs a bounded domain".into(),
                ))
            }
        };
        tensor_grid(&rule)
    }

    pub fn operator(&self, grid: &QuadratureGrid) -> Result<OperatorCoeffs> {
        match self.potential {
            Potential::Zero => Ok(OperatorCoeffs::laplace(self.alpha, grid)),
            p => OperatorCoeffs::sampled(self.alpha, grid, |x| p.eval(x)),
        }
    }

    /// The first `k` reference eigenpairs in the benchmark ordering.
    pub fn reference_modes(&self, k: usize) -> Vec<RefMode> {
        // Every mode among the first k has n₁, n₂ < k + 1.
        let lo = match self.reference {
            Reference::LaplaceSquare => 1,
            Reference::Oscillator { .. } => 0,
        };
        let mut modes: Vec<RefMode> = (lo..lo + k + 1)
            .flat_map(|n1| (lo..lo + k + 1).map(move |n2| (n1, n2)))
            .map(|n| RefMode {
                n,
                lambda: self.eigenvalue(n),
            })
            .collect();
        let laplace = matches!(self.reference, Reference::LaplaceSquare);
        modes.sort_by(|a, b| {
            a.lambda.total_cmp(&b.lambda).then_with(|| {
                if laplace {
                    b.n.0.cmp(&a.n.0)
                } else {
                    a.n.0.cmp(&b.n.0)
                }
            })
        });
        modes.truncate(k);
        modes
    }

    pub fn eigenvalue(&self, n: (usize, usize)) -> f64 {
        match self.reference {
            Reference::LaplaceSquare => PI * PI * (n.0 * n.0 + n.1 * n.1) as f64,
            Reference::Oscillator { mu: [1.0, 1.0], .. } => (n.0 + n.1 + 1) as f64,
            Reference::Oscillator { mu, .. } => {
                (0.5 + n.0 as f64) * mu[0].sqrt() + (0.5 + n.1 as f64) * mu[1].sqrt()
            }
        }
    }

    /// Unnormalized eigenfunction value and gradient at `x`.
    pub fn eigenfunction(&self, n: (usize, usize), x: &[f64]) -> (f64, [f64; 2]) {
        match self.reference {
            Reference::LaplaceSquare => {
                let (k1, k2) = (PI * n.0 as f64, PI * n.1 as f64);
                let (s1, c1) = (k1 * x[0]).sin_cos();
                let (s2, c2) = (k2 * x[1]).sin_cos();
                (s1 * s2, [k1 * c1 * s2, k2 * s1 * c2])
            }
            Reference::Oscillator { mu, rotation: q } => {
                let y = [
                    q[0][0] * x[0] + q[0][1] * x[1],
                    q[1][0] * x[0] + q[1][1] * x[1],
                ];
                let s = [mu[0].powf(0.25), mu[1].powf(0.25)];
                let (f1, d1) = hermite_function(n.0, s[0] * y[0]);
                let (f2, d2) = hermite_function(n.1, s[1] * y[1]);
                let gy = [s[0] * d1 * f2, s[1] * f1 * d2];
                // ∇ₓ = Qᵀ ∇_y
                (
                    f1 * f2,
                    [
                        q[0][0] * gy[0] + q[1][0] * gy[1],
                        q[0][1] * gy[0] + q[1][1] * gy[1],
                    ],
                )
            }
        }
    }

    /// Reference eigenfunctions on `points`, each scaled to unit quadrature
    /// `b`-norm on `grid` (which must contain the same points).
    pub fn reference_fields(&self, modes: &[RefMode], grid: &QuadratureGrid) -> BasisEval {
        let fields = self.sample_modes(modes, grid.points.view());
        let norms: Vec<f64> = (0..modes.len())
            .map(|j| {
                fields
                    .values
                    .column(j)
                    .iter()
                    .zip(grid.weights.iter())
                    .map(|(v, w)| w * v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let scale = |mut m: Array2<f64>| {
            for (j, nj) in norms.iter().enumerate() {
                m.column_mut(j).mapv_inplace(|v| v / nj);
            }
            m
        };
        BasisEval {
            values: scale(fields.values),
            gradients: fields.gradients.into_iter().map(scale).collect(),
        }
    }

    fn sample_modes(&self, modes: &[RefMode], points: ArrayView2<f64>) -> BasisEval {
        let n = points.nrows();
        let k = modes.len();
        let mut values = Array2::zeros((n, k));
        let mut gradients = vec![Array2::zeros((n, k)); 2];
        for (i, x) in points.rows().into_iter().enumerate() {
            let x = x.as_slice().expect("grid rows are contiguous");
            for (j, m) in modes.iter().enumerate() {
                let (v, g) = self.eigenfunction(m.n, x);
                values[[i, j]] = v;
                gradients[0][[i, j]] = g[0];
                gradients[1][[i, j]] = g[1];
            }
        }
        BasisEval { values, gradients }
    }
}

/// Index ranges of consecutive eigenvalues whose relative gap is below
/// [`CLUSTER_GAP`]; singletons appear as length-one ranges.
pub fn clusters(lambdas: &[f64]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=lambdas.len() {
        let split = i == lambdas.len()
            || (lambdas[i] - lambdas[i - 1]).abs()
                >= CLUSTER_GAP * lambdas[i].abs().max(lambdas[i - 1].abs());
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::small_grams;
    use crate::basisnet::CoefficientSet;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_values() {
        assert_eq!(hermite_poly(0, 7.3), 1.0);
        assert_eq!(hermite_poly(1, 3.0), 6.0);
        assert_eq!(hermite_poly(2, 1.0), 2.0);
        assert_eq!(hermite_poly(3, 2.0), 40.0);
        // H₄(x) = 16x⁴ − 48x² + 12
        assert_abs_diff_eq!(
            hermite_poly(4, 0.5),
            16.0 / 16.0 - 12.0 + 12.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hermite_function_derivative() {
        for n in 0..6 {
            for &z in &[-2.1, -0.3, 0.0, 0.7, 3.2] {
                let h = 1e-6;
                let fd = (hermite_function(n, z + h).0 - hermite_function(n, z - h).0) / (2.0 * h);
                assert_abs_diff_eq!(hermite_function(n, z).1, fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn laplace_ordering_and_values() {
        let modes = laplace2d().reference_modes(15);
        let expect = [
            (1, 1),
            (2, 1),
            (1, 2),
            (2, 2),
            (3, 1),
            (1, 3),
            (3, 2),
            (2, 3),
            (4, 1),
            (1, 4),
            (3, 3),
            (4, 2),
            (2, 4),
            (4, 3),
            (3, 4),
        ];
        assert_eq!(modes.iter().map(|m| m.n).collect::<Vec<_>>(), expect);
        assert_abs_diff_eq!(modes[0].lambda, 19.739208802178716, epsilon = 1e-12);
        assert_eq!(modes[1].lambda, modes[2].lambda);
        assert_abs_diff_eq!(modes[1].lambda, 5.0 * PI * PI, epsilon = 1e-12);
    }

    #[test]
    fn oscillator_orderings() {
        let d: Vec<_> = decoupled_ho()
            .reference_modes(15)
            .iter()
            .map(|m| m.n)
            .collect();
        assert_eq!(
            d,
            vec![
                (0, 0),
                (0, 1),
                (1, 0),
                (0, 2),
                (1, 1),
                (2, 0),
                (0, 3),
                (1, 2),
                (2, 1),
                (3, 0),
                (0, 4),
                (1, 3),
                (2, 2),
                (3, 1),
                (4, 0)
            ]
        );
        let lambdas: Vec<f64> = decoupled_ho()
            .reference_modes(15)
            .iter()
            .map(|m| m.lambda)
            .collect();
        assert_eq!(&lambdas[..3], &[1.0, 2.0, 2.0]);

        let c: Vec<_> = coupled_ho()
            .reference_modes(15)
            .iter()
            .map(|m| m.n)
            .collect();
        assert_eq!(
            c,
            vec![
                (0, 0),
                (1, 0),
                (0, 1),
                (2, 0),
                (1, 1),
                (0, 2),
                (3, 0),
                (2, 1),
                (1, 2),
                (0, 3),
                (4, 0),
                (3, 1),
                (2, 2),
                (1, 3),
                (0, 4)
            ]
        );
        let l1 = coupled_ho().reference_modes(1)[0].lambda;
        assert_abs_diff_eq!(
            l1,
            0.5 * (COUPLED_MU[0].sqrt() + COUPLED_MU[1].sqrt()),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(l1, 1.014292, epsilon = 1e-6);
    }

    #[test]
    fn rotation_is_orthogonal_and_diagonalizes_potential() {
        let q = COUPLED_Q;
        for i in 0..2 {
            for j in 0..2 {
                let qqt: f64 = (0..2).map(|k| q[i][k] * q[j][k]).sum();
                assert_abs_diff_eq!(qqt, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-9);
                let recon: f64 = (0..2).map(|k| q[k][i] * COUPLED_MU[k] * q[k][j]).sum();
                let a = [[COUPLED_A[0], COUPLED_A[1]], [COUPLED_A[1], COUPLED_A[2]]];
                assert_abs_diff_eq!(recon, a[i][j], epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn clusters_are_found() {
        let l = laplace2d()
            .reference_modes(15)
            .iter()
            .map(|m| m.lambda)
            .collect::<Vec<_>>();
        let c = clusters(&l);
        assert_eq!(c[0], 0..1);
        assert_eq!(c[1], 1..3);
        assert_eq!(c[2], 3..4);
        assert_eq!(c.iter().map(|r| r.len()).sum::<usize>(), 15);
        assert!(clusters(&[]).is_empty());
        assert_eq!(clusters(&[1.0, 1.0 + 1e-12, 2.0]), vec![0..2, 2..3]);
        let c = clusters(
            &coupled_ho()
                .reference_modes(15)
                .iter()
                .map(|m| m.lambda)
                .collect::<Vec<_>>(),
        );
        assert_eq!(c.len(), 15);
    }

    /// Rayleigh quotient of each normalized reference on the default grid.
    fn rayleigh_check(spec: &ProblemSpec, k: usize, tol: f64) {
        let grid = spec.grid(None).unwrap();
        let coeffs = spec.operator(&grid).unwrap();
        let modes = spec.reference_modes(k);
        let fields = spec.reference_fields(&modes, &grid);
        for (j, m) in modes.iter().enumerate() {
            let mut w = Array2::zeros((k, 1));
            w[[j, 0]] = 1.0;
            let (a, b) = small_grams(&fields, &grid, &coeffs, &CoefficientSet { w }).unwrap();
            assert_abs_diff_eq!(b.view()[[0, 0]], 1.0, epsilon = 1e-13);
            let rq = a.view()[[0, 0]] / b.view()[[0, 0]];
            assert!(
                (rq - m.lambda).abs() <= tol * m.lambda,
                "{} {:?}: {rq} vs {}",
                spec.name,
                m.n,
                m.lambda
            );
        }
    }

    #[test]
    fn references_have_exact_rayleigh_quotients() {
        rayleigh_check(&laplace2d(), 15, 1e-8);
        rayleigh_check(&decoupled_ho(), 15, 1e-8);
        // The printed rotation and μ values are consistent only to about
        // 1e-9, which bounds how exact the coupled references can be.
        rayleigh_check(&coupled_ho(), 15, 1e-8);
    }

    #[test]
    fn references_are_orthonormal_on_the_grid() {
        for spec in [laplace2d(), decoupled_ho(), coupled_ho()] {
            let grid = spec.grid(None).unwrap();
            let modes = spec.reference_modes(15);
            let f = spec.reference_fields(&modes, &grid);
            let g = crate::assembly::assemble_mass(&f, &grid).unwrap();
            for i in 0..15 {
                for j in 0..15 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(g.view()[[i, j]], e, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn ground_state_of_sin_product_is_two_pi_squared() {
        let spec = laplace2d();
        let grid = spec.grid(None).unwrap();
        let f = spec.reference_fields(&spec.reference_modes(1), &grid);
        let coeffs = spec.operator(&grid).unwrap();
        let loss = crate::training::trace_of(&f, &grid, &coeffs).unwrap();
        assert_abs_diff_eq!(loss, 2.0 * PI * PI, epsilon = 1e-9);
    }

    #[test]
    fn names() {
        for n in PROBLEM_NAMES {
            assert_eq!(problem_by_name(n).unwrap().name, n);
        }
        assert!(matches!(
            problem_by_name("helmholtz"),
            Err(Error::UnknownProblem(_))
        ));
        assert!(laplace2d().grid(Some(0)).is_err());
    }
}
