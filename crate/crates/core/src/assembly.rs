//! Mass and stiffness assembly by quadrature for
//! `a(u, v) = (α∇u, ∇v) + (βu, v)` and `b(u, v) = (u, v)`.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::basisnet::{BasisEval, CoefficientSet};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::QuadratureGrid;

/// Grid points summed directly before switching to pairwise combination.
const PAIRWISE_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixLabel {
    Stiffness,
    Mass,
    Gram,
    ReducedStiffness,
    ReducedMass,
    SmallStiffness,
    SmallMass,
}

/// Dense symmetric matrix; the upper triangle is computed and mirrored, so
/// `S[i][j] == S[j][i]` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub label: MatrixLabel,
    data: Array2<f64>,
}

impl SymMatrix {
    /// Mirrors the upper triangle of `data`.
    pub fn from_upper(label: MatrixLabel, data: Array2<f64>) -> Self {
        assert_eq!(
            data.nrows(),
            data.ncols(),
            "symmetric matrix must be square"
        );
        Self {
            label,
            data: linalg::symmetrize(data.view()),
        }
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn relabel(mut self, label: MatrixLabel) -> Self {
        self.label = label;
        self
    }

    /// `Gᵀ S G`, symmetrized.
    pub fn congruence(&self, g: ArrayView2<f64>, label: MatrixLabel) -> SymMatrix {
        SymMatrix::from_upper(label, g.t().dot(&self.data).dot(&g))
    }

    pub fn cond_number(&self) -> Result<f64> {
        linalg::cond_number(self.view())
    }

    pub(crate) fn check_finite(&self, what: &'static str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(Error::NonFinite {
                what,
                index: pos / self.order(),
            }),
            None => Ok(()),
        }
    }

    /// Writes `<stem>.bin` (row-major little-endian float64) and `<stem>.json`
    /// (`{"rows", "cols", "label", "dtype", "order"}`).
    pub fn write_dump(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * self.data.len());
        for v in self.data.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(format!("{stem}.bin")), bytes)?;
        let sidecar = serde_json::json!({
            "rows": self.order(),
            "cols": self.order(),
            "label": self.label,
            "dtype": "float64-le",
            "order": "row-major",
        });
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }
}

/// Scalar diffusion `α` and the potential `β = V` sampled on the grid.
#[derive(Debug, Clone)]
pub struct OperatorCoeffs {
    pub alpha: f64,
    pub potential: Array1<f64>,
}

impl OperatorCoeffs {
    pub fn new(alpha: f64, potential: Array1<f64>) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if let Some(i) = potential
            .iter()
            .position(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "potential must be finite and non-negative; got {} at point {i}",
                potential[i]
            )));
        }
        Ok(Self { alpha, potential })
    }

    /// Samples `v` once at every grid point.
    pub fn sampled(alpha: f64, grid: &QuadratureGrid, v: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let potential = grid
            .points
            .rows()
            .into_iter()
            .map(|x| v(x.as_slice().expect("grid rows are contiguous")))
            .collect();
        Self::new(alpha, potential)
    }

    pub fn laplace(alpha: f64, grid: &QuadratureGrid) -> Self {
        Self {
            alpha,
            potential: Array1::zeros(grid.len()),
        }
    }

    pub fn has_potential(&self) -> bool {
        self.potential.iter().any(|&v| v != 0.0)
    }
}

/// `Σ_l w_l x_l x_lᵀ` over the rows of `x`, combined pairwise over row blocks.
pub(crate) fn weighted_gram(x: ArrayView2<f64>, w: ArrayView1<f64>) -> Array2<f64> {
    let n = x.nrows();
    if n <= PAIRWISE_BLOCK {
        let scaled = &x * &w.insert_axis(Axis(1));
        return x.t().dot(&scaled);
    }
    let mid = n / 2;
    let left = weighted_gram(x.slice(s![..mid, ..]), w.slice(s![..mid]));
    let right = weighted_gram(x.slice(s![mid.., ..]), w.slice(s![mid..]));
    left + right
}

fn check_rows(basis: &BasisEval, grid: &QuadratureGrid) -> Result<()> {
    if basis.n_points() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "basis evaluated at {} points, grid has {}",
            basis.n_points(),
            grid.len()
        )));
    }
    Ok(())
}

fn stiffness_of(
    values: ArrayView2<f64>,
    gradients: &[Array2<f64>],
    grid: &QuadratureGrid,
    coeffs: &OperatorCoeffs,
) -> Array2<f64> {
    let aw = grid.weights.mapv(|w| coeffs.alpha * w);
    let mut a = gradients
        .iter()
        .map(|g| weighted_gram(g.view(), aw.view()))
        .reduce(|x, y| x + y)
        .expect("at least one spatial dimension");
    if coeffs.has_potential() {
        let vw = &grid.weights * &coeffs.potential;
        a += &weighted_gram(values, vw.view());
    }
    a
}

/// `B = Φᵀ diag(ρ) Φ`.
pub fn assemble_mass(basis: &BasisEval, grid: &QuadratureGrid) -> Result<SymMatrix> {
    check_rows(basis, grid)?;
    let b = SymMatrix::from_upper(
        MatrixLabel::Mass,
        weighted_gram(basis.values.view(), grid.weights.view()),
    );
    b.check_finite("mass matrix")?;
    Ok(b)
}

/// `A_ij = Σ_l ρ_l (α ∇φ_i·∇φ_j + V φ_i φ_j)`.
pub fn assemble_stiffness(
    basis: &BasisEval,
    grid: &QuadratureGrid,
    coeffs: &OperatorCoeffs,
) -> Result<SymMatrix> {
    check_rows(basis, grid)?;
    if coeffs.potential.len() != grid.len() {
        return Err(Error::InvalidArgument(
            "potential not sampled on this grid".into(),
        ));
    }
    let a = SymMatrix::from_upper(
        MatrixLabel::Stiffness,
        stiffness_of(basis.values.view(), &basis.gradients, grid, coeffs),
    );
    a.check_finite("stiffness matrix")?;
    Ok(a)
}

/// `k × k` stiffness and mass matrices of the trial functions `v_i = Φ w_i`,
/// computed from the combined fields without forming the `M × M` matrices.
pub fn small_grams(
    basis: &BasisEval,
    grid: &QuadratureGrid,
    coeffs: &OperatorCoeffs,
    w: &CoefficientSet,
) -> Result<(SymMatrix, SymMatrix)> {
    check_rows(basis, grid)?;
    if w.w.nrows() != basis.n_basis() {
        return Err(Error::InvalidArgument(format!(
            "coefficients have {} rows, basis has {} functions",
            w.w.nrows(),
            basis.n_basis()
        )));
    }
    let trial = basis.combine(w.w.view());
    let (a, b) = small_grams_of(&trial, grid, coeffs);
    let chol_ok = linalg::cholesky(b.view())
        .map(|c| c.min_pivot() > singular_threshold(&b))
        .unwrap_or(false);
    if !chol_ok {
        let min_eig = linalg::sym_eigvals(b.view())?[0];
        return Err(Error::SingularGram { min_eig });
    }
    Ok((a, b))
}

/// Pivot size below which a `k × k` Gram is treated as singular.
pub(crate) fn singular_threshold(b: &SymMatrix) -> f64 {
    let max_diag = b.view().diag().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    b.order() as f64 * f64::EPSILON * max_diag
}

/// Grams of already-combined trial fields.
pub(crate) fn small_grams_of(
    trial: &BasisEval,
    grid: &QuadratureGrid,
    coeffs: &OperatorCoeffs,
) -> (SymMatrix, SymMatrix) {
    let a = SymMatrix::from_upper(
        MatrixLabel::SmallStiffness,
        stiffness_of(trial.values.view(), &trial.gradients, grid, coeffs),
    );
    let b = SymMatrix::from_upper(
        MatrixLabel::SmallMass,
        weighted_gram(trial.values.view(), grid.weights.view()),
    );
    (a, b)
}
