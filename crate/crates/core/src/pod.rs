//! Proper orthogonal decomposition of a trained basis.
//!
//! Given the Gram matrix `ℳ` of the `M` basis functions in some inner
//! product, the eigenpairs `ℳ ū_j = λ_j ū_j` give POD modes
//! `u_j = ū_j / √λ_j`, which are `ℳ`-orthonormal. The reduced basis is
//! `ψ = Uᵀφ` with `U = [u_1, …, u_K]`, and `K` is the smallest `N` whose
//! energy indicator reaches `1 − γ`.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::assembly::{MatrixLabel, SymMatrix};
use crate::error::{Error, Result};
use crate::linalg;

/// How the energy indicator accumulates the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorKind {
    /// `I(N) = Σ_{j≤N} √λ_j / Σ_j √λ_j`.
    #[default]
    Sqrt,
    /// `I(N) = Σ_{j≤N} λ_j / Σ_j λ_j`.
    Plain,
}

/// Which Gram matrix defines the POD inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PodGram {
    /// `ℳ = B` (L² inner product).
    #[default]
    Mass,
    /// `ℳ = A` (energy inner product).
    Stiffness,
}

impl PodGram {
    pub fn as_str(self) -> &'static str {
        match self {
            PodGram::Mass => "mass",
            PodGram::Stiffness => "stiffness",
        }
    }
}

impl std::str::FromStr for PodGram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mass" => Ok(PodGram::Mass),
            "stiffness" => Ok(PodGram::Stiffness),
            other => Err(Error::InvalidArgument(format!(
                "unknown POD Gram `{other}` (expected mass or stiffness)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionResult {
    /// `M × K` mode matrix `U`.
    #[serde(skip)]
    pub modes: Array2<f64>,
    /// All `M` Gram eigenvalues, descending.
    pub gram_eigs: Vec<f64>,
    /// Reduced dimension `K`.
    pub k: usize,
    /// `I(N)` for `N = 1..=P`, `P` the number of retained positive eigenvalues.
    pub indicator: Vec<f64>,
    pub gamma: f64,
    pub indicator_kind: IndicatorKind,
    /// Eigenvalues excluded from the indicator because they were not positive
    /// (or fell under the relative floor).
    pub dropped_nonpositive: usize,
    /// Relative floor applied to the spectrum (`λ ≤ floor·λ_max` is dropped).
    pub relative_floor: f64,
}

/// Default relative floor `M·ε`: eigenvalues below `M·ε·λ_max` are
/// indistinguishable from rounding in the eigensolver and are treated like
/// non-positive ones.
pub fn default_floor(m: usize) -> f64 {
    m as f64 * f64::EPSILON
}

/// POD with non-positive and rounding-level eigenvalues dropped.
pub fn pod_reduce(gram: &SymMatrix, gamma: f64, kind: IndicatorKind) -> Result<ReductionResult> {
    pod_reduce_with_floor(gram, gamma, kind, default_floor(gram.order()))
}

fn check_parameters(gamma: f64, relative_floor: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if !(0.0..1.0).contains(&relative_floor) {
        return Err(Error::InvalidArgument(format!(
            "relative floor must lie in [0, 1), got {relative_floor}"
        )));
    }
    Ok(())
}

/// POD that also drops eigenvalues `λ ≤ relative_floor · λ_max`.
pub fn pod_reduce_with_floor(
    gram: &SymMatrix,
    gamma: f64,
    kind: IndicatorKind,
    relative_floor: f64,
) -> Result<ReductionResult> {
    check_parameters(gamma, relative_floor)?;
    gram.check_finite("POD Gram matrix")?;
    let spectrum = linalg::sym_eig(gram.view())?;
    let m = gram.order();

    // Descending order; the stable sort keeps ties in index order.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| spectrum.values[j].total_cmp(&spectrum.values[i]));
    let gram_eigs: Vec<f64> = order.iter().map(|&i| spectrum.values[i]).collect();
    let vectors = Array2::from_shape_fn((m, m), |(r, c)| spectrum.vectors[[r, order[c]]]);
    select_modes(gram_eigs, vectors.view(), gamma, kind, relative_floor)
}

/// Default floor for [`pod_reduce_snapshots`]: singular values below
/// `M·ε·σ_max`, i.e. Gram eigenvalues below `(M·ε)²·λ_max`, are rounding.
pub fn default_snapshot_floor(m: usize) -> f64 {
    default_floor(m).powi(2)
}

/// POD of the Gram matrix `ℳ = XᵀX` given the snapshot matrix `X` (rows are
/// weighted samples, columns the `M` basis functions) without forming `ℳ`.
///
/// The eigenpairs of `ℳ` are the squared singular values and right singular
/// vectors of `X`. Going through the SVD resolves Gram eigenvalues down to
/// about `ε²·λ_max` instead of `ε·λ_max`, which is what makes the small
/// but significant directions of a nearly dependent basis usable.
pub fn pod_reduce_snapshots(
    snapshots: ArrayView2<f64>,
    gamma: f64,
    kind: IndicatorKind,
    relative_floor: f64,
) -> Result<ReductionResult> {
    check_parameters(gamma, relative_floor)?;
    let svd = linalg::svd_right(snapshots)?;
    let gram_eigs: Vec<f64> = svd.values.iter().map(|s| s * s).collect();
    select_modes(gram_eigs, svd.vectors.view(), gamma, kind, relative_floor)
}

/// Energy indicator, `K`, and scaled modes from a descending spectrum with
/// matching eigenvector columns.
fn select_modes(
    gram_eigs: Vec<f64>,
    vectors: ArrayView2<f64>,
    gamma: f64,
    kind: IndicatorKind,
    relative_floor: f64,
) -> Result<ReductionResult> {
    let m = gram_eigs.len();
    let lambda_max = gram_eigs.first().copied().unwrap_or(0.0);
    if !(lambda_max > 0.0) {
        return Err(Error::UnusableBasis);
    }
    let cutoff = relative_floor * lambda_max;
    let kept = gram_eigs
        .iter()
        .take_while(|&&l| l > 0.0 && l > cutoff)
        .count();
    let dropped = m - kept;

    let energy: Vec<f64> = gram_eigs[..kept]
        .iter()
        .map(|&l| match kind {
            IndicatorKind::Sqrt => l.sqrt(),
            IndicatorKind::Plain => l,
        })
        .collect();
    let total: f64 = energy.iter().sum();
    let mut running = 0.0;
    let indicator: Vec<f64> = energy
        .iter()
        .map(|e| {
            running += e;
            running / total
        })
        .collect();
    let k = indicator
        .iter()
        .position(|&i| i >= 1.0 - gamma)
        .map_or(kept, |p| p + 1);

    let mut modes = Array2::zeros((vectors.nrows(), k));
    for (j, lambda) in gram_eigs.iter().take(k).enumerate() {
        let scale = 1.0 / lambda.sqrt();
        modes
            .column_mut(j)
            .assign(&vectors.column(j).mapv(|v| v * scale));
    }

    Ok(ReductionResult {
        modes,
        gram_eigs,
        k,
        indicator,
        gamma,
        indicator_kind: kind,
        dropped_nonpositive: dropped,
        relative_floor,
    })
}

/// `Ā = UᵀAU`, `B̄ = UᵀBU`.
pub fn reduced_matrices(
    a: &SymMatrix,
    b: &SymMatrix,
    u: ArrayView2<f64>,
) -> (SymMatrix, SymMatrix) {
    (
        a.congruence(u, MatrixLabel::ReducedStiffness),
        b.congruence(u, MatrixLabel::ReducedMass),
    )
}

/// Coefficients in the original basis: `W = U C` (columns are eigenvectors).
pub fn lift_coefficients(u: ArrayView2<f64>, c: ArrayView2<f64>) -> Result<Array2<f64>> {
    if u.ncols() != c.nrows() {
        return Err(Error::InvalidArgument(format!(
            "mode matrix has {} columns, coefficients have {} rows",
            u.ncols(),
            c.nrows()
        )));
    }
    Ok(u.dot(&c))
}

/// `Σ_i ‖e_i − Π_K e_i‖²_ℳ` with `Π_K = U Uᵀ ℳ`, summed over the unit
/// coordinate vectors, computed directly rather than from the spectrum.
pub fn projection_error(gram: &SymMatrix, u: ArrayView2<f64>) -> f64 {
    let g = gram.view();
    let m = g.nrows();
    // R = I − U Uᵀ ℳ; the error is tr(Rᵀ ℳ R).
    let r = Array2::<f64>::eye(m) - u.dot(&u.t().dot(&g));
    let mr = g.dot(&r);
    (0..m).map(|j| r.column(j).dot(&mr.column(j))).sum()
}

/// Tail sum `Σ_{j>K} λ_j` over the positive spectrum.
pub fn tail_energy(result: &ReductionResult) -> f64 {
    result.gram_eigs[result.k..]
        .iter()
        .filter(|&&l| l > 0.0)
        .sum()
}

/// Gram eigenvalues as an array (descending).
pub fn gram_spectrum(result: &ReductionResult) -> Array1<f64> {
    Array1::from_vec(result.gram_eigs.clone())
}
