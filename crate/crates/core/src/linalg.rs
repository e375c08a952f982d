//! Dense symmetric eigensolver, Cholesky factorization and the
//! symmetric-definite generalized eigenproblem.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const JACOBI_MAX_SWEEPS: usize = 64;
pub const JACOBI_REL_TOL: f64 = 1e-14;

/// Eigenvalues in ascending order with eigenvectors stored column-wise.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
    /// `max_i ‖S v_i − λ_i v_i‖₂` for a standard problem, or
    /// `max_i ‖A v_i − λ_i B v_i‖₂` for a generalized one.
    pub residual_bound: f64,
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(s: ArrayView2<f64>) -> Result<Spectrum> {
    let (values, vectors) = jacobi(s, true)?;
    let vectors = vectors.expect("vectors requested");
    let residual_bound = standard_residual(s, &values, &vectors);
    Ok(Spectrum {
        values,
        vectors,
        residual_bound,
    })
}

/// Eigenvalues only, ascending.
pub fn sym_eigvals(s: ArrayView2<f64>) -> Result<Array1<f64>> {
    Ok(jacobi(s, false)?.0)
}

fn check_square(s: &ArrayView2<f64>) -> Result<usize> {
    let (r, c) = s.dim();
    if r != c {
        return Err(Error::InvalidArgument(format!(
            "matrix is {r}x{c}, not square"
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    Ok(r)
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += a[i * n + j] * a[i * n + j];
        }
    }
    (2.0 * sum).sqrt()
}

fn jacobi(s: ArrayView2<f64>, want_vectors: bool) -> Result<(Array1<f64>, Option<Array2<f64>>)> {
    let n = check_square(&s)?;
    // Work on the upper triangle, mirrored, so the input need not be exactly symmetric.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            a[i * n + j] = s[[i, j]];
            a[j * n + i] = s[[i, j]];
        }
    }
    // Row i of `v` is the i-th eigenvector.
    let mut v = if want_vectors {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    } else {
        Vec::new()
    };

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_REL_TOL * frob;
    let mut converged = n <= 1;
    let mut off;

    for sweep in 1..=JACOBI_MAX_SWEEPS {
        off = off_diagonal_norm(&a, n);
        if off <= tol {
            converged = true;
            break;
        }
        let threshold = if sweep < 4 {
            let sum_abs: f64 = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j].abs())
                .sum();
            0.2 * sum_abs / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if sweep > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= threshold || apq == 0.0 {
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[p * n + r];
                    let arq = a[q * n + r];
                    let np = arp - sn * (arq + arp * tau);
                    let nq = arq + sn * (arp - arq * tau);
                    a[p * n + r] = np;
                    a[q * n + r] = nq;
                    a[r * n + p] = np;
                    a[r * n + q] = nq;
                }
                if want_vectors {
                    let (head, tail) = v.split_at_mut(q * n);
                    let vp = &mut head[p * n..(p + 1) * n];
                    let vq = &mut tail[..n];
                    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                        let xp = *x;
                        let xq = *y;
                        *x = xp - sn * (xq + xp * tau);
                        *y = xq + sn * (xp - xq * tau);
                    }
                }
            }
        }
    }
    if !converged {
        off = off_diagonal_norm(&a, n);
        if off > tol {
            return Err(Error::NoConvergence {
                sweeps: JACOBI_MAX_SWEEPS,
                off_norm: off,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[i * n + i]));
    let vectors = want_vectors.then(|| {
        let mut out = Array2::zeros((n, n));
        for (col, &i) in order.iter().enumerate() {
            for r in 0..n {
                out[[r, col]] = v[i * n + r];
            }
        }
        out
    });
    Ok((values, vectors))
}

fn standard_residual(s: ArrayView2<f64>, values: &Array1<f64>, vectors: &Array2<f64>) -> f64 {
    let sv = symmetric_view_dot(s, vectors);
    column_residual(&sv, vectors, values)
}

/// `S·V` using only the upper triangle of `S`.
fn symmetric_view_dot(s: ArrayView2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let sym = symmetrize(s);
    sym.dot(v)
}

fn column_residual(lhs: &Array2<f64>, rhs: &Array2<f64>, values: &Array1<f64>) -> f64 {
    lhs.axis_iter(Axis(1))
        .zip(rhs.axis_iter(Axis(1)))
        .zip(values.iter())
        .map(|((l, r), &lam)| {
            l.iter()
                .zip(r.iter())
                .map(|(x, y)| (x - lam * y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Upper triangle mirrored into a full symmetric matrix.
pub fn symmetrize(s: ArrayView2<f64>) -> Array2<f64> {
    let n = s.nrows();
    let mut out = s.to_owned();
    for i in 0..n {
        for j in (i + 1)..n {
            out[[j, i]] = out[[i, j]];
        }
    }
    out
}

/// Lower-triangular Cholesky factor `L` with `B = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    pub l: Array2<f64>,
}

pub fn cholesky(b: ArrayView2<f64>) -> Result<Cholesky> {
    let n = check_square(&b)?;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let row_j = l.row(j);
        let sq: f64 = row_j.iter().take(j).map(|x| x * x).sum();
        let pivot = b[[j, j]] - sq;
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite {
                index: j,
                value: pivot,
            });
        }
        let d = pivot.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let dot: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            // upper triangle of b is authoritative
            l[[i, j]] = (b[[j, i]] - dot) / d;
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn order(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `L X = rhs`.
    pub fn forward(&self, rhs: ArrayView2<f64>) -> Array2<f64> {
        let n = self.order();
        let mut x = rhs.to_owned();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[[i, k]];
                if lik != 0.0 {
                    let (done, mut cur) = x.view_mut().split_at(Axis(0), i);
                    cur.row_mut(0).scaled_add(-lik, &done.row(k));
                }
            }
            let d = self.l[[i, i]];
            x.row_mut(i).mapv_inplace(|v| v / d);
        }
        x
    }

    /// Solves `Lᵀ X = rhs`.
    pub fn backward(&self, rhs: ArrayView2<f64>) -> Array2<f64> {
        let n = self.order();
        let mut x = rhs.to_owned();
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[[k, i]];
                if lki != 0.0 {
                    let (mut head, tail) = x.view_mut().split_at(Axis(0), i + 1);
                    head.row_mut(i).scaled_add(-lki, &tail.row(k - i - 1));
                }
            }
            let d = self.l[[i, i]];
            x.row_mut(i).mapv_inplace(|v| v / d);
        }
        x
    }

    /// Solves `B X = rhs`.
    pub fn solve(&self, rhs: ArrayView2<f64>) -> Array2<f64> {
        let y = self.forward(rhs);
        self.backward(y.view())
    }

    pub fn min_pivot(&self) -> f64 {
        self.l
            .diag()
            .iter()
            .map(|d| d * d)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Triangular factor of the Householder QR of a tall `n × k` matrix `X`,
/// returned as the lower factor `L = Rᵀ` with a non-negative diagonal, so
/// that `XᵀX = L Lᵀ` without ever forming `XᵀX`.
pub fn qr_factor(x: ArrayView2<f64>) -> Result<Cholesky> {
    let (n, k) = x.dim();
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "QR of a {n} x {k} matrix needs n >= k"
        )));
    }
    // columns stored contiguously
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| x.column(j).to_vec()).collect();
    let mut l = Array2::<f64>::zeros((k, k));
    for j in 0..k {
        let (head, tail) = cols.split_at_mut(j + 1);
        let v = &mut head[j][j..];
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                what: "QR input",
                index: j,
            });
        }
        if norm == 0.0 {
            continue;
        }
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        // R_jj = alpha; flip the sign of row j so the diagonal is positive
        let sign = if alpha < 0.0 { -1.0 } else { 1.0 };
        l[[j, j]] = alpha.abs();
        for (c, col) in tail.iter_mut().enumerate() {
            let col = &mut col[j..];
            let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (ci, vi) in col.iter_mut().zip(v.iter()) {
                *ci -= f * vi;
            }
            l[[j + 1 + c, j]] = sign * col[0];
        }
    }
    Ok(Cholesky { l })
}

/// Singular values (descending) and right singular vectors (columns).
#[derive(Debug, Clone)]
pub struct SingularValues {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Singular values and right singular vectors of an `m × n` matrix by
/// one-sided Jacobi rotations, after a Householder QR when `m > n`.
///
/// Unlike an eigendecomposition of `XᵀX`, small singular values are
/// resolved down to about `ε·σ_max` instead of `√ε·σ_max`.
pub fn svd_right(x: ArrayView2<f64>) -> Result<SingularValues> {
    let (m, n) = x.dim();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "SVD of a matrix with no columns".into(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "SVD input",
            index: 0,
        });
    }
    let mut cols: Vec<Vec<f64>> = if m > n {
        let r = qr_factor(x)?;
        // columns of R are the rows of L = Rᵀ
        r.l.outer_iter().map(|row| row.to_vec()).collect()
    } else {
        (0..n).map(|j| x.column(j).to_vec()).collect()
    };
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let rotate = |a: &mut [f64], b: &mut [f64], c: f64, s: f64| {
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            let (p, q) = (*x, *y);
            *x = c * p - s * q;
            *y = s * p + c * q;
        }
    };
    let mut converged = false;
    let mut worst = 0.0f64;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        worst = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let (lo, hi) = cols.split_at_mut(q);
                let (cp, cq) = (&mut lo[p], &mut hi[0]);
                let alpha = dot(cp, cp);
                let beta = dot(cq, cq);
                let gamma = dot(cp, cq);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                worst = worst.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cp, cq, c, s);
                let (vlo, vhi) = v.split_at_mut(q);
                rotate(&mut vlo[p], &mut vhi[0], c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            off_norm: worst,
        });
    }
    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let values = order.iter().map(|&i| norms[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[order[c]][r]);
    Ok(SingularValues { values, vectors })
}

/// Solves `A v = λ B v` for symmetric `A` and symmetric positive definite `B`.
/// Eigenvectors are returned B-orthonormal.
pub fn gen_sym_eig(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Spectrum> {
    check_pair(&a, &b)?;
    let chol = cholesky(b)?;
    let a_sym = symmetrize(a);
    let y = chol.forward(a_sym.view());
    let c = chol.forward(y.t());
    let c = symmetrize(c.view());
    let inner = sym_eig(c.view())?;
    let vectors = chol.backward(inner.vectors.view());
    let residual_bound = generalized_residual(&a_sym, b, &inner.values, &vectors);
    Ok(Spectrum {
        values: inner.values,
        vectors,
        residual_bound,
    })
}

/// Generalized solve through an eigendecomposition of `B`, discarding the
/// directions whose `B` eigenvalue is at or below `floor`. Used when `B` is
/// too ill-conditioned for a Cholesky factorization.
pub fn gen_sym_eig_pinv(a: ArrayView2<f64>, b: ArrayView2<f64>, floor: f64) -> Result<Spectrum> {
    check_pair(&a, &b)?;
    let a_sym = symmetrize(a);
    let bs = sym_eig(b)?;
    let keep: Vec<usize> = (0..bs.values.len())
        .filter(|&i| bs.values[i] > floor)
        .collect();
    if keep.is_empty() {
        return Err(Error::UnusableBasis);
    }
    let n = a.nrows();
    let mut t = Array2::zeros((n, keep.len()));
    for (c, &i) in keep.iter().enumerate() {
        let s = 1.0 / bs.values[i].sqrt();
        t.column_mut(c)
            .assign(&bs.vectors.column(i).mapv(|x| x * s));
    }
    let c = t.t().dot(&a_sym).dot(&t);
    let inner = sym_eig(symmetrize(c.view()).view())?;
    let vectors = t.dot(&inner.vectors);
    let residual_bound = generalized_residual(&a_sym, b, &inner.values, &vectors);
    Ok(Spectrum {
        values: inner.values,
        vectors,
        residual_bound,
    })
}

fn check_pair(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    let n = check_square(a)?;
    let m = check_square(b)?;
    if n != m {
        return Err(Error::InvalidArgument(format!(
            "matrix pair has mismatched orders {n} and {m}"
        )));
    }
    Ok(())
}

fn generalized_residual(
    a: &Array2<f64>,
    b: ArrayView2<f64>,
    values: &Array1<f64>,
    vectors: &Array2<f64>,
) -> f64 {
    let av = a.dot(vectors);
    let bv = symmetrize(b).dot(vectors);
    column_residual(&av, &bv, values)
}

/// `max|λ| / min|λ|`; `+∞` when the smallest magnitude is exactly zero.
pub fn cond_number(s: ArrayView2<f64>) -> Result<f64> {
    let vals = sym_eigvals(s)?;
    let (lo, hi) = vals
        .iter()
        .map(|v| v.abs())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if vals.is_empty() {
        return Ok(f64::NAN);
    }
    if lo == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_recovers_graded_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 8;
        let q1 = orthonormal(&mut rng, 30, n);
        let q2 = orthonormal(&mut rng, n, n);
        let sigma: Vec<f64> = (0..n).map(|i| 10f64.powi(-2 * i as i32)).collect();
        let x = q1
            .dot(&Array2::from_diag(&Array1::from(sigma.clone())))
            .dot(&q2.t());
        let svd = svd_right(x.view()).unwrap();
        for (got, want) in svd.values.iter().zip(&sigma) {
            // absolute accuracy about ε·σ_max
            assert_abs_diff_eq!(got, want, epsilon = 1e-14);
        }
        for (got, want) in svd.values.iter().zip(&sigma).take(5) {
            assert!(((got - want) / want).abs() < 1e-4);
        }
        let xv = x.dot(&svd.vectors);
        for j in 0..n {
            let c = xv.column(j);
            assert_abs_diff_eq!(c.dot(&c).sqrt(), svd.values[j], epsilon = 1e-14);
        }
        let vtv = svd.vectors.t().dot(&svd.vectors);
        assert_abs_diff_eq!(
            (&vtv - &Array2::<f64>::eye(n))
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs())),
            0.0,
            epsilon = 1e-13
        );
    }

    fn orthonormal(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Array2<f64> {
        let x = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
        let l = qr_factor(x.view()).unwrap();
        l.forward(x.t()).reversed_axes()
    }

    #[test]
    fn qr_factor_matches_cholesky_of_normal_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((40, 6), |_| rng.random_range(-1.0..1.0));
        let q = qr_factor(x.view()).unwrap();
        let c = cholesky(x.t().dot(&x).view()).unwrap();
        for (a, b) in q.l.iter().zip(c.l.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut s = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.random_range(-1.0..1.0);
                s[[i, j]] = v;
                s[[j, i]] = v;
            }
        }
        s
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let g = random_sym(n, rng);
        let mut b = g.t().dot(&g);
        for i in 0..n {
            b[[i, i]] += 0.5;
        }
        symmetrize(b.view())
    }

    /// Determinant of `S − x I` via Gaussian elimination with partial pivoting.
    fn char_poly(s: &Array2<f64>, x: f64) -> f64 {
        let n = s.nrows();
        let mut m = s.clone();
        for i in 0..n {
            m[[i, i]] -= x;
        }
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))
                .unwrap();
            if m[[p, c]] == 0.0 {
                return 0.0;
            }
            if p != c {
                for k in 0..n {
                    m.swap([p, k], [c, k]);
                }
                det = -det;
            }
            det *= m[[c, c]];
            for r in (c + 1)..n {
                let f = m[[r, c]] / m[[c, c]];
                for k in c..n {
                    m[[r, k]] -= f * m[[c, k]];
                }
            }
        }
        det
    }

    /// Eigenvalues as sign changes of the characteristic polynomial, refined by bisection.
    fn char_poly_roots(s: &Array2<f64>) -> Vec<f64> {
        let bound = s.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        let steps = 20000;
        let h = 2.0 * bound / steps as f64;
        let mut roots = Vec::new();
        let mut x0 = -bound;
        let mut f0 = char_poly(s, x0);
        for i in 1..=steps {
            let x1 = -bound + i as f64 * h;
            let f1 = char_poly(s, x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if f0.signum() != f1.signum() && f1 != 0.0 {
                let (mut lo, mut hi, mut flo) = (x0, x1, f0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let fm = char_poly(s, mid);
                    if fm == 0.0 || hi - lo <= 1e-15 * mid.abs().max(1.0) {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x0 = x1;
            f0 = f1;
        }
        roots
    }

    #[test]
    fn diagonal_and_swap_matrices() {
        let s = sym_eig(array![[2.0, 0.0], [0.0, 3.0]].view()).unwrap();
        assert_eq!(s.values.to_vec(), vec![2.0, 3.0]);
        assert_eq!(s.vectors, Array2::<f64>::eye(2));

        let s = sym_eig(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
        assert_abs_diff_eq!(s.values[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values[1], 1.0, epsilon = 1e-15);
        let r = 0.5f64.sqrt();
        let v0 = s.vectors.column(0);
        let v1 = s.vectors.column(1);
        assert_abs_diff_eq!((v0[0] * v0[1]).abs(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v0[0] + v0[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v1[0].abs(), r, epsilon = 1e-15);
        assert_abs_diff_eq!(v1[0] - v1[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn matches_characteristic_polynomial_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let s = random_sym(6, &mut rng);
            let roots = char_poly_roots(&s);
            let vals = sym_eig(s.view()).unwrap().values;
            assert_eq!(roots.len(), 6);
            for (r, v) in roots.iter().zip(vals.iter()) {
                assert!((r - v).abs() <= 1e-10, "{r} vs {v}");
            }
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 17, 40] {
            let s = random_sym(n, &mut rng);
            let sp = sym_eig(s.view()).unwrap();
            let q = &sp.vectors;
            let qtq = q.t().dot(q);
            let err = (&qtq - &Array2::<f64>::eye(n))
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err <= 1e-12, "orthonormality {err}");
            let recon = q.dot(&Array2::from_diag(&sp.values)).dot(&q.t());
            let rel = (&recon - &s).mapv(|v| v * v).sum().sqrt() / s.mapv(|v| v * v).sum().sqrt();
            assert!(rel <= 1e-11, "reconstruction {rel}");
            assert!(sp.values.windows(2).into_iter().all(|w| w[0] <= w[1]));
            let norm2 = sp.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(sp.residual_bound <= 1e-10 * norm2);
        }
    }

    #[test]
    fn interlacing_under_deletion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = 9;
            let s = random_sym(n, &mut rng);
            let drop = rng.random_range(0..n);
            let keep: Vec<usize> = (0..n).filter(|&i| i != drop).collect();
            let sub = s.select(Axis(0), &keep).select(Axis(1), &keep);
            let a = sym_eigvals(s.view()).unwrap();
            let b = sym_eigvals(sub.view()).unwrap();
            for i in 0..n - 1 {
                assert!(a[i] <= b[i] + 1e-12 && b[i] <= a[i + 1] + 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_examples() {
        let c = cholesky(Array2::<f64>::eye(3).view()).unwrap();
        assert_eq!(c.l, Array2::<f64>::eye(3));
        let c = cholesky(array![[4.0, 2.0], [2.0, 5.0]].view()).unwrap();
        assert_eq!(c.l, array![[2.0, 0.0], [1.0, 2.0]]);

        let err = cholesky(array![[1.0, 2.0], [2.0, 1.0]].view()).unwrap_err();
        match err {
            Error::NotPositiveDefinite { index, value } => {
                assert_eq!(index, 1);
                assert!(value < 0.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cholesky_reconstruction_and_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_spd(20, &mut rng);
        let c = cholesky(b.view()).unwrap();
        let recon = c.l.dot(&c.l.t());
        let norm = b.mapv(|v| v * v).sum().sqrt();
        assert!((&recon - &b).mapv(|v| v * v).sum().sqrt() <= 1e-13 * norm);
        let rhs = random_sym(20, &mut rng);
        let x = c.solve(rhs.view());
        let back = b.dot(&x);
        assert!((&back - &rhs).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn generalized_examples() {
        let s = gen_sym_eig(
            array![[2.0, 0.0], [0.0, 6.0]].view(),
            array![[1.0, 0.0], [0.0, 2.0]].view(),
        )
        .unwrap();
        assert_abs_diff_eq!(s.values[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values[1], 3.0, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = random_spd(7, &mut rng);
        let s = gen_sym_eig(b.view(), b.view()).unwrap();
        for v in s.values.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn generalized_congruence_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let a = random_sym(8, &mut rng);
            let b = random_spd(8, &mut rng);
            let mut g = Array2::<f64>::eye(8);
            for v in g.iter_mut() {
                *v += 0.2 * rng.random_range(-1.0..1.0);
            }
            let a2 = g.t().dot(&a).dot(&g);
            let b2 = g.t().dot(&b).dot(&g);
            let e1 = gen_sym_eig(a.view(), b.view()).unwrap().values;
            let e2 = gen_sym_eig(a2.view(), b2.view()).unwrap().values;
            let scale = e1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in e1.iter().zip(e2.iter()) {
                assert!((x - y).abs() <= 1e-11 * scale, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn pseudo_inverse_route_agrees_on_well_conditioned_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_sym(6, &mut rng);
        let b = random_spd(6, &mut rng);
        let e1 = gen_sym_eig(a.view(), b.view()).unwrap().values;
        let e2 = gen_sym_eig_pinv(a.view(), b.view(), 1e-300).unwrap().values;
        for (x, y) in e1.iter().zip(e2.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-10);
        }
    }

    #[test]
    fn condition_numbers() {
        assert_eq!(cond_number(Array2::<f64>::eye(4).view()).unwrap(), 1.0);
        let c = cond_number(array![[1.0, 0.0], [0.0, 1e-8]].view()).unwrap();
        assert_abs_diff_eq!(c, 1e8, epsilon = 1e-4);
        assert!(cond_number(array![[1.0, 0.0], [0.0, 0.0]].view())
            .unwrap()
            .is_infinite());
    }
}
