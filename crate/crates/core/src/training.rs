//! Trace-loss training of the basis network.
//!
//! The loss is `ℒ(θ) = tr(ℬ⁻¹𝒜)` where `𝒜`, `ℬ` are the `k × k` stiffness and
//! mass matrices of the trial functions `v_i = Σ_j w_ji φ_j(·; θ)` with `w`
//! held fixed. With `S_A = ℬ⁻¹` and `S_B = −ℬ⁻¹𝒜ℬ⁻¹`,
//! `dℒ = tr(S_A d𝒜) + tr(S_B dℬ)`, which turns into per-point cotangents of
//! the trial values and gradients and then into cotangents of the basis.

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::assembly::OperatorCoeffs;
use crate::basisnet::{forward, BasisEval, CoefficientSet, Envelope, ForwardPass, NetworkParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};
use crate::quadrature::QuadratureGrid;

/// Points per forward batch.
pub const DEFAULT_CHUNK: usize = 1024;
/// Forward caches are kept between the loss and gradient passes while they
/// fit in this many bytes; above it the forward pass is recomputed per chunk.
pub const DEFAULT_CACHE_BUDGET: usize = 1 << 30;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    /// Relative-change tolerance `ε`; `0` never triggers, `∞` triggers as
    /// soon as the moving change is defined.
    pub eps_tol: f64,
    pub n_max: usize,
    pub window: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eps_tol: 1e-3,
            n_max: 5000,
            window: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eps_tol must be >= 0, got {}",
                self.eps_tol
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be >= 1".into()));
        }
        if self.n_max < self.window + 1 {
            return Err(Error::InvalidArgument(format!(
                "n_max ({}) must be at least window + 1 ({})",
                self.n_max,
                self.window + 1
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Array1<f64>,
    pub v: Array1<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: Array1::zeros(n),
            v: Array1::zeros(n),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `theta` in place.
    pub fn step(&mut self, theta: &mut Array1<f64>, grad: &Array1<f64>, cfg: &TrainConfig) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let step = cfg.learning_rate / bc1;
        let bc2_sqrt = bc2.sqrt();
        ndarray::Zip::from(theta)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|th, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *th -= step * *m / (v.sqrt() / bc2_sqrt + cfg.adam_eps);
            });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxEpochs,
}

/// Per-epoch losses `l_s` and moving changes `l̄_s` (undefined for the
/// first `window` epochs).
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    pub losses: Vec<f64>,
    pub moving_change: Vec<Option<f64>>,
    pub reason: Termination,
}

impl LossTrace {
    pub fn epochs(&self) -> usize {
        self.losses.len()
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap_or(&f64::NAN)
    }

    /// `epoch,loss,moving_change` with 17 significant digits; the moving
    /// change is left empty where undefined.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "epoch,loss,moving_change")?;
        for (i, (l, mc)) in self.losses.iter().zip(&self.moving_change).enumerate() {
            match mc {
                Some(c) => writeln!(out, "{},{:.16e},{:.16e}", i + 1, l, c)?,
                None => writeln!(out, "{},{:.16e},", i + 1, l)?,
            }
        }
        Ok(())
    }
}

/// `Σ_{i=1..window} |l_{s−i} − l_{s+1−i}|` for the latest epoch `s`, if defined.
pub fn moving_change(losses: &[f64], window: usize) -> Option<f64> {
    let s = losses.len();
    if s < window + 1 {
        return None;
    }
    Some(
        losses[s - window - 1..]
            .windows(2)
            .map(|p| (p[1] - p[0]).abs())
            .sum(),
    )
}

/// The trace objective on a fixed quadrature grid.
#[derive(Debug, Clone)]
pub struct TraceObjective<'a> {
    pub grid: &'a QuadratureGrid,
    pub coeffs: &'a OperatorCoeffs,
    pub envelope: &'a Envelope,
    pub w: &'a CoefficientSet,
    pub chunk: usize,
    pub cache_budget: usize,
}

/// Trial fields expressed in a `ℬ`-orthonormal basis.
///
/// `R` is the triangular factor of the Householder QR of `diag(√ρ) V`, so
/// `ℬ = RᵀR` without forming `ℬ`; `Ṽ = V R⁻¹`, `Ĝ_k = G_k R⁻¹` and
/// `Â = R⁻ᵀ𝒜R⁻¹` has the same trace as `ℬ⁻¹𝒜`. Working with `R` instead of
/// `ℬ` keeps the rounding error proportional to `κ(ℬ)^½` rather than `κ(ℬ)`,
/// which matters because random combinations of an untrained basis are close
/// to linearly dependent.
struct Whitened {
    r: Cholesky,
    values: Array2<f64>,
    gradients: Vec<Array2<f64>>,
    a_hat: Array2<f64>,
}

/// `R` with `RᵀR = ℬ`. Fails with the (approximate) smallest eigenvalue of
/// `ℬ` when a pivot is below `k·ε` relative to the largest, i.e. when `ℬ` is
/// singular to working precision even in factored form.
fn factor_small_mass(trial: &BasisEval, grid: &QuadratureGrid) -> Result<Cholesky> {
    let sqrt_rho = grid.weights.mapv(f64::sqrt).insert_axis(Axis(1));
    let r = linalg::qr_factor((&trial.values * &sqrt_rho).view())?;
    let diag = r.l.diag();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > diag.len() as f64 * f64::EPSILON * max) {
        return Err(Error::SingularGram { min_eig: min * min });
    }
    Ok(r)
}

fn whiten(trial: &BasisEval, grid: &QuadratureGrid, coeffs: &OperatorCoeffs) -> Result<Whitened> {
    let r = factor_small_mass(trial, grid)?;
    // X R⁻¹ = (L⁻¹ Xᵀ)ᵀ with L = Rᵀ
    let right_solve = |x: &Array2<f64>| r.forward(x.t()).reversed_axes();
    let values = right_solve(&trial.values);
    let gradients: Vec<Array2<f64>> = trial.gradients.iter().map(right_solve).collect();
    let rho = grid.weights.view().insert_axis(Axis(1));
    let rho_v = (&grid.weights * &coeffs.potential).insert_axis(Axis(1));
    let mut a_hat = values.t().dot(&(&values * &rho_v));
    for g in &gradients {
        a_hat = a_hat + g.t().dot(&(g * &rho)) * coeffs.alpha;
    }
    let a_hat = linalg::symmetrize(a_hat.view());
    Ok(Whitened {
        r,
        values,
        gradients,
        a_hat,
    })
}

impl<'a> TraceObjective<'a> {
    pub fn new(
        grid: &'a QuadratureGrid,
        coeffs: &'a OperatorCoeffs,
        envelope: &'a Envelope,
        w: &'a CoefficientSet,
    ) -> Self {
        Self {
            grid,
            coeffs,
            envelope,
            w,
            chunk: DEFAULT_CHUNK,
            cache_budget: DEFAULT_CACHE_BUDGET,
        }
    }

    fn check(&self, params: &NetworkParams) -> Result<()> {
        if self.w.w.nrows() != params.arch.subspace_width {
            return Err(Error::InvalidArgument(format!(
                "coefficients have {} rows, network has {} basis functions",
                self.w.w.nrows(),
                params.arch.subspace_width
            )));
        }
        if self.coeffs.potential.len() != self.grid.len() {
            return Err(Error::InvalidArgument(
                "potential not sampled on this grid".into(),
            ));
        }
        Ok(())
    }

    fn chunks(&self) -> Vec<(usize, usize)> {
        let n = self.grid.len();
        let step = self.chunk.max(1);
        (0..n)
            .step_by(step)
            .map(|s| (s, (s + step).min(n)))
            .collect()
    }

    fn forward_chunk(
        &self,
        params: &NetworkParams,
        start: usize,
        end: usize,
    ) -> Result<ForwardPass> {
        forward(
            params,
            self.envelope,
            self.grid.points.slice(s![start..end, ..]),
        )
    }

    /// Trial values and gradients over the whole grid, plus the forward
    /// caches when they fit in the budget.
    fn trial_fields(
        &self,
        params: &NetworkParams,
        keep: bool,
    ) -> Result<(BasisEval, Option<Vec<ForwardPass>>)> {
        let n = self.grid.len();
        let d = self.grid.dim();
        let k = self.w.k();
        let mut values = Array2::zeros((n, k));
        let mut gradients = vec![Array2::zeros((n, k)); d];
        let mut caches = keep.then(Vec::new);
        let mut held = 0usize;
        for (start, end) in self.chunks() {
            let pass = self.forward_chunk(params, start, end)?;
            let basis = pass.basis();
            if let Some(i) = basis.first_non_finite_row() {
                return Err(Error::NonFinite {
                    what: "basis evaluation",
                    index: start + i,
                });
            }
            let trial = basis.combine(self.w.w.view());
            values.slice_mut(s![start..end, ..]).assign(&trial.values);
            for (g, tg) in gradients.iter_mut().zip(&trial.gradients) {
                g.slice_mut(s![start..end, ..]).assign(tg);
            }
            if let Some(c) = caches.as_mut() {
                held += pass.cache_bytes();
                if held <= self.cache_budget {
                    c.push(pass);
                } else {
                    caches = None;
                }
            }
        }
        Ok((BasisEval { values, gradients }, caches))
    }

    /// `tr(ℬ⁻¹𝒜)`.
    pub fn loss(&self, params: &NetworkParams) -> Result<f64> {
        self.check(params)?;
        let (trial, _) = self.trial_fields(params, false)?;
        Ok(whiten(&trial, self.grid, self.coeffs)?.a_hat.diag().sum())
    }

    /// Loss and its exact gradient in flat parameter order.
    pub fn loss_and_gradient(&self, params: &NetworkParams) -> Result<(f64, Array1<f64>)> {
        self.check(params)?;
        let (trial, caches) = self.trial_fields(params, true)?;
        let wh = whiten(&trial, self.grid, self.coeffs)?;
        let loss = wh.a_hat.diag().sum();
        // With B⁻¹ = R⁻¹R⁻ᵀ the cotangents become
        //   V̄ = 2 [diag(ρV) Ṽ − diag(ρ) Ṽ Â] R⁻ᵀ,  Ḡ_k = 2α diag(ρ) Ĝ_k R⁻ᵀ,
        // and the basis cotangents are these times wᵀ, i.e. times Zᵀ = R⁻ᵀwᵀ.
        let z_t = wh.r.forward(self.w.w.t());

        let alpha = self.coeffs.alpha;
        let rho = &self.grid.weights;
        let rho_v = rho * &self.coeffs.potential;

        let mut grad = vec![0.0; params.arch.param_count()];
        for (ci, (start, end)) in self.chunks().into_iter().enumerate() {
            let rows = s![start..end, ..];
            let v = wh.values.slice(rows);
            let r = rho.slice(s![start..end]).insert_axis(Axis(1));
            let rv = rho_v.slice(s![start..end]).insert_axis(Axis(1));
            let v_bar = (&(&v * &rv) - &(&v * &r).dot(&wh.a_hat)) * 2.0;
            let values_bar = v_bar.dot(&z_t);
            let gradients_bar: Vec<Array2<f64>> = wh
                .gradients
                .iter()
                .map(|g| (&g.slice(rows) * &r).dot(&z_t) * (2.0 * alpha))
                .collect();
            let recomputed;
            let pass = match caches.as_ref() {
                Some(c) => &c[ci],
                None => {
                    recomputed = self.forward_chunk(params, start, end)?;
                    &recomputed
                }
            };
            pass.backward(params, values_bar.view(), &gradients_bar, &mut grad);
        }
        Ok((loss, Array1::from_vec(grad)))
    }
}

/// Adam on the trace loss until `|l̄_s / l_s| ≤ ε` or `N_max` epochs.
///
/// Each epoch evaluates the loss and gradient at the current parameters,
/// records the loss, then takes one Adam step.
pub fn train(
    params: &NetworkParams,
    objective: &TraceObjective<'_>,
    config: &TrainConfig,
) -> Result<(NetworkParams, LossTrace)> {
    config.validate()?;
    let mut current = params.clone();
    let mut theta = current.flatten();
    let mut adam = AdamState::new(theta.len());
    let mut losses = Vec::new();
    let mut changes = Vec::new();
    let reason = loop {
        let epoch = losses.len() + 1;
        let (loss, grad) = objective.loss_and_gradient(&current).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFiniteLoss { epoch },
            other => other,
        })?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        adam.step(&mut theta, &grad, config);
        current.assign_flat(theta.as_slice().expect("contiguous"));
        losses.push(loss);
        let change = moving_change(&losses, config.window);
        changes.push(change);
        if let Some(c) = change {
            if (c / loss).abs() <= config.eps_tol {
                break Termination::Tolerance;
            }
        }
        if epoch >= config.n_max {
            break Termination::MaxEpochs;
        }
    };
    Ok((
        current,
        LossTrace {
            losses,
            moving_change: changes,
            reason,
        },
    ))
}

/// Rayleigh-type check used by tests and reports: `tr(ℬ⁻¹𝒜)` for given
/// combined trial fields.
pub fn trace_of(trial: &BasisEval, grid: &QuadratureGrid, coeffs: &OperatorCoeffs) -> Result<f64> {
    Ok(whiten(trial, grid, coeffs)?.a_hat.diag().sum())
}

/// Convenience view for tests: trial fields `Φ w` for the given parameters.
pub fn trial_fields(
    params: &NetworkParams,
    envelope: &Envelope,
    points: ArrayView2<f64>,
    w: &CoefficientSet,
) -> Result<BasisEval> {
    Ok(crate::basisnet::eval_basis(params, envelope, points)?.combine(w.w.view()))
}
