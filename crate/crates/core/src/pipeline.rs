//! End-to-end runs: train, assemble, reduce, solve, and compare against the
//! analytic references, with structured file outputs.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_mass, assemble_stiffness, MatrixLabel, OperatorCoeffs, SymMatrix};
use crate::basisnet::{
    eval_basis_chunked, init_coefficients, init_params, Architecture, BasisEval, NetworkParams,
};
use crate::error::{Error, Result, StageExt};
use crate::linalg::{self, Spectrum};
use crate::pod::{self, IndicatorKind, PodGram, ReductionResult};
use crate::problems::{clusters, problem_by_name, ProblemSpec, RefMode};
use crate::quadrature::QuadratureGrid;
use crate::training::{train, LossTrace, TraceObjective, TrainConfig};

/// Eigenvalue floor of the pseudoinverse fallback used without reduction.
pub const PINV_FLOOR: f64 = 1e-300;
/// Points per batch when evaluating the trained basis.
const EVAL_CHUNK: usize = 2048;

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: String,
    pub dim_m: usize,
    pub num_eigs: usize,
    pub seed: u64,
    pub quad_points: usize,
    pub eps_tol: f64,
    pub n_max: usize,
    pub gamma: f64,
    pub pod_gram: PodGram,
    pub indicator: IndicatorKind,
    pub reduce: bool,
    /// Relative floor for the POD spectrum (Gram eigenvalues `≤ floor·λ_max`
    /// are dropped); `None` uses `(M·ε)²`, the rounding level of the
    /// snapshot SVD.
    pub pod_floor: Option<f64>,
    /// Whether to measure condition numbers of the full `M × M` matrices
    /// (one extra dense eigensolve each).
    pub conditions: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Problem defaults with seed 1.
    pub fn for_problem(name: &str) -> Result<Self> {
        let spec = problem_by_name(name)?;
        Ok(Self {
            problem: spec.name.to_string(),
            dim_m: spec.default_m,
            num_eigs: spec.default_k,
            seed: 1,
            quad_points: spec.quadrature.points_per_dim,
            eps_tol: spec.default_eps,
            n_max: TrainConfig::default().n_max,
            gamma: spec.default_gamma,
            pod_gram: PodGram::Mass,
            indicator: IndicatorKind::Sqrt,
            reduce: true,
            pod_floor: None,
            conditions: true,
            out: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        problem_by_name(&self.problem)?;
        if self.num_eigs == 0 || self.num_eigs > self.dim_m {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= num-eigs <= dim-M, got k = {}, M = {}",
                self.num_eigs, self.dim_m
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.quad_points == 0 {
            return Err(Error::InvalidArgument(
                "quad-points must be positive".into(),
            ));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eps_tol: self.eps_tol,
            n_max: self.n_max,
            ..TrainConfig::default()
        }
    }
}

/// Condition numbers before and after reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Conditions {
    pub kappa_a: Option<f64>,
    pub kappa_b: Option<f64>,
    pub kappa_a_reduced: Option<f64>,
    pub kappa_b_reduced: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSolution {
    /// Ascending approximate eigenvalues `λ_{h,1..k}`.
    pub eigenvalues: Vec<f64>,
    /// `M × k` coefficients in the trained basis.
    #[serde(skip)]
    pub w: Array2<f64>,
    /// Reduced dimension `K` (absent without reduction).
    pub reduced_dim: Option<usize>,
    pub conditions: Conditions,
    /// The pseudoinverse fallback was needed (only without reduction).
    pub used_pinv_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEntry {
    /// 1-based index.
    pub l: usize,
    pub n: (usize, usize),
    pub lambda: f64,
    pub lambda_h: f64,
    pub err_lambda: f64,
    pub err_l2: f64,
    pub err_h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    /// 1-based indices covered by the degenerate cluster.
    pub indices: Vec<usize>,
    /// Principal angles (radians) between the reference and computed spans.
    pub angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub entries: Vec<ErrorEntry>,
    pub clusters: Vec<ClusterReport>,
    /// Largest `|b(u_{h,i}, u_{h,j}) − δ_ij|` of the computed eigenfunctions.
    pub orthonormality_defect: f64,
    pub epochs: usize,
    pub wall_time_secs: f64,
}

impl ErrorReport {
    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        writeln!(out, "l,n1,n2,err_lambda,err_L2,err_H1")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{:.16e}",
                e.l, e.n.0, e.n.1, e.err_lambda, e.err_l2, e.err_h1
            )?;
        }
        Ok(())
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub solution: EigenSolution,
    pub report: ErrorReport,
    pub trace: LossTrace,
    pub reduction: Option<ReductionResult>,
    pub params: NetworkParams,
}

/// A trained network with its assembled Galerkin matrices.
pub struct Trained {
    pub spec: ProblemSpec,
    pub grid: QuadratureGrid,
    pub coeffs: OperatorCoeffs,
    pub params: NetworkParams,
    pub trace: LossTrace,
    pub basis: BasisEval,
    pub a: SymMatrix,
    pub b: SymMatrix,
}

/// Initialization, training and assembly of the `M × M` matrices.
pub fn train_and_assemble(config: &RunConfig) -> Result<Trained> {
    config.validate()?;
    let spec = problem_by_name(&config.problem)?;
    let grid = spec.grid(Some(config.quad_points)).stage("quadrature")?;
    let coeffs = spec.operator(&grid).stage("quadrature")?;
    let arch = Architecture::standard(spec.dim, config.dim_m)?;
    let params = init_params(&arch, config.seed).stage("initialization")?;
    let w =
        init_coefficients(config.dim_m, config.num_eigs, config.seed).stage("initialization")?;

    let objective = TraceObjective::new(&grid, &coeffs, &spec.envelope, &w);
    let (params, trace) = train(&params, &objective, &config.train_config()).stage("training")?;

    let basis = eval_basis_chunked(&params, &spec.envelope, grid.points.view(), EVAL_CHUNK)
        .stage("assembly")?;
    let a = assemble_stiffness(&basis, &grid, &coeffs).stage("assembly")?;
    let b = assemble_mass(&basis, &grid).stage("assembly")?;
    Ok(Trained {
        spec,
        grid,
        coeffs,
        params,
        trace,
        basis,
        a,
        b,
    })
}

/// Generalized eigenpairs of the full pair, falling back to the
/// pseudoinverse route when `B` is not numerically positive definite.
fn solve_unreduced(a: &SymMatrix, b: &SymMatrix) -> Result<(Spectrum, bool)> {
    match linalg::gen_sym_eig(a.view(), b.view()) {
        Ok(s) => Ok((s, false)),
        Err(Error::NotPositiveDefinite { .. }) => Ok((
            linalg::gen_sym_eig_pinv(a.view(), b.view(), PINV_FLOOR)?,
            true,
        )),
        Err(e) => Err(e),
    }
}

/// Weighted snapshot matrix `X` with `XᵀX` equal to the chosen Gram matrix:
/// `diag(√ρ) Φ` for the mass Gram, and the gradient blocks
/// `diag(√(αρ)) ∂_iΦ` stacked on `diag(√(ρV)) Φ` for the stiffness Gram
/// (`α > 0` and `V ≥ 0` are guaranteed by [`OperatorCoeffs`]).
pub fn pod_snapshots(
    basis: &BasisEval,
    grid: &QuadratureGrid,
    coeffs: &OperatorCoeffs,
    gram: PodGram,
) -> Array2<f64> {
    let sqrt_rho = grid.weights.mapv(f64::sqrt).insert_axis(Axis(1));
    match gram {
        PodGram::Mass => &basis.values * &sqrt_rho,
        PodGram::Stiffness => {
            let mut blocks: Vec<Array2<f64>> = basis
                .gradients
                .iter()
                .map(|g| g * &sqrt_rho * coeffs.alpha.sqrt())
                .collect();
            if coeffs.has_potential() {
                let sqrt_v = coeffs.potential.mapv(f64::sqrt).insert_axis(Axis(1));
                blocks.push(&basis.values * &sqrt_rho * &sqrt_v);
            }
            let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
            ndarray::concatenate(Axis(0), &views).expect("blocks share the column count")
        }
    }
}

/// A POD of the trained basis together with the reduced basis evaluated on
/// the grid and its Galerkin matrices.
pub struct Reduced {
    pub reduction: ReductionResult,
    /// `ψ = Uᵀφ` at the quadrature points.
    pub fields: BasisEval,
    pub a: SymMatrix,
    pub b: SymMatrix,
}

/// POD in the requested inner product. The reduced matrices are assembled
/// from the reduced fields `ψ`, which equals `UᵀAU`, `UᵀBU` in exact
/// arithmetic but does not pass the rounding error of the ill-conditioned
/// `M × M` matrices through the large entries of `U`.
pub fn reduce(config: &RunConfig, trained: &Trained, gram: PodGram) -> Result<Reduced> {
    let m = trained.basis.n_basis();
    let x = pod_snapshots(&trained.basis, &trained.grid, &trained.coeffs, gram);
    let floor = config
        .pod_floor
        .unwrap_or_else(|| pod::default_snapshot_floor(m));
    let mut reduction = pod::pod_reduce_snapshots(x.view(), config.gamma, config.indicator, floor)
        .stage("reduction")?;
    let mut fields = trained.basis.combine(reduction.modes.view());
    // One re-orthonormalization pass: the Gram of ψ is the identity up to
    // rounding amplified by the smallest retained singular values; a
    // Cholesky correction T = L⁻ᵀ (upper triangular, close to I) removes it
    // without reordering the modes or changing their span.
    let gram_of_fields = match gram {
        PodGram::Mass => assemble_mass(&fields, &trained.grid),
        PodGram::Stiffness => assemble_stiffness(&fields, &trained.grid, &trained.coeffs),
    }
    .stage("reduction")?;
    let chol = linalg::cholesky(gram_of_fields.view()).stage("reduction")?;
    let correction = chol.backward(Array2::eye(reduction.k).view());
    reduction.modes = reduction.modes.dot(&correction);
    fields = fields.combine(correction.view());
    let a = assemble_stiffness(&fields, &trained.grid, &trained.coeffs)
        .stage("reduction")?
        .relabel(MatrixLabel::ReducedStiffness);
    let b = assemble_mass(&fields, &trained.grid)
        .stage("reduction")?
        .relabel(MatrixLabel::ReducedMass);
    Ok(Reduced {
        reduction,
        fields,
        a,
        b,
    })
}

/// Solution of one configuration on a trained basis.
pub struct Solved {
    pub solution: EigenSolution,
    pub reduction: Option<ReductionResult>,
    /// The approximate eigenfunctions at the quadrature points.
    pub fields: BasisEval,
}

/// Reduction, projection and solve on a trained basis.
pub fn solve_trained(config: &RunConfig, trained: &Trained) -> Result<Solved> {
    let k = config.num_eigs;
    let mut conditions = Conditions::default();
    if config.conditions {
        conditions.kappa_a = Some(trained.a.cond_number().stage("conditioning")?);
        conditions.kappa_b = Some(trained.b.cond_number().stage("conditioning")?);
    }
    if config.reduce {
        let reduced = reduce(config, trained, config.pod_gram)?;
        if reduced.reduction.k < k {
            return Err(Error::InvalidArgument(format!(
                "reduced dimension K = {} is smaller than the {k} requested eigenpairs",
                reduced.reduction.k
            ))
            .at_stage("reduction"));
        }
        conditions.kappa_a_reduced = Some(reduced.a.cond_number().stage("conditioning")?);
        conditions.kappa_b_reduced = Some(reduced.b.cond_number().stage("conditioning")?);
        let spectrum =
            linalg::gen_sym_eig(reduced.a.view(), reduced.b.view()).stage("eigensolve")?;
        let c = spectrum.vectors.slice(s![.., ..k]);
        let w = pod::lift_coefficients(reduced.reduction.modes.view(), c)?;
        // ψ c rather than φ (U c): the same functions, but the sum over the
        // reduced basis avoids cancellation among the large entries of U c.
        let fields = reduced.fields.combine(c);
        let solution = EigenSolution {
            eigenvalues: spectrum.values.iter().take(k).copied().collect(),
            w,
            reduced_dim: Some(reduced.reduction.k),
            conditions,
            used_pinv_fallback: false,
        };
        Ok(Solved {
            solution,
            reduction: Some(reduced.reduction),
            fields,
        })
    } else {
        let (spectrum, fallback) = solve_unreduced(&trained.a, &trained.b).stage("eigensolve")?;
        if spectrum.values.len() < k {
            return Err(Error::InvalidArgument(format!(
                "only {} eigenpairs survive the pseudoinverse floor, {k} requested",
                spectrum.values.len()
            ))
            .at_stage("eigensolve"));
        }
        let w = spectrum.vectors.slice(s![.., ..k]).to_owned();
        let fields = trained.basis.combine(w.view());
        let solution = EigenSolution {
            eigenvalues: spectrum.values.iter().take(k).copied().collect(),
            w,
            reduced_dim: None,
            conditions,
            used_pinv_fallback: fallback,
        };
        Ok(Solved {
            solution,
            reduction: None,
            fields,
        })
    }
}

/// The full method for one configuration; writes outputs when `config.out`
/// is set.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let trained = train_and_assemble(config)?;
    let solved = solve_trained(config, &trained)?;
    let mut report = compute_errors(
        &solved.solution.eigenvalues,
        &solved.fields,
        &trained.spec,
        &trained.grid,
    )
    .stage("errors")?;
    report.epochs = trained.trace.epochs();
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let outcome = RunOutcome {
        config: config.clone(),
        solution: solved.solution,
        report,
        trace: trained.trace,
        reduction: solved.reduction,
        params: trained.params,
    };
    if let Some(dir) = &config.out {
        write_outputs(&outcome, dir).stage("output")?;
    }
    Ok(outcome)
}

/// `b`-inner products `Xᵀ diag(ρ) Y` plus the gradient part for `a₁`-type
/// products: returns `(⟨x_i, y_j⟩_b, ⟨∇x_i, ∇y_j⟩)`.
fn cross_grams(x: &BasisEval, y: &BasisEval, grid: &QuadratureGrid) -> (Array2<f64>, Array2<f64>) {
    let rho = grid.weights.view().insert_axis(ndarray::Axis(1));
    let l2 = x.values.t().dot(&(&y.values * &rho));
    let mut h = Array2::zeros(l2.raw_dim());
    for (gx, gy) in x.gradients.iter().zip(&y.gradients) {
        h += &gx.t().dot(&(gy * &rho));
    }
    (l2, h)
}

/// Relative eigenvalue, L² and H¹ errors against the references.
///
/// Computed eigenfunctions are `b`-normalized and sign-aligned. Within a
/// degenerate cluster, each reference is compared with its `b`-orthogonal
/// projection onto the span of the computed cluster members.
pub fn compute_errors(
    eigenvalues: &[f64],
    computed: &BasisEval,
    spec: &ProblemSpec,
    grid: &QuadratureGrid,
) -> Result<ErrorReport> {
    let k = eigenvalues.len();
    if computed.n_basis() != k || computed.n_points() != grid.len() {
        return Err(Error::InvalidArgument(
            "computed fields do not match eigenvalues and grid".into(),
        ));
    }
    let modes: Vec<RefMode> = spec.reference_modes(k);
    let reference = spec.reference_fields(&modes, grid);

    let mut uh = computed.clone();
    let (self_l2, _) = cross_grams(computed, computed, grid);
    for j in 0..k {
        let norm = self_l2[[j, j]].sqrt();
        uh.values.column_mut(j).mapv_inplace(|v| v / norm);
        for g in &mut uh.gradients {
            g.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }
    let (uh_l2, _) = cross_grams(&uh, &uh, grid);
    let orthonormality_defect = uh_l2
        .indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);

    // c[l][j] = ⟨u_l, u_{h,j}⟩_b
    let (c, _) = cross_grams(&reference, &uh, grid);
    let (ref_l2, ref_h) = cross_grams(&reference, &reference, grid);
    let (_, uh_h) = cross_grams(&uh, &uh, grid);
    let (_, cross_h) = cross_grams(&reference, &uh, grid);

    let lambdas: Vec<f64> = modes.iter().map(|m| m.lambda).collect();
    let mut entries = Vec::with_capacity(k);
    let mut cluster_reports = Vec::new();
    for range in clusters(&lambdas) {
        let idx: Vec<usize> = range.clone().collect();
        // Gram of the computed cluster members, for the b-orthogonal projection.
        let cluster_chol = linalg::cholesky(uh_l2.slice(s![range.clone(), range.clone()]))?;
        // Coefficients of each reference's approximation in the computed span:
        // singletons use the aligned sign, clusters the projection.
        let coef = |l: usize| -> Vec<(usize, f64)> {
            if idx.len() == 1 {
                let sign = if c[[l, l]] < 0.0 { -1.0 } else { 1.0 };
                vec![(l, sign)]
            } else {
                let rhs = Array2::from_shape_fn((idx.len(), 1), |(i, _)| c[[l, idx[i]]]);
                let coeffs = cluster_chol.solve(rhs.view());
                idx.iter()
                    .enumerate()
                    .map(|(i, &j)| (j, coeffs[[i, 0]]))
                    .collect()
            }
        };
        for &l in &idx {
            let terms = coef(l);
            // ‖u − Σ a_j u_hj‖² expanded through the Gram blocks.
            let sq = |own: &Array2<f64>, cross: &Array2<f64>, gram: &Array2<f64>| -> f64 {
                let mut v = own[[l, l]];
                for &(j, aj) in &terms {
                    v -= 2.0 * aj * cross[[l, j]];
                    for &(i, ai) in &terms {
                        v += ai * aj * gram[[i, j]];
                    }
                }
                v.max(0.0)
            };
            let e_l2 = sq(&ref_l2, &c, &uh_l2);
            let e_grad = sq(&ref_h, &cross_h, &uh_h);
            let n_l2 = ref_l2[[l, l]];
            let n_h1 = n_l2 + ref_h[[l, l]];
            entries.push(ErrorEntry {
                l: l + 1,
                n: modes[l].n,
                lambda: lambdas[l],
                lambda_h: eigenvalues[l],
                err_lambda: (lambdas[l] - eigenvalues[l]).abs() / lambdas[l].abs(),
                err_l2: (e_l2 / n_l2).sqrt(),
                err_h1: ((e_l2 + e_grad) / n_h1).sqrt(),
            });
        }
        if idx.len() > 1 {
            cluster_reports.push(ClusterReport {
                indices: idx.iter().map(|i| i + 1).collect(),
                angles: principal_angles(c.view(), &range)?,
            });
        }
    }
    Ok(ErrorReport {
        entries,
        clusters: cluster_reports,
        orthonormality_defect,
        epochs: 0,
        wall_time_secs: 0.0,
    })
}

/// Principal angles from the singular values of the cross-Gram block.
fn principal_angles(c: ArrayView2<f64>, range: &Range<usize>) -> Result<Vec<f64>> {
    let block = c.slice(s![range.clone(), range.clone()]);
    let ctc = linalg::symmetrize(block.t().dot(&block).view());
    let mut angles: Vec<f64> = linalg::sym_eigvals(ctc.view())?
        .iter()
        .map(|&s2| s2.max(0.0).sqrt().min(1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize)]
struct ReductionJson<'a> {
    pod_gram: PodGram,
    #[serde(flatten)]
    reduction: Option<&'a ReductionResult>,
    conditions: Conditions,
}

#[derive(Serialize)]
struct MetaJson<'a> {
    config: &'a RunConfig,
    package: &'static str,
    version: &'static str,
    eigenvalues: &'a [f64],
    reference_eigenvalues: Vec<f64>,
    reduced_dim: Option<usize>,
    epochs: usize,
    termination: crate::training::Termination,
    final_loss: f64,
    orthonormality_defect: f64,
    used_pinv_fallback: bool,
    clusters: &'a [ClusterReport],
    wall_time_secs: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// `errors.csv`, `loss.csv`, `reduction.json`, `conditions.csv`,
/// `meta.json` and the `params.bin` checkpoint.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    outcome.report.write_csv(&mut buf)?;
    write_atomic(&dir.join("errors.csv"), &buf)?;

    let mut buf = Vec::new();
    outcome.trace.write_csv(&mut buf)?;
    write_atomic(&dir.join("loss.csv"), &buf)?;

    let conditions = outcome.solution.conditions;
    let reduction = ReductionJson {
        pod_gram: outcome.config.pod_gram,
        reduction: outcome.reduction.as_ref(),
        conditions,
    };
    write_atomic(
        &dir.join("reduction.json"),
        serde_json::to_string_pretty(&reduction)?.as_bytes(),
    )?;

    let mut csv = String::from("matrix,kappa\n");
    for (name, v) in [
        ("A", conditions.kappa_a),
        ("B", conditions.kappa_b),
        ("A_reduced", conditions.kappa_a_reduced),
        ("B_reduced", conditions.kappa_b_reduced),
    ] {
        writeln!(csv, "{name},{}", fmt_opt(v)).expect("writing to a String");
    }
    write_atomic(&dir.join("conditions.csv"), csv.as_bytes())?;

    let meta = MetaJson {
        config: &outcome.config,
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        eigenvalues: &outcome.solution.eigenvalues,
        reference_eigenvalues: outcome.report.entries.iter().map(|e| e.lambda).collect(),
        reduced_dim: outcome.solution.reduced_dim,
        epochs: outcome.trace.epochs(),
        termination: outcome.trace.reason,
        final_loss: outcome.trace.final_loss(),
        orthonormality_defect: outcome.report.orthonormality_defect,
        used_pinv_fallback: outcome.solution.used_pinv_fallback,
        clusters: &outcome.report.clusters,
        wall_time_secs: outcome.report.wall_time_secs,
    };
    write_atomic(
        &dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;

    let mut buf = Vec::new();
    outcome.params.write_to(&mut buf)?;
    write_atomic(&dir.join("params.bin"), &buf)?;
    Ok(())
}

/// One row of a sweep over `M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub dim_m: usize,
    pub reduced_dim: Option<usize>,
    pub epochs: usize,
    pub err_lambda: Vec<f64>,
}

/// Runs the template once per `M`; per-run outputs go to `out/M<m>/` and the
/// summary to `out/sweep.csv`.
pub fn sweep(template: &RunConfig, ms: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(ms.len());
    for &m in ms {
        let config = RunConfig {
            dim_m: m,
            out: template.out.as_ref().map(|d| d.join(format!("M{m}"))),
            ..template.clone()
        };
        let outcome = run(&config)?;
        rows.push(SweepRow {
            dim_m: m,
            reduced_dim: outcome.solution.reduced_dim,
            epochs: outcome.trace.epochs(),
            err_lambda: outcome
                .report
                .entries
                .iter()
                .map(|e| e.err_lambda)
                .collect(),
        });
    }
    if let Some(dir) = &template.out {
        fs::create_dir_all(dir)?;
        let k = template.num_eigs;
        let mut csv = String::from("M,K,epochs");
        for l in 1..=k {
            write!(csv, ",err_lambda_{l}").expect("writing to a String");
        }
        csv.push('\n');
        for r in &rows {
            write!(
                csv,
                "{},{},{}",
                r.dim_m,
                r.reduced_dim.map(|k| k.to_string()).unwrap_or_default(),
                r.epochs
            )
            .expect("writing to a String");
            for e in &r.err_lambda {
                write!(csv, ",{e:.16e}").expect("writing to a String");
            }
            csv.push('\n');
        }
        write_atomic(&dir.join("sweep.csv"), csv.as_bytes())?;
    }
    Ok(rows)
}

/// Condition numbers for one trained basis under both POD inner products.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRow {
    pub dim_m: usize,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub pod_gram: PodGram,
    pub reduced_dim: usize,
    pub kappa_a_reduced: f64,
    pub kappa_b_reduced: f64,
}

/// Pre- and post-reduction condition numbers at the given `M`s; two rows
/// per `M` (mass and stiffness Gram). Values above ~1e16 are saturated by
/// double precision and only indicate severe ill-conditioning.
pub fn condition_report(template: &RunConfig, ms: &[usize]) -> Result<Vec<ConditionRow>> {
    let mut rows = Vec::new();
    for &m in ms {
        let config = RunConfig {
            dim_m: m,
            ..template.clone()
        };
        let trained = train_and_assemble(&config)?;
        let kappa_a = trained.a.cond_number().stage("conditioning")?;
        let kappa_b = trained.b.cond_number().stage("conditioning")?;
        for gram_kind in [PodGram::Mass, PodGram::Stiffness] {
            let red = reduce(&config, &trained, gram_kind)?;
            rows.push(ConditionRow {
                dim_m: m,
                kappa_a,
                kappa_b,
                pod_gram: gram_kind,
                reduced_dim: red.reduction.k,
                kappa_a_reduced: red.a.cond_number().stage("conditioning")?,
                kappa_b_reduced: red.b.cond_number().stage("conditioning")?,
            });
        }
    }
    if let Some(dir) = &template.out {
        fs::create_dir_all(dir)?;
        let mut csv =
            String::from("M,kappa_A,kappa_B,pod_gram,K,kappa_A_reduced,kappa_B_reduced\n");
        for r in &rows {
            writeln!(
                csv,
                "{},{:.16e},{:.16e},{},{},{:.16e},{:.16e}",
                r.dim_m,
                r.kappa_a,
                r.kappa_b,
                r.pod_gram.as_str(),
                r.reduced_dim,
                r.kappa_a_reduced,
                r.kappa_b_reduced
            )
            .expect("writing to a String");
        }
        write_atomic(&dir.join("conditions.csv"), csv.as_bytes())?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::laplace2d;
    use approx::assert_abs_diff_eq;

    fn laplace_refs(
        k: usize,
        points: usize,
    ) -> (ProblemSpec, QuadratureGrid, Vec<RefMode>, BasisEval) {
        let spec = laplace2d();
        let grid = spec.grid(Some(points)).unwrap();
        let modes = spec.reference_modes(k);
        let f = spec.reference_fields(&modes, &grid);
        (spec, grid, modes, f)
    }

    #[test]
    fn exact_solution_has_zero_error() {
        let (spec, grid, modes, f) = laplace_refs(6, 20);
        let lambdas: Vec<f64> = modes.iter().map(|m| m.lambda).collect();
        let r = compute_errors(&lambdas, &f, &spec, &grid).unwrap();
        for e in &r.entries {
            assert_eq!(e.err_lambda, 0.0);
            assert!(e.err_l2 < 1e-7 && e.err_h1 < 1e-7, "{e:?}");
        }
        assert!(r.orthonormality_defect < 1e-12);
        assert_eq!(r.clusters.len(), 2);
        assert!(r.clusters[0].angles.iter().all(|a| *a < 1e-7));
    }

    #[test]
    fn sign_flip_and_scaling_do_not_matter() {
        let (spec, grid, modes, f) = laplace_refs(4, 20);
        let lambdas: Vec<f64> = modes.iter().map(|m| m.lambda * (1.0 + 1e-6)).collect();
        let base = compute_errors(&lambdas, &f, &spec, &grid).unwrap();
        let mut flipped = f.clone();
        flipped.values.mapv_inplace(|v| -3.0 * v);
        for g in &mut flipped.gradients {
            g.mapv_inplace(|v| -3.0 * v);
        }
        let other = compute_errors(&lambdas, &flipped, &spec, &grid).unwrap();
        for (a, b) in base.entries.iter().zip(&other.entries) {
            assert_abs_diff_eq!(a.err_lambda, 1e-6, epsilon = 1e-15);
            assert_abs_diff_eq!(a.err_l2, b.err_l2, epsilon = 1e-7);
            assert_abs_diff_eq!(a.err_h1, b.err_h1, epsilon = 1e-7);
        }
    }

    #[test]
    fn rotation_inside_degenerate_pair_is_invisible() {
        let (spec, grid, modes, f) = laplace_refs(3, 24);
        let lambdas: Vec<f64> = modes.iter().map(|m| m.lambda).collect();
        // Perturb so the errors are not all zero, then rotate the (2,1)/(1,2) pair by 30°.
        let mut perturbed = f.clone();
        let p = |m: &mut Array2<f64>| {
            let c0 = m.column(0).to_owned();
            for j in 1..3 {
                m.column_mut(j).scaled_add(1e-3 * j as f64, &c0);
            }
        };
        p(&mut perturbed.values);
        perturbed.gradients.iter_mut().for_each(p);
        let base = compute_errors(&lambdas, &perturbed, &spec, &grid).unwrap();
        let (c, sn) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let rot = ndarray::array![[1.0, 0.0, 0.0], [0.0, c, -sn], [0.0, sn, c]];
        let rotated = perturbed.combine(rot.view());
        let other = compute_errors(&lambdas, &rotated, &spec, &grid).unwrap();
        for (a, b) in base.entries.iter().zip(&other.entries).skip(1) {
            assert!(a.err_l2 > 1e-5);
            assert!(
                (a.err_l2 - b.err_l2).abs() <= 1e-12,
                "{} vs {}",
                a.err_l2,
                b.err_l2
            );
            assert!((a.err_h1 - b.err_h1).abs() <= 1e-12);
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = RunConfig::for_problem("ho-coupled").unwrap();
        assert_eq!(
            (c.dim_m, c.num_eigs, c.seed, c.quad_points),
            (900, 15, 1, 99)
        );
        assert_eq!(c.eps_tol, 1e-2);
        assert!(c.validate().is_ok());
        assert!(RunConfig {
            num_eigs: 901,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            gamma: 1.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(RunConfig::for_problem("nope").is_err());
    }

    #[test]
    fn snapshot_matrices_reproduce_the_grams() {
        let config = RunConfig {
            dim_m: 12,
            num_eigs: 2,
            n_max: 11,
            conditions: false,
            ..RunConfig::for_problem("ho-coupled").unwrap()
        };
        let config = RunConfig {
            quad_points: 15,
            ..config
        };
        let trained = train_and_assemble(&config).unwrap();
        for (gram, reference) in [
            (PodGram::Mass, &trained.b),
            (PodGram::Stiffness, &trained.a),
        ] {
            let x = pod_snapshots(&trained.basis, &trained.grid, &trained.coeffs, gram);
            let xtx = x.t().dot(&x);
            let scale = reference.view().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in xtx.iter().zip(reference.view().iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13 * scale);
            }
            // the chosen Gram is the identity on the reduced basis
            let red = reduce(&config, &trained, gram).unwrap();
            let reduced = match gram {
                PodGram::Mass => &red.b,
                PodGram::Stiffness => &red.a,
            };
            let defect = (reduced.view().to_owned() - Array2::<f64>::eye(red.reduction.k))
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(defect < 1e-12, "{defect}");
        }
    }

    #[test]
    fn small_run_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            dim_m: 30,
            num_eigs: 3,
            quad_points: 12,
            n_max: 30,
            out: Some(dir.path().to_path_buf()),
            ..RunConfig::for_problem("laplace2d").unwrap()
        };
        let out = run(&config).unwrap();
        assert_eq!(out.solution.eigenvalues.len(), 3);
        assert!(out.solution.eigenvalues.windows(2).all(|p| p[0] <= p[1]));
        assert!(
            out.report.orthonormality_defect < 1e-9,
            "{}",
            out.report.orthonormality_defect
        );
        for name in [
            "errors.csv",
            "loss.csv",
            "reduction.json",
            "conditions.csv",
            "meta.json",
            "params.bin",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let bytes = fs::read(dir.path().join("params.bin")).unwrap();
        let p = NetworkParams::read_from(&bytes[..]).unwrap();
        assert_eq!(p, out.params);
        let unreduced = run(&RunConfig {
            reduce: false,
            out: None,
            ..config.clone()
        })
        .unwrap();
        assert!(unreduced.solution.reduced_dim.is_none());
        assert_eq!(unreduced.trace, out.trace);
    }
}
