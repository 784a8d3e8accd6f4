//! Precoder design for a fixed alignment.
//!
//! The mean-SINR objective is replaced by its quadratic-transform surrogate
//!
//! ```text
//! g(P, γ) = Σ_k 2 γ_k |h_kᵀ p_k| − γ_k² (Σ_{j≠k} (h_kᵀ p_j)² + σ²)
//! ```
//!
//! which is ascended jointly in `P` and `γ`. After every step `P` is pulled
//! back onto the feasible set `diag(P Pᵀ) = I`, `diag(Pᵀ P) = (N_t/K) I` by
//! alternating row and column normalization.
//!
//! Channels are passed as an N_t × K matrix whose column k is the composite
//! channel of user k.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::metrics::{cross_gains, sinr_from_effective, to_db};

/// Below this |h_kᵀ p_k| the signal term of the gradient is dropped.
const SIGNAL_FLOOR: f64 = 1e-12;
/// Lower clamp applied to the auxiliaries after each update.
pub const GAMMA_FLOOR: f64 = 1e-12;
/// Feasibility tolerance promised for every precoder handed out.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-6;
const RIDGE: f64 = 1e-12;

pub type GammaVector = DVector<f64>;

/// Real N_t × K precoder; column k drives user k.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix(DMatrix<f64>);

impl PrecodingMatrix {
    /// Wraps a matrix without checking the power constraints.
    pub fn new_unchecked(matrix: DMatrix<f64>) -> Self {
        Self(matrix)
    }

    /// Wraps a matrix, failing unless both power constraints hold within `tol`.
    pub fn new_feasible(matrix: DMatrix<f64>, tol: f64) -> Result<Self> {
        let (r1, r2) = constraint_residuals(&matrix);
        if r1 > tol || r2 > tol {
            return Err(Error::Dimension(format!("precoder is infeasible (residuals {r1:e}, {r2:e})")));
        }
        Ok(Self(matrix))
    }

    /// i.i.d. standard normal entries projected onto the feasible set.
    pub fn random<R: Rng + ?Sized>(
        leds: usize,
        users: usize,
        rng: &mut R,
        alternations: usize,
        tol: f64,
    ) -> Result<Self> {
        let raw = DMatrix::from_fn(leds, users, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (p, _) = project_intersection(&raw, alternations, tol)?;
        Ok(Self(p))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn num_leds(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.0.ncols()
    }

    pub fn residuals(&self) -> (f64, f64) {
        constraint_residuals(&self.0)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        let (r1, r2) = self.residuals();
        r1 <= tol && r2 <= tol
    }
}

/// `(‖diag(PPᵀ) − I‖_∞, ‖diag(PᵀP) − (N_t/K) I‖_∞)`.
pub fn constraint_residuals(p: &DMatrix<f64>) -> (f64, f64) {
    let target = p.nrows() as f64 / p.ncols() as f64;
    let rows = p.row_iter().map(|r| (r.norm_squared() - 1.0).abs()).fold(0.0, f64::max);
    let cols = p.column_iter().map(|c| (c.norm_squared() - target).abs()).fold(0.0, f64::max);
    (rows, cols)
}

/// Step sizes, stopping rule, and projection budget for the ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentConfig {
    pub step_size: f64,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub projection_alternations: usize,
    pub projection_tolerance: f64,
    /// Consecutive objective decreases that trigger a step halving.
    pub decrease_patience: usize,
    pub max_halvings: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            step_size: 5e-4,
            max_iterations: 500,
            relative_tolerance: 1e-6,
            projection_alternations: 100,
            projection_tolerance: 1e-12,
            decrease_patience: 10,
            max_halvings: 6,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if !(self.relative_tolerance > 0.0 && self.projection_tolerance > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.projection_alternations == 0 {
            return Err(Error::Config("projection_alternations must be at least 1".into()));
        }
        Ok(())
    }
}

fn interference_plus_noise(cross: &DMatrix<f64>, k: usize, noise_variance: f64) -> f64 {
    let row = cross.row(k);
    row.norm_squared() - row[k] * row[k] + noise_variance
}

/// Quadratic-transform surrogate g(P, γ).
pub fn g_objective(p: &DMatrix<f64>, gamma: &GammaVector, channels: &DMatrix<f64>, noise_variance: f64) -> Result<f64> {
    let cross = cross_gains(channels, p)?;
    check_gamma(gamma, cross.nrows())?;
    Ok((0..cross.nrows())
        .map(|k| {
            let d = interference_plus_noise(&cross, k, noise_variance);
            2.0 * gamma[k] * cross[(k, k)].abs() - gamma[k] * gamma[k] * d
        })
        .sum())
}

fn check_gamma(gamma: &GammaVector, users: usize) -> Result<()> {
    if gamma.len() != users {
        return Err(Error::Dimension(format!("gamma has {} entries for {users} users", gamma.len())));
    }
    Ok(())
}

/// ∂g/∂P. Column k is
/// `2 γ_k sign(h_kᵀp_k) h_k − 2 Σ_{j≠k} γ_j² (h_jᵀ p_k) h_j`,
/// with the first term dropped when |h_kᵀp_k| is below the signal floor.
pub fn grad_p(
    p: &DMatrix<f64>,
    gamma: &GammaVector,
    channels: &DMatrix<f64>,
    _noise_variance: f64,
) -> Result<DMatrix<f64>> {
    let cross = cross_gains(channels, p)?;
    let k_users = cross.nrows();
    check_gamma(gamma, k_users)?;
    // grad = H W, where column k of W holds the coefficients on each h_j
    let weights = DMatrix::from_fn(k_users, k_users, |j, k| {
        if j == k {
            let c = cross[(k, k)];
            if c.abs() < SIGNAL_FLOOR {
                0.0
            } else {
                2.0 * gamma[k] * c.signum()
            }
        } else {
            -2.0 * gamma[j] * gamma[j] * cross[(j, k)]
        }
    });
    Ok(channels * weights)
}

/// ∂g/∂γ_k = 2|h_kᵀp_k| − 2γ_k (Σ_{j≠k} (h_kᵀp_j)² + σ²).
pub fn grad_gamma(
    p: &DMatrix<f64>,
    gamma: &GammaVector,
    channels: &DMatrix<f64>,
    noise_variance: f64,
) -> Result<GammaVector> {
    let cross = cross_gains(channels, p)?;
    check_gamma(gamma, cross.nrows())?;
    Ok(GammaVector::from_fn(cross.nrows(), |k, _| {
        2.0 * cross[(k, k)].abs() - 2.0 * gamma[k] * interference_plus_noise(&cross, k, noise_variance)
    }))
}

/// Maximizer of g in γ for fixed P: γ_k = |h_kᵀp_k| / (interference + noise).
pub fn closed_form_gamma(p: &DMatrix<f64>, channels: &DMatrix<f64>, noise_variance: f64) -> Result<GammaVector> {
    if noise_variance.is_nan() || noise_variance <= 0.0 {
        return Err(Error::Config(format!("noise variance must be positive, got {noise_variance}")));
    }
    let cross = cross_gains(channels, p)?;
    Ok(GammaVector::from_fn(cross.nrows(), |k, _| {
        cross[(k, k)].abs() / interference_plus_noise(&cross, k, noise_variance)
    }))
}

/// Scales every row to unit norm.
pub fn project_g1(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = p.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let n = row.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::SingularProjection { kind: "row", index: i });
        }
        row /= n;
    }
    Ok(out)
}

/// Scales every column to norm √(N_t/K).
pub fn project_g2(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let target = (p.nrows() as f64 / p.ncols() as f64).sqrt();
    let mut out = p.clone();
    for (k, mut col) in out.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::SingularProjection { kind: "column", index: k });
        }
        col *= target / n;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionReport {
    pub residual_rows: f64,
    pub residual_cols: f64,
    /// Column-then-row passes performed.
    pub alternations: usize,
    /// Both residuals reached the tolerance within the budget.
    pub converged: bool,
}

/// Alternates column scaling then row scaling until both residuals are
/// within `tol` or `alternations` passes have run. Every pass ends on the
/// row scaling, so the per-LED constraint is exact on return. A run that
/// exhausts the budget is reported through `converged = false`, not an error.
pub fn project_intersection(
    p: &DMatrix<f64>,
    alternations: usize,
    tol: f64,
) -> Result<(DMatrix<f64>, ProjectionReport)> {
    let (r1, r2) = constraint_residuals(p);
    if r1 <= tol && r2 <= tol {
        return Ok((
            p.clone(),
            ProjectionReport { residual_rows: r1, residual_cols: r2, alternations: 0, converged: true },
        ));
    }
    let mut current = p.clone();
    let mut report = ProjectionReport { residual_rows: r1, residual_cols: r2, alternations: 0, converged: false };
    for pass in 1..=alternations {
        current = project_g1(&project_g2(&current)?)?;
        let (r1, r2) = constraint_residuals(&current);
        report = ProjectionReport {
            residual_rows: r1,
            residual_cols: r2,
            alternations: pass,
            converged: r1 <= tol && r2 <= tol,
        };
        if report.converged {
            break;
        }
    }
    Ok((current, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub mean_sinr_db: f64,
    pub residual_g1: f64,
    pub residual_g2: f64,
    pub step_size: f64,
}

/// Per-iteration record of the accepted ascent run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecoderTrace {
    pub entries: Vec<TraceEntry>,
    /// Runs discarded and restarted with a halved step.
    pub restarts: usize,
    pub initial_mean_sinr: f64,
    pub final_mean_sinr: f64,
    /// The run hit the relative-change tolerance before the iteration cap.
    pub converged: bool,
}

impl PrecoderTrace {
    /// CSV `iteration,g,mean_sinr_db,residual_g1,residual_g2,step_size`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,g,mean_sinr_db,residual_g1,residual_g2,step_size\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                e.iteration, e.objective, e.mean_sinr_db, e.residual_g1, e.residual_g2, e.step_size
            );
        }
        out
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.entries.last().map(|e| e.objective)
    }
}

struct AscentRun {
    precoder: DMatrix<f64>,
    entries: Vec<TraceEntry>,
    converged: bool,
}

fn ascend(
    channels: &DMatrix<f64>,
    noise_variance: f64,
    cfg: &AscentConfig,
    init: &DMatrix<f64>,
    step_size: f64,
) -> Result<AscentRun> {
    let mut p = init.clone();
    let mut gamma = closed_form_gamma(&p, channels, noise_variance)?.map(|g| g.max(GAMMA_FLOOR));
    let mut step = step_size;
    let mut previous = g_objective(&p, &gamma, channels, noise_variance)?;
    let mut decreases = 0;
    let mut halvings = 0;
    let mut entries = Vec::new();
    let mut converged = false;

    for iteration in 1..=cfg.max_iterations {
        let gp = grad_p(&p, &gamma, channels, noise_variance)?;
        let gg = grad_gamma(&p, &gamma, channels, noise_variance)?;
        p += gp * step;
        gamma += gg * step;
        gamma.apply(|g| *g = g.max(GAMMA_FLOOR));
        let (projected, report) = project_intersection(&p, cfg.projection_alternations, cfg.projection_tolerance)?;
        p = projected;

        let objective = g_objective(&p, &gamma, channels, noise_variance)?;
        if !objective.is_finite() || p.iter().any(|x| !x.is_finite()) {
            return Err(Error::AscentFailure { iteration, objective });
        }
        let mean_sinr = sinr_from_effective(channels, &p, noise_variance)?.mean();
        entries.push(TraceEntry {
            iteration,
            objective,
            mean_sinr_db: to_db(mean_sinr),
            residual_g1: report.residual_rows,
            residual_g2: report.residual_cols,
            step_size: step,
        });

        if objective < previous {
            decreases += 1;
            if decreases >= cfg.decrease_patience && halvings < cfg.max_halvings {
                step /= 2.0;
                halvings += 1;
                decreases = 0;
            }
        } else {
            decreases = 0;
        }
        let scale = previous.abs().max(f64::MIN_POSITIVE);
        let change = (objective - previous).abs();
        previous = objective;
        if change <= cfg.relative_tolerance * scale {
            converged = true;
            break;
        }
    }
    Ok(AscentRun { precoder: p, entries, converged })
}

/// Projected gradient ascent on g(P, γ) from a feasible starting point.
///
/// γ starts at its closed-form maximizer and is then updated by its own
/// gradient step. A run whose final mean SINR falls below the starting one
/// is discarded and repeated with half the step size; when every retry
/// falls short, the starting precoder is returned unchanged.
pub fn optimize_precoder(
    channels: &DMatrix<f64>,
    noise_variance: f64,
    cfg: &AscentConfig,
    init: &PrecodingMatrix,
) -> Result<(PrecodingMatrix, PrecoderTrace)> {
    cfg.validate()?;
    let init = if init.is_feasible(FEASIBILITY_TOLERANCE) {
        init.as_matrix().clone()
    } else {
        project_intersection(init.as_matrix(), cfg.projection_alternations, cfg.projection_tolerance)?.0
    };
    let initial_mean_sinr = sinr_from_effective(channels, &init, noise_variance)?.mean();

    let mut step = cfg.step_size;
    let mut last_failure = None;
    for restarts in 0..=cfg.max_halvings {
        match ascend(channels, noise_variance, cfg, &init, step) {
            Ok(run) => {
                let final_mean_sinr = sinr_from_effective(channels, &run.precoder, noise_variance)?.mean();
                if final_mean_sinr >= initial_mean_sinr {
                    let trace = PrecoderTrace {
                        entries: run.entries,
                        restarts,
                        initial_mean_sinr,
                        final_mean_sinr,
                        converged: run.converged,
                    };
                    return Ok((PrecodingMatrix(run.precoder), trace));
                }
            }
            Err(e @ Error::AscentFailure { .. }) => last_failure = Some(e),
            Err(e) => return Err(e),
        }
        step /= 2.0;
    }
    if let Some(e) = last_failure {
        return Err(e);
    }
    let trace = PrecoderTrace {
        entries: Vec::new(),
        restarts: cfg.max_halvings + 1,
        initial_mean_sinr,
        final_mean_sinr: initial_mean_sinr,
        converged: false,
    };
    Ok((PrecodingMatrix(init), trace))
}

/// Projected ZF or MMSE precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePrecoder {
    pub precoder: PrecodingMatrix,
    /// The channel Gram matrix was singular and a ridge was added.
    pub rank_deficient: bool,
    pub projection: ProjectionReport,
}

fn regularized_inverse(channels: &DMatrix<f64>, regularization: f64) -> (DMatrix<f64>, bool) {
    let k_users = channels.ncols();
    let gram = channels.tr_mul(channels) + DMatrix::identity(k_users, k_users) * regularization;
    let scale = (gram.trace() / k_users as f64).max(f64::MIN_POSITIVE);
    let well_posed = gram.clone().symmetric_eigenvalues().iter().all(|&ev| ev > RIDGE * scale);
    if well_posed {
        if let Some(chol) = gram.clone().cholesky() {
            return (chol.inverse(), false);
        }
    }
    let ridged = gram + DMatrix::identity(k_users, k_users) * (RIDGE * scale);
    let inv = ridged
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| ridged.try_inverse())
        .unwrap_or_else(|| DMatrix::zeros(k_users, k_users));
    (inv, true)
}

fn finish_baseline(raw: DMatrix<f64>, rank_deficient: bool, cfg: &AscentConfig) -> Result<BaselinePrecoder> {
    let k_users = raw.ncols();
    let mut raw = raw;
    // LEDs that reach no user get an equal split so the row scaling is defined
    for mut row in raw.row_iter_mut() {
        if row.norm() == 0.0 {
            row.fill(1.0 / (k_users as f64).sqrt());
        }
    }
    let (p, projection) = project_intersection(&raw, cfg.projection_alternations, cfg.projection_tolerance)?;
    Ok(BaselinePrecoder { precoder: PrecodingMatrix(p), rank_deficient, projection })
}

/// Unprojected channel inversion H (HᵀH)⁻¹ for column-stacked channels.
pub fn zf_raw(channels: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (inv, rank_deficient) = regularized_inverse(channels, 0.0);
    (channels * inv, rank_deficient)
}

/// Unprojected regularized inversion H (HᵀH + K σ² / N_t · I)⁻¹. The
/// regularizer is K σ² over the total transmit power, which is N_t on the
/// feasible set.
pub fn mmse_raw(channels: &DMatrix<f64>, noise_variance: f64) -> DMatrix<f64> {
    let (nt, k_users) = channels.shape();
    let (inv, _) = regularized_inverse(channels, k_users as f64 * noise_variance / nt as f64);
    channels * inv
}

pub fn zf_precoder(channels: &DMatrix<f64>, cfg: &AscentConfig) -> Result<BaselinePrecoder> {
    let (raw, rank_deficient) = zf_raw(channels);
    finish_baseline(raw, rank_deficient, cfg)
}

pub fn mmse_precoder(channels: &DMatrix<f64>, noise_variance: f64, cfg: &AscentConfig) -> Result<BaselinePrecoder> {
    if noise_variance.is_nan() || noise_variance <= 0.0 {
        return Err(Error::Config(format!("noise variance must be positive, got {noise_variance}")));
    }
    finish_baseline(mmse_raw(channels, noise_variance), false, cfg)
}
