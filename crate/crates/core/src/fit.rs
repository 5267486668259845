//! Nonlinear least-squares fitting: the three-parameter two-level response
//! model and the nine-parameter quantum-defect matrix, plus CSV ingestion of
//! measured scattering-rate spectra.
//!
//! The optimizer is damped Gauss-Newton (Levenberg-Marquardt) with numerical
//! central-difference Jacobians; a Nelder-Mead pre-stage is available for
//! starts in non-smooth regions near the Fano zeros.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mqdt::{self, canonicalize_defect, ChannelModel, MuMatrix};
use crate::spectrum::{
    omega_from_delta_ghz, photoionization_rate, FieldConfig, SpectrumModel, TwoLevelParams,
};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("duplicate abscissa delta = {delta_ghz} GHz")]
    DuplicateAbscissa { delta_ghz: f64 },
    #[error("dataset contains no data rows")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model evaluation failed at the initial point: {0}")]
    BadInitialPoint(String),
}

/// One measured spectrum sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub delta_ghz: f64,
    pub gamma_ls: f64,
    pub sigma: Option<f64>,
}

/// Scattering-rate spectrum Gamma_LS(Delta), sorted by detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDataset {
    rows: Vec<SpectrumRow>,
    pub provenance: String,
}

impl SpectrumDataset {
    /// Sort rows by detuning and validate. Rejects empty input, duplicate
    /// detunings, negative rates, and non-positive uncertainties.
    pub fn new(mut rows: Vec<SpectrumRow>, provenance: &str) -> Result<Self, FitError> {
        if rows.is_empty() {
            return Err(FitError::EmptyDataset);
        }
        rows.sort_by(|a, b| a.delta_ghz.total_cmp(&b.delta_ghz));
        for pair in rows.windows(2) {
            if pair[0].delta_ghz == pair[1].delta_ghz {
                return Err(FitError::DuplicateAbscissa { delta_ghz: pair[0].delta_ghz });
            }
        }
        for r in &rows {
            if !r.delta_ghz.is_finite() || !r.gamma_ls.is_finite() {
                return Err(FitError::InvalidDataset("non-finite entry".into()));
            }
            if r.gamma_ls < 0.0 {
                return Err(FitError::InvalidDataset(format!(
                    "negative rate {} at delta = {}",
                    r.gamma_ls, r.delta_ghz
                )));
            }
            if let Some(s) = r.sigma {
                if !(s > 0.0) {
                    return Err(FitError::InvalidDataset(format!(
                        "sigma must be > 0, got {s} at delta = {}",
                        r.delta_ghz
                    )));
                }
            }
        }
        Ok(Self { rows, provenance: provenance.to_string() })
    }

    pub fn rows(&self) -> &[SpectrumRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn weight(&self, i: usize) -> f64 {
        1.0 / self.rows[i].sigma.unwrap_or(1.0)
    }
}

/// Parse `delta_ghz, gamma_ls[, sigma]` rows; `#` lines and blank lines are
/// ignored. Rows are sorted by detuning on load.
pub fn load_spectrum_csv(path: &str) -> Result<SpectrumDataset, FitError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FitError::Io { path: path.to_string(), source: e })?;
    parse_spectrum_csv(&text, path)
}

/// CSV body parser behind [`load_spectrum_csv`], exposed for in-memory input.
pub fn parse_spectrum_csv(text: &str, provenance: &str) -> Result<SpectrumDataset, FitError> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(FitError::ParseError {
                line,
                message: format!("expected 2 or 3 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64, FitError> {
            s.parse::<f64>().map_err(|e| FitError::ParseError {
                line,
                message: format!("bad {what} value {s:?}: {e}"),
            })
        };
        let delta_ghz = parse(fields[0], "delta_ghz")?;
        let gamma_ls = parse(fields[1], "gamma_ls")?;
        let sigma = if fields.len() == 3 { Some(parse(fields[2], "sigma")?) } else { None };
        rows.push(SpectrumRow { delta_ghz, gamma_ls, sigma });
    }
    SpectrumDataset::new(rows, provenance)
}

/// Fit outcome: named parameters, Gauss-Newton covariance, and convergence
/// diagnostics. `converged` is set only when the scaled gradient norm fell
/// below the optimizer tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: Vec<(String, f64)>,
    pub residual_norm: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Covariance of the parameters, (J^T J)^-1 scaled by the reduced
    /// chi-square. Row/column order matches `params`.
    pub covariance: Vec<Vec<f64>>,
    /// Set when J^T J was numerically rank-deficient (under-constrained
    /// parameters); the covariance then uses a ridge-regularized inverse.
    pub rank_deficient: bool,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// Optimizer controls. `multi_start = 1` runs a single descent from the given
/// initial point; larger values add seeded random restarts and keep the best
/// residual. All randomness comes from `seed`.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub multi_start: usize,
    pub seed: u64,
    /// Half-width of the uniform perturbation applied to restart seeds.
    pub perturbation: f64,
    /// Run a Nelder-Mead pre-stage before the damped Gauss-Newton descent.
    pub nelder_mead: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            multi_start: 1,
            seed: 0,
            perturbation: 0.3,
            nelder_mead: false,
        }
    }
}

impl FitOptions {
    /// Recommended controls for the quantum-defect fit: the rate spectrum has
    /// narrow Fano features, so a Nelder-Mead pre-stage widens the basin of
    /// attraction before the damped Gauss-Newton descent.
    pub fn mu_default() -> Self {
        Self { nelder_mead: true, ..Self::default() }
    }
}

/// Relative central-difference step for numerical Jacobians.
const JACOBIAN_STEP: f64 = 1e-6;
/// Scale-invariant gradient tolerance: converged when
/// max_j |g_j| / (|J_j| |r|) <= GRAD_TOL over the non-degenerate columns.
const GRAD_TOL: f64 = 1e-8;

/// Cosine-like relative gradient: |J^T r|_j normalized per column. Columns
/// with negligible norm (parameters the data does not constrain) are skipped.
fn relative_gradient(j_mat: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let r_norm = r.norm();
    if r_norm == 0.0 {
        return 0.0;
    }
    let g = j_mat.transpose() * r;
    let mut col_floor = 0.0f64;
    for j in 0..j_mat.ncols() {
        col_floor = col_floor.max(j_mat.column(j).norm());
    }
    let mut worst = 0.0f64;
    for j in 0..j_mat.ncols() {
        let cn = j_mat.column(j).norm();
        if cn > 1e-12 * col_floor.max(f64::MIN_POSITIVE) {
            worst = worst.max(g[j].abs() / (cn * r_norm));
        }
    }
    worst
}

struct LmOutcome {
    x: Vec<f64>,
    cost: f64,
    n_iterations: usize,
    converged: bool,
    gradient_norm: f64,
    jtj: DMatrix<f64>,
    n_residuals: usize,
    rank_deficient: bool,
}

/// Weighted residual vector at canonicalized parameters; `None` marks a point
/// where the model cannot be evaluated (the trial step is then rejected).
type ResidualFn<'a> = &'a (dyn Fn(&[f64]) -> Option<DVector<f64>> + Sync);
type CanonFn<'a> = &'a (dyn Fn(&mut [f64]) + Sync);

fn jacobian(f: ResidualFn, x: &[f64], m: usize) -> (DMatrix<f64>, bool) {
    let n = x.len();
    let cols: Vec<Option<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = JACOBIAN_STEP * x[j].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            match (f(&xp), f(&xm)) {
                (Some(rp), Some(rm)) => Some((rp - rm) / (2.0 * h)),
                (Some(rp), None) => f(x).map(|r0| (rp - r0) / h),
                (None, Some(rm)) => f(x).map(|r0| (r0 - rm) / h),
                (None, None) => None,
            }
        })
        .collect();
    let mut j_mat = DMatrix::zeros(m, n);
    let mut degenerate = false;
    for (j, col) in cols.into_iter().enumerate() {
        match col {
            Some(c) => j_mat.set_column(j, &c),
            None => degenerate = true,
        }
    }
    (j_mat, degenerate)
}

fn levenberg_marquardt(
    f: ResidualFn,
    canon: CanonFn,
    x0: &[f64],
    max_iterations: usize,
) -> Result<LmOutcome, FitError> {
    let mut x = x0.to_vec();
    canon(&mut x);
    let mut r = f(&x).ok_or_else(|| {
        FitError::BadInitialPoint("residuals undefined at the starting parameters".into())
    })?;
    let m = r.len();
    let n = x.len();
    let mut cost = r.norm_squared();
    let cost0 = cost;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iters = 0;
    let mut rank_deficient = false;
    let mut jtj = DMatrix::zeros(n, n);
    let mut grad_norm = f64::INFINITY;

    for iter in 0..max_iterations {
        iters = iter + 1;
        let (j_mat, degenerate) = jacobian(f, &x, m);
        rank_deficient |= degenerate;
        jtj = j_mat.transpose() * &j_mat;
        let g = j_mat.transpose() * &r;
        grad_norm = relative_gradient(&j_mat, &r);
        if grad_norm <= GRAD_TOL {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            // Marquardt scaling: damp along the curvature diagonal
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match a.clone().lu().solve(&(-&g)) {
                Some(s) => s,
                None => {
                    rank_deficient = true;
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut x_new: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            canon(&mut x_new);
            if let Some(r_new) = f(&x_new) {
                let cost_new = r_new.norm_squared();
                if cost_new < cost {
                    let rel_drop = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                    let step_small = step.amax() < 1e-14;
                    x = x_new;
                    r = r_new;
                    cost = cost_new;
                    lambda = (lambda / 3.0).max(1e-14);
                    accepted = true;
                    if cost == 0.0 {
                        converged = true;
                    }
                    if rel_drop < 1e-15 || step_small {
                        // numerically stalled: either at the round-off floor
                        // of a near-perfect fit or at a flat gradient
                        grad_norm = relative_gradient(&j_mat, &r);
                        converged = grad_norm <= GRAD_TOL || cost <= 1e-24 * cost0;
                        accepted = false; // leave the outer loop below
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if converged || !accepted {
            break;
        }
    }
    Ok(LmOutcome {
        x,
        cost,
        n_iterations: iters,
        converged,
        gradient_norm: grad_norm,
        jtj,
        n_residuals: m,
        rank_deficient,
    })
}

/// Nelder-Mead simplex descent on the summed squared residual; used as a
/// pre-stage where the surface is non-smooth.
fn nelder_mead(f: ResidualFn, canon: CanonFn, x0: &[f64], max_evals: usize) -> Vec<f64> {
    let n = x0.len();
    let cost = |x: &[f64]| -> f64 {
        let mut xc = x.to_vec();
        canon(&mut xc);
        f(&xc).map_or(f64::INFINITY, |r| r.norm_squared())
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), cost(x0)));
    for j in 0..n {
        let mut v = x0.to_vec();
        v[j] += 0.05 * v[j].abs().max(1.0);
        let c = cost(&v);
        simplex.push((v, c));
    }
    let mut evals = n + 1;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> =
            (0..n).map(|j| centroid[j] + (centroid[j] - worst.0[j])).collect();
        let fr = cost(&reflect);
        evals += 1;
        if fr < simplex[0].1 {
            let expand: Vec<f64> =
                (0..n).map(|j| centroid[j] + 2.0 * (centroid[j] - worst.0[j])).collect();
            let fe = cost(&expand);
            evals += 1;
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> =
                (0..n).map(|j| centroid[j] + 0.5 * (worst.0[j] - centroid[j])).collect();
            let fc = cost(&contract);
            evals += 1;
            if fc < worst.1 {
                simplex[n] = (contract, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for k in 1..=n {
                    let v: Vec<f64> = (0..n)
                        .map(|j| best[j] + 0.5 * (simplex[k].0[j] - best[j]))
                        .collect();
                    let c = cost(&v);
                    evals += 1;
                    simplex[k] = (v, c);
                }
            }
        }
        // converged simplex
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs()
            <= 1e-12 * (simplex[0].1.abs() + f64::MIN_POSITIVE)
        {
            break;
        }
    }
    let mut best = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    canon(&mut best);
    best
}

fn covariance_from(outcome: &LmOutcome) -> (Vec<Vec<f64>>, bool) {
    let n = outcome.x.len();
    let dof = outcome.n_residuals.saturating_sub(n).max(1) as f64;
    let s2 = outcome.cost / dof;
    let mut rank_deficient = outcome.rank_deficient;
    let inv = match outcome.jtj.clone().try_inverse() {
        Some(inv) => inv,
        None => {
            rank_deficient = true;
            let scale = (0..n).map(|k| outcome.jtj[(k, k)]).fold(0.0f64, f64::max).max(1.0);
            let ridge = &outcome.jtj + DMatrix::identity(n, n) * (1e-12 * scale);
            ridge.try_inverse().unwrap_or_else(|| DMatrix::zeros(n, n))
        }
    };
    let cov = (0..n)
        .map(|i| (0..n).map(|j| s2 * inv[(i, j)]).collect())
        .collect();
    (cov, rank_deficient)
}

fn result_from(outcome: LmOutcome, names: &[&str]) -> FitResult {
    let (covariance, rank_deficient) = covariance_from(&outcome);
    FitResult {
        params: names.iter().map(|s| s.to_string()).zip(outcome.x.iter().cloned())
            .collect(),
        residual_norm: outcome.cost.sqrt(),
        n_iterations: outcome.n_iterations,
        converged: outcome.converged,
        gradient_norm: outcome.gradient_norm,
        covariance,
        rank_deficient,
    }
}

/// Two-level model rate A Gamma / (4 Delta^2 + Gamma^2) with
/// Delta = 2pi (delta_ghz - delta_plus_ghz) 1e9. Units of the result follow
/// the amplitude A (proportional to Omega_c^2).
pub fn two_level_model(delta_ghz: f64, gamma: f64, delta_plus_ghz: f64, amplitude: f64) -> f64 {
    let delta = 2.0 * std::f64::consts::PI * (delta_ghz - delta_plus_ghz) * 1.0e9;
    amplitude * gamma / (4.0 * delta * delta + gamma * gamma)
}

/// Fit (Gamma, Delta_+, A) of the two-level response to rate data.
/// Parameters are named "gamma" (rad/s), "delta_plus_ghz", "amplitude".
pub fn fit_two_level(
    data: &SpectrumDataset,
    init: &TwoLevelParams,
    init_amplitude: f64,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    if data.len() < 5 {
        return Err(FitError::InvalidDataset(
            "two-level fit needs at least 5 points".into(),
        ));
    }
    let peak = init.delta_plus_ghz;
    if !data.rows().iter().any(|r| r.delta_ghz < peak)
        || !data.rows().iter().any(|r| r.delta_ghz > peak)
    {
        return Err(FitError::InvalidDataset(
            "data must span both sides of the resonance".into(),
        ));
    }
    // scale parameters to order one for the numerical Jacobian
    let scale = [init.gamma.abs().max(1.0), init.delta_plus_ghz.abs().max(1.0),
        init_amplitude.abs().max(1.0)];
    let residual = move |x: &[f64]| -> Option<DVector<f64>> {
        let gamma = x[0] * scale[0];
        if gamma <= 0.0 {
            return None;
        }
        let (dp, a) = (x[1] * scale[1], x[2] * scale[2]);
        Some(DVector::from_iterator(
            data.len(),
            data.rows().iter().enumerate().map(|(i, r)| {
                (two_level_model(r.delta_ghz, gamma, dp, a) - r.gamma_ls) * data.weight(i)
            }),
        ))
    };
    let canon = |_: &mut [f64]| {};
    let x0 = vec![
        init.gamma / scale[0],
        init.delta_plus_ghz / scale[1],
        init_amplitude / scale[2],
    ];
    let start = if options.nelder_mead {
        nelder_mead(&residual, &canon, &x0, 400 * x0.len())
    } else {
        x0
    };
    let mut outcome = levenberg_marquardt(&residual, &canon, &start, options.max_iterations)?;
    // report in physical units; rescale the curvature accordingly
    for (k, s) in scale.iter().enumerate() {
        outcome.x[k] *= s;
        for l in 0..3 {
            outcome.jtj[(k, l)] /= s;
            outcome.jtj[(l, k)] /= s;
        }
    }
    Ok(result_from(outcome, &["gamma", "delta_plus_ghz", "amplitude"]))
}

const MU_NAMES: [&str; 9] = [
    "mu0_11", "mu0_12", "mu0_22", "mu1_11", "mu1_12", "mu1_13", "mu1_22", "mu1_23", "mu1_33",
];

fn mu_from_params(x: &[f64]) -> (MuMatrix, MuMatrix) {
    (
        MuMatrix::from_upper_j0(x[0], x[1], x[2]),
        MuMatrix::from_upper_j1(x[3], x[4], x[5], x[6], x[7], x[8]),
    )
}

/// Model rates over the dataset grid for one quantum-defect parameter vector.
fn mu_model_rates(
    x: &[f64],
    data: &SpectrumDataset,
    geometry: &ChannelModel,
    field: &FieldConfig,
) -> Option<Vec<f64>> {
    let (mu0, mu1) = mu_from_params(x);
    let k0 = mqdt::k_matrix(&mu0).ok()?;
    let k1 = mqdt::k_matrix(&mu1).ok()?;
    let thresholds = geometry.thresholds().ok()?;
    let model = SpectrumModel::from_parts(k0, k1, thresholds);
    data.rows()
        .iter()
        .map(|r| photoionization_rate(omega_from_delta_ghz(r.delta_ghz, geometry), &model, field).ok())
        .collect()
}

/// Fit the nine free quantum-defect parameters (3 in the J=0 upper triangle,
/// 6 in J=1) to a rate spectrum. Line positions and thresholds are taken from
/// `geometry` and held fixed. Parameters are canonicalized into (-0.5, 0.5]
/// at every step; restarts (options.multi_start > 1) perturb the initial
/// point uniformly and keep the best residual.
pub fn fit_mu(
    data: &SpectrumDataset,
    init_j0: &MuMatrix,
    init_j1: &MuMatrix,
    geometry: &ChannelModel,
    field: &FieldConfig,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    let residual = move |x: &[f64]| -> Option<DVector<f64>> {
        let rates = mu_model_rates(x, data, geometry, field)?;
        Some(DVector::from_iterator(
            data.len(),
            rates.iter().zip(data.rows().iter().enumerate())
                .map(|(m, (i, r))| (m - r.gamma_ls) * data.weight(i)),
        ))
    };
    let canon = |x: &mut [f64]| {
        for v in x.iter_mut() {
            *v = canonicalize_defect(*v);
        }
    };
    let mut x0: Vec<f64> = init_j0.upper_triangle();
    x0.extend(init_j1.upper_triangle());

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<LmOutcome> = None;
    for start_idx in 0..options.multi_start.max(1) {
        let mut start = x0.clone();
        if start_idx > 0 {
            for v in start.iter_mut() {
                *v += rng.gen_range(-options.perturbation..=options.perturbation);
            }
        }
        if options.nelder_mead {
            start = nelder_mead(&residual, &canon, &start, 300 * start.len());
        }
        let outcome = match levenberg_marquardt(&residual, &canon, &start, options.max_iterations)
        {
            Ok(o) => o,
            Err(FitError::BadInitialPoint(_)) if start_idx > 0 => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |b| outcome.cost < b.cost) {
            best = Some(outcome);
        }
    }
    let best = best.ok_or_else(|| {
        FitError::BadInitialPoint("no restart produced an evaluable model".into())
    })?;
    Ok(result_from(best, &MU_NAMES))
}
