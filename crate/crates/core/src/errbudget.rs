//! Analytic addressing-error model for spectator atoms: rotation and
//! scattering errors under ground-state vs Rydberg-state light shifts,
//! optimal control-field settings, and the scaling-exponent checks.
//!
//! Only exponents are physical here; all proportionality constants default
//! to 1 and t_g = 2 pi / Omega_r exactly. The far-detuned two-level forms
//! Delta_LS = Omega_c^2/(4 Delta), Gamma_LS = Gamma Omega_c^2/(4 Delta^2)
//! are used throughout.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error("light shift is zero; rotation error undefined")]
    ZeroShift,
    #[error("no positive solution for the requested error target")]
    Infeasible,
}

/// Which state carries the addressing light shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    GroundShift,
    RydbergShift,
}

/// Addressing scheme with its dimensionless proportionality constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheme {
    pub variant: Variant,
    pub c_rot: f64,
    pub c_sc: f64,
}

impl Scheme {
    pub fn new(variant: Variant) -> Self {
        Self { variant, c_rot: 1.0, c_sc: 1.0 }
    }
}

/// The two spectator error channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AddressingErrors {
    pub eps_rot: f64,
    pub eps_sc: f64,
}

/// Optimal operating point for a target total addressing error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBudget {
    pub eps_rot: f64,
    pub eps_sc: f64,
    pub eps_total: f64,
    pub delta_opt: f64,
    /// Omega_c^2 at the optimum (intensity surrogate).
    pub omega_c_sq_opt: f64,
    /// Rydberg Rabi frequency implied by the intrinsic-error condition.
    pub omega_r: f64,
}

/// eps_rot = c_rot (Omega_r / Delta_LS)^2 in both schemes;
/// eps_sc = c_sc Gamma_LS t_g (ground shift) or c_sc Gamma_LS t_g P_r
/// (Rydberg shift), with P_r = (Omega_r / Delta_LS)^2 and t_g = 2 pi/Omega_r.
pub fn addressing_errors(
    scheme: &Scheme,
    omega_r: f64,
    omega_c: f64,
    delta: f64,
    gamma: f64,
) -> Result<AddressingErrors, BudgetError> {
    let delta_ls = omega_c * omega_c / (4.0 * delta);
    if delta_ls == 0.0 {
        return Err(BudgetError::ZeroShift);
    }
    let gamma_ls = gamma * omega_c * omega_c / (4.0 * delta * delta);
    let t_g = 2.0 * std::f64::consts::PI / omega_r;
    let p_r = (omega_r / delta_ls).powi(2);
    let eps_rot = scheme.c_rot * p_r;
    let eps_sc = match scheme.variant {
        Variant::GroundShift => scheme.c_sc * gamma_ls * t_g,
        Variant::RydbergShift => scheme.c_sc * gamma_ls * t_g * p_r,
    };
    Ok(AddressingErrors { eps_rot, eps_sc })
}

/// Closed-form optimum of the addressing error budget.
///
/// Omega_r is pinned by the intrinsic-error condition
/// eps = t_g Gamma_r = 2 pi Gamma_r / Omega_r, i.e. Omega_r = 2 pi Gamma_r/eps.
///
/// GroundShift: at fixed Delta, eps_rot + eps_sc has an interior minimum in
/// Omega_c with eps_sc = 2 eps_rot there; imposing eps_rot = eps/3,
/// eps_sc = 2 eps/3 and eliminating Omega_c gives
///   Delta_opt^2    = 27 pi^2 c_rot c_sc^2 Gamma^2 / eps^3,
///   Omega_c_opt^2  = 36 pi c_rot c_sc Gamma Omega_r / eps^2.
///
/// RydbergShift: both errors fall monotonically with Omega_c; the budget is
/// split evenly, eps_rot = eps_sc = eps/2, giving
///   Omega_c_opt^2  = 16 pi c_sc Gamma Omega_r / eps,
///   Delta_opt^2    = 8 pi^2 c_sc^2 Gamma^2 / (c_rot eps).
pub fn optimize_control(
    scheme: &Scheme,
    eps_target: f64,
    gamma: f64,
    gamma_r: f64,
) -> Result<ErrorBudget, BudgetError> {
    if !(eps_target > 0.0 && eps_target < 1.0) || gamma <= 0.0 || gamma_r <= 0.0 {
        return Err(BudgetError::Infeasible);
    }
    let eps = eps_target;
    let omega_r = 2.0 * std::f64::consts::PI * gamma_r / eps;
    let pi = std::f64::consts::PI;
    let (delta_opt, omega_c_sq) = match scheme.variant {
        Variant::GroundShift => {
            let delta = (27.0 * pi * pi * scheme.c_rot * scheme.c_sc * scheme.c_sc
                * gamma * gamma
                / eps.powi(3))
            .sqrt();
            let wc2 = 36.0 * pi * scheme.c_rot * scheme.c_sc * gamma * omega_r / (eps * eps);
            (delta, wc2)
        }
        Variant::RydbergShift => {
            let wc2 = 16.0 * pi * scheme.c_sc * gamma * omega_r / eps;
            let delta =
                (8.0 * pi * pi * scheme.c_sc * scheme.c_sc * gamma * gamma / (scheme.c_rot * eps))
                    .sqrt();
            (delta, wc2)
        }
    };
    let errs = addressing_errors(scheme, omega_r, omega_c_sq.sqrt(), delta_opt, gamma)?;
    Ok(ErrorBudget {
        eps_rot: errs.eps_rot,
        eps_sc: errs.eps_sc,
        eps_total: errs.eps_rot + errs.eps_sc,
        delta_opt,
        omega_c_sq_opt: omega_c_sq,
        omega_r,
    })
}

/// Least-squares slope of log y vs log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Slopes of the optimal operating point against the error target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSlopes {
    /// d log(Omega_c_opt^2) / d log(eps).
    pub intensity: f64,
    /// d log(Delta_opt) / d log(eps).
    pub detuning: f64,
}

/// Fit the log-log slopes of Omega_c_opt^2 and Delta_opt over an eps grid.
pub fn scaling_exponent(
    scheme: &Scheme,
    eps_grid: &[f64],
    gamma: f64,
    gamma_r: f64,
) -> Result<ScalingSlopes, BudgetError> {
    assert!(eps_grid.len() >= 10, "need at least 10 grid points");
    let budgets: Vec<ErrorBudget> = eps_grid
        .iter()
        .map(|&e| optimize_control(scheme, e, gamma, gamma_r))
        .collect::<Result<_, _>>()?;
    let wc2: Vec<f64> = budgets.iter().map(|b| b.omega_c_sq_opt).collect();
    let dl: Vec<f64> = budgets.iter().map(|b| b.delta_opt).collect();
    Ok(ScalingSlopes {
        intensity: loglog_slope(eps_grid, &wc2),
        detuning: loglog_slope(eps_grid, &dl),
    })
}

/// Log-spaced grid over [lo, hi] inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
