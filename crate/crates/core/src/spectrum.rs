//! Photoionization rate and complex light shift of the core-excited Rydberg
//! states, the two-level response model, n* scaling laws, and the
//! intensity <-> Rabi frequency conversion.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::constants;
use crate::mqdt::{self, ChannelModel, MqdtError, ThresholdSet};
use nalgebra::DMatrix;

/// Reduced core dipole matrix element 6p1/2 <- 6s1/2, in units of e a0.
pub const D_CORE: f64 = 2.6829;

/// Half-width of the principal-value integration window in nu.
pub const PV_WINDOW_NU: f64 = 15.0;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Mqdt(#[from] MqdtError),
    #[error("pole at nu = {nu_pole} lies outside the integration window [{nu_lo}, {nu_hi}]")]
    PoleOutsideWindow { nu_pole: f64, nu_lo: f64, nu_hi: f64 },
    #[error("PV quadrature not window-converged: doubling the window changed Re by {rel_change}")]
    QuadratureNotConverged { rel_change: f64 },
    #[error("invalid field configuration: {0}")]
    InvalidField(String),
}

/// Control-field amplitude, given either directly in atomic units or as an
/// intensity plus transition dipole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldConfig {
    /// Electric field amplitude in atomic units.
    FieldAu { e_o: f64 },
    /// Intensity in W/cm^2 with the transition dipole in e a0.
    Intensity { i_c_w_cm2: f64, dipole: f64 },
}

impl FieldConfig {
    pub fn validate(&self) -> Result<(), SpectrumError> {
        let ok = match self {
            FieldConfig::FieldAu { e_o } => *e_o >= 0.0,
            FieldConfig::Intensity { i_c_w_cm2, .. } => *i_c_w_cm2 >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SpectrumError::InvalidField("field amplitude must be >= 0".into()))
        }
    }

    /// Electric field amplitude in V/m.
    pub fn field_v_per_m(&self) -> f64 {
        match self {
            FieldConfig::FieldAu { e_o } => e_o * constants::FIELD_AU,
            FieldConfig::Intensity { i_c_w_cm2, .. } => {
                field_from_intensity(*i_c_w_cm2)
            }
        }
    }

    /// Electric field amplitude in atomic units.
    pub fn field_au(&self) -> f64 {
        self.field_v_per_m() / constants::FIELD_AU
    }
}

/// Peak electric field (V/m) of a travelling wave of intensity I_c (W/cm^2):
/// E = sqrt(2 I / (eps0 c)) with I converted to W/m^2.
pub fn field_from_intensity(i_c_w_cm2: f64) -> f64 {
    (2.0 * i_c_w_cm2 * 1.0e4 / (constants::EPSILON_0 * constants::SPEED_OF_LIGHT)).sqrt()
}

/// Omega_c = d e a0 E_c / hbar, in rad/s.
pub fn rabi_from_intensity(i_c_w_cm2: f64, dipole_ea0: f64) -> f64 {
    let e_c = field_from_intensity(i_c_w_cm2);
    dipole_ea0 * constants::ELEMENTARY_CHARGE * constants::BOHR_RADIUS * e_c / constants::HBAR
}

/// Parameters of the near-resonant two-level description of the
/// r -> r' transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    /// Autoionizing linewidth, rad/s.
    pub gamma: f64,
    /// Line-center offset from f_plus, GHz.
    pub delta_plus_ghz: f64,
    /// Transition dipole, e a0.
    pub dipole_ea0: f64,
}

impl TwoLevelParams {
    /// Published fit for 6s75s: Gamma = 2pi x 0.92 GHz, Delta_+ = -0.73 GHz,
    /// d = 1.46 e a0.
    pub fn reference() -> Self {
        Self {
            gamma: 2.0 * std::f64::consts::PI * 0.92e9,
            delta_plus_ghz: -0.73,
            dipole_ea0: 1.46,
        }
    }

    /// Gamma_LS (rad/s) at a detuning (GHz, relative to the line center) and
    /// intensity (W/cm^2).
    pub fn gamma_ls(&self, delta_ghz: f64, i_c_w_cm2: f64) -> f64 {
        let omega_c = rabi_from_intensity(i_c_w_cm2, self.dipole_ea0);
        let delta = 2.0 * std::f64::consts::PI * delta_ghz * 1.0e9;
        two_level_response(omega_c, delta, self.gamma).gamma_ls
    }
}

/// Light shift and scattering rate of a driven two-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelResponse {
    pub delta_ls: f64,
    pub gamma_ls: f64,
}

/// Delta_LS = Omega_c^2 Delta / (4 Delta^2 + Gamma^2),
/// Gamma_LS = Gamma Omega_c^2 / (4 Delta^2 + Gamma^2). All in rad/s.
pub fn two_level_response(omega_c: f64, delta: f64, gamma: f64) -> TwoLevelResponse {
    assert!(gamma > 0.0, "two_level_response requires Gamma > 0");
    let denom = 4.0 * delta * delta + gamma * gamma;
    TwoLevelResponse {
        delta_ls: omega_c * omega_c * delta / denom,
        gamma_ls: gamma * omega_c * omega_c / denom,
    }
}

/// The 0.7-factor consistency adjustment: Gamma' = Gamma/kappa,
/// I_c' = kappa I_c. Leaves Gamma_LS unchanged for Delta >> Gamma while
/// scaling Delta_LS by kappa.
pub fn effective_adjustment(gamma: f64, i_c: f64, kappa: f64) -> (f64, f64) {
    assert!(kappa > 0.0 && kappa <= 1.0, "kappa must be in (0, 1]");
    (gamma / kappa, kappa * i_c)
}

/// Power-law parameters extracted from the n-scaling fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NStarScaling {
    pub n_star: f64,
    /// Linewidth Gamma(n*), rad/s.
    pub gamma: f64,
    /// |Delta_+(n*)|, Hz.
    pub delta_plus_hz: f64,
}

/// Gamma(n*) = 2pi x 2.9e14 s^-1 / n*^3 and |Delta_+(n*)| = 2.2e14 Hz / n*^3,
/// with n* = n - delta_qd.
pub fn nstar_scaling(n: u32, delta_qd: f64) -> NStarScaling {
    let n_star = n as f64 - delta_qd;
    assert!(n_star > 0.0, "n must exceed the quantum defect");
    let n3 = n_star.powi(3);
    NStarScaling {
        n_star,
        gamma: 2.0 * std::f64::consts::PI * 2.9e14 / n3,
        delta_plus_hz: 2.2e14 / n3,
    }
}

/// Quantum defect of the 6sns 3S1 series.
pub const S_SERIES_DEFECT: f64 = 4.439;

/// Channel model with the reaction matrices prepared for spectrum evaluation.
#[derive(Debug, Clone)]
pub struct SpectrumModel {
    k_j0: DMatrix<f64>,
    k_j1: DMatrix<f64>,
    thresholds: ThresholdSet,
}

impl SpectrumModel {
    pub fn build(model: &ChannelModel) -> Result<Self, SpectrumError> {
        let k_j0 = mqdt::k_matrix(&model.mu_matrix_j0()?)?;
        let k_j1 = mqdt::k_matrix(&model.mu_matrix_j1()?)?;
        let thresholds = model.thresholds()?;
        Ok(Self { k_j0, k_j1, thresholds })
    }

    /// Build from explicit reaction matrices (used by the mu-matrix fit).
    pub fn from_parts(k_j0: DMatrix<f64>, k_j1: DMatrix<f64>, thresholds: ThresholdSet) -> Self {
        Self { k_j0, k_j1, thresholds }
    }

    pub fn thresholds(&self) -> &ThresholdSet {
        &self.thresholds
    }

    /// nu(E) for an absolute state energy in cm^-1.
    pub fn nu_at(&self, energy_cm: f64) -> Result<f64, SpectrumError> {
        Ok(mqdt::effective_nu(energy_cm, &self.thresholds)?)
    }

    /// |Z_21|^2 summed over the two J blocks at effective quantum number nu.
    pub fn z21_squared(&self, nu: f64) -> Result<f64, SpectrumError> {
        let z0 = mqdt::closed_channel_solution(&self.k_j0, nu)?.z_closed[0];
        let z1 = mqdt::closed_channel_solution(&self.k_j1, nu)?.z_closed[0];
        Ok(z0 * z0 + z1 * z1)
    }

    /// |Z_21|^2 of the J=1 block alone (carries the Fano zeros).
    pub fn z21_squared_j1(&self, nu: f64) -> Result<f64, SpectrumError> {
        let z1 = mqdt::closed_channel_solution(&self.k_j1, nu)?.z_closed[0];
        Ok(z1 * z1)
    }
}

/// The bracketed bound-continuum overlap factor of the ICE matrix element:
/// 2 sin[pi(nu - nu0)] nu^2 nu0^2 / (sqrt6 nu0^{3/2} pi (nu^2 - nu0^2)).
///
/// Written as C(nu) * sin(pi d)/d with d = nu - nu0; the removable
/// singularity at nu = nu0 is evaluated by series for |d| < 1e-6, giving the
/// limit nu0^{3/2}/sqrt6 at d = 0.
pub fn overlap_factor(nu: f64, nu0: f64) -> f64 {
    assert!(nu > 0.0 && nu0 > 0.0);
    let d = nu - nu0;
    let prefactor =
        2.0 * nu * nu * nu0 * nu0 / (6.0f64.sqrt() * nu0.powf(1.5) * std::f64::consts::PI * (nu + nu0));
    let sinc = if d.abs() < 1e-6 {
        let x = std::f64::consts::PI * d;
        std::f64::consts::PI * (1.0 - x * x / 6.0 + x.powi(4) / 120.0)
    } else {
        (std::f64::consts::PI * d).sin() / d
    };
    prefactor * sinc
}

/// Dimensionless spectral kernel of Eq.-level rate and shift formulas:
/// overlap^2 x (|Z21^{J=1}|^2 + |Z21^{J=0}|^2) at absolute energy E (cm^-1).
pub fn ionization_kernel(energy_cm: f64, model: &SpectrumModel) -> Result<f64, SpectrumError> {
    let nu = model.nu_at(energy_cm)?;
    let f = overlap_factor(nu, model.thresholds.nu0);
    Ok(f * f * model.z21_squared(nu)?)
}

fn kernel_at_nu(nu: f64, model: &SpectrumModel) -> Result<f64, SpectrumError> {
    let f = overlap_factor(nu, model.thresholds.nu0);
    Ok(f * f * model.z21_squared(nu)?)
}

/// Photoionization rate R (s^-1) at control frequency omega (cm^-1):
/// R = (pi/2) E_o^2 D^2 kernel(E_75 + omega), in atomic units, converted
/// to s^-1.
pub fn photoionization_rate(
    omega_cm: f64,
    model: &SpectrumModel,
    field: &FieldConfig,
) -> Result<f64, SpectrumError> {
    field.validate()?;
    let e_cm = model.thresholds.e_75_cm + omega_cm;
    let kernel = ionization_kernel(e_cm, model)?;
    let e_o = field.field_au();
    Ok(0.5 * std::f64::consts::PI * e_o * e_o * D_CORE * D_CORE * kernel
        * constants::rate_au_per_s())
}

/// Control frequency (cm^-1) at detuning Delta (GHz) from the main line
/// center f_plus + Delta_+.
pub fn omega_from_delta_ghz(delta_ghz: f64, model: &ChannelModel) -> f64 {
    model.f_resonance_cm() + delta_ghz * constants::ghz_to_cm()
}

/// Complex energy shift of the launch state under the control field, in
/// atomic units (Hartree).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightShift {
    pub value_au: Complex64,
}

impl LightShift {
    /// Scattering rate implied by the imaginary part, s^-1.
    pub fn rate_per_s(&self) -> f64 {
        -2.0 * self.value_au.im * constants::rate_au_per_s()
    }

    /// Real part as a frequency shift, MHz.
    pub fn re_mhz(&self) -> f64 {
        self.value_au.re * constants::rate_au_per_s() / (2.0 * std::f64::consts::PI * 1.0e6)
    }

    /// Imaginary part as a frequency, MHz.
    pub fn im_mhz(&self) -> f64 {
        self.value_au.im * constants::rate_au_per_s() / (2.0 * std::f64::consts::PI * 1.0e6)
    }
}

/// Adaptive Simpson quadrature with deterministic (fixed-order) recursion.
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    rel_tol: f64,
    abs_floor: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let h = b - a;
    let left = h / 12.0 * (fa + 4.0 * flm + fm);
    let right = h / 12.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * (rel_tol * (left + right).abs() + abs_floor) {
        return left + right + err / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, rel_tol, abs_floor * 0.5, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, rel_tol, abs_floor * 0.5, depth - 1)
}

fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> f64 {
    // seed the recursion on a fixed panel grid so narrow resonances between
    // the initial Simpson nodes are not missed
    const PANELS: usize = 64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let x0 = a + (b - a) * i as f64 / PANELS as f64;
        let x1 = a + (b - a) * (i + 1) as f64 / PANELS as f64;
        let fa = f(x0);
        let fb = f(x1);
        let fm = f(0.5 * (x0 + x1));
        let whole = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
        total += adaptive_simpson(
            f,
            x0,
            x1,
            fa,
            fm,
            fb,
            whole,
            rel_tol,
            abs_floor / PANELS as f64,
            40,
        );
    }
    total
}

/// Complex light shift at control frequency omega (cm^-1) with the default
/// integration window.
pub fn complex_light_shift(
    omega_cm: f64,
    model: &SpectrumModel,
    field: &FieldConfig,
) -> Result<LightShift, SpectrumError> {
    complex_light_shift_windowed(omega_cm, model, field, PV_WINDOW_NU)
}

/// Complex light shift with an explicit window half-width (in nu):
/// Delta E = -(1/4) E_o^2 D^2 [ PV int kernel(E)/(E - E_p) dE
///                              + i pi kernel(E_p) ].
///
/// The principal value is computed by singularity subtraction in the nu
/// variable (dE = 2 R/nu^3 dnu) plus the analytic log term.
pub fn complex_light_shift_windowed(
    omega_cm: f64,
    model: &SpectrumModel,
    field: &FieldConfig,
    half_width_nu: f64,
) -> Result<LightShift, SpectrumError> {
    field.validate()?;
    let t = model.thresholds;
    let nu0 = t.nu0;
    let nu_lo = (nu0 - half_width_nu).max(1.0);
    let nu_hi = nu0 + half_width_nu;

    let e_p_cm = t.e_75_cm + omega_cm;
    let nu_p = model.nu_at(e_p_cm)?;
    if nu_p <= nu_lo || nu_p >= nu_hi {
        return Err(SpectrumError::PoleOutsideWindow { nu_pole: nu_p, nu_lo, nu_hi });
    }

    // energies in Hartree
    let r_h = t.r_yb_cm / constants::HARTREE_CM;
    let e_of_nu = |nu: f64| -> f64 {
        (t.i_6p12_cm - t.r_yb_cm / (nu * nu)) / constants::HARTREE_CM
    };
    let e_p = e_p_cm / constants::HARTREE_CM;

    let kernel_nu = |nu: f64| kernel_at_nu(nu, model).expect("nu in window is below threshold");
    let k_p = kernel_nu(nu_p);
    // d kernel / d E at the pole, by central difference in nu
    let h = 1e-6;
    let dk_dnu_p = (kernel_nu(nu_p + h) - kernel_nu(nu_p - h)) / (2.0 * h);
    let de_dnu_p = 2.0 * r_h / (nu_p * nu_p * nu_p);
    let dk_de_p = dk_dnu_p / de_dnu_p;

    // subtracted integrand in nu, smooth through the pole
    let g = |nu: f64| -> f64 {
        if (nu - nu_p).abs() < 1e-7 {
            // removable point: (k - k_p)/(E - E_p) -> dk/dE, times dE/dnu
            return dk_de_p * 2.0 * r_h / (nu * nu * nu);
        }
        let e = e_of_nu(nu);
        (kernel_nu(nu) - k_p) / (e - e_p) * 2.0 * r_h / (nu * nu * nu)
    };

    let scale = k_p.abs().max(1.0);
    let pv_sub = integrate(&g, nu_lo, nu_p, 1e-8, 1e-12 * scale)
        + integrate(&g, nu_p, nu_hi, 1e-8, 1e-12 * scale);
    let e_a = e_of_nu(nu_lo);
    let e_b = e_of_nu(nu_hi);
    let pv = pv_sub + k_p * ((e_b - e_p) / (e_p - e_a)).abs().ln();

    let e_o = field.field_au();
    let pref = -0.25 * e_o * e_o * D_CORE * D_CORE;
    Ok(LightShift {
        value_au: Complex64::new(pref * pv, pref * std::f64::consts::PI * k_p),
    })
}

/// One spectrum sample: detuning, rate, complex light shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub delta_ghz: f64,
    pub rate_per_s: f64,
    pub lightshift_re_mhz: f64,
    pub lightshift_im_mhz: f64,
}

/// Evaluate the rate over a detuning grid (GHz), in parallel.
pub fn rate_series(
    deltas_ghz: &[f64],
    channel_model: &ChannelModel,
    model: &SpectrumModel,
    field: &FieldConfig,
) -> Result<Vec<f64>, SpectrumError> {
    deltas_ghz
        .par_iter()
        .map(|&d| photoionization_rate(omega_from_delta_ghz(d, channel_model), model, field))
        .collect()
}

/// Evaluate rate and light shift over a detuning grid (GHz), in parallel.
pub fn spectrum_series(
    deltas_ghz: &[f64],
    channel_model: &ChannelModel,
    model: &SpectrumModel,
    field: &FieldConfig,
) -> Result<Vec<SpectrumPoint>, SpectrumError> {
    deltas_ghz
        .par_iter()
        .map(|&d| {
            let omega = omega_from_delta_ghz(d, channel_model);
            let rate = photoionization_rate(omega, model, field)?;
            let ls = complex_light_shift(omega, model, field)?;
            Ok(SpectrumPoint {
                delta_ghz: d,
                rate_per_s: rate,
                lightshift_re_mhz: ls.re_mhz(),
                lightshift_im_mhz: ls.im_mhz(),
            })
        })
        .collect()
}
