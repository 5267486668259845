//! Physical constants (CODATA 2018) and unit conversions.
//!
//! All spectral quantities are held in cm^-1 internally; detunings cross the
//! API in GHz. This module is the single place where conversion factors live.

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854187813e-12;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054571817e-34;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Bohr radius, m.
pub const BOHR_RADIUS: f64 = 5.291772109e-11;
/// Hartree energy, J.
pub const HARTREE: f64 = 4.359744722e-18;
/// Hartree energy in cm^-1.
pub const HARTREE_CM: f64 = 219474.6314;
/// Atomic unit of electric field, V/m.
pub const FIELD_AU: f64 = 5.142206748e11;
/// Rydberg constant R_inf, cm^-1.
pub const RYDBERG_INF_CM: f64 = 109737.31568;
/// Electron mass in unified atomic mass units.
pub const ELECTRON_MASS_U: f64 = 5.485799091e-4;
/// Atomic mass of 174Yb in unified atomic mass units.
pub const MASS_YB174_U: f64 = 173.9388664;

/// Mass-corrected Rydberg constant for 174Yb, cm^-1.
pub fn rydberg_yb_cm() -> f64 {
    RYDBERG_INF_CM * MASS_YB174_U / (MASS_YB174_U + ELECTRON_MASS_U)
}

/// 1 GHz expressed in cm^-1.
pub fn ghz_to_cm() -> f64 {
    1.0e9 / (SPEED_OF_LIGHT * 100.0)
}

/// 1 THz expressed in cm^-1.
pub fn thz_to_cm() -> f64 {
    1.0e12 / (SPEED_OF_LIGHT * 100.0)
}

/// Atomic unit of rate (Hartree / hbar), s^-1.
pub fn rate_au_per_s() -> f64 {
    HARTREE / HBAR
}
