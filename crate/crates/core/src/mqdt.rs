//! Five-channel MQDT model for the odd-parity `6p_{1/2} nl` states of Yb:
//! reaction matrices from quantum-defect matrices, effective quantum numbers,
//! and closed-channel amplitudes for the incoming-wave solution.
//!
//! Channel ordering is fixed: channel 1 is the single open continuum
//! `6s_{1/2} eps p_{1/2}`; channel 2 is always `6p_{1/2} ns_{1/2}` (the
//! amplitude Z_21 that drives the isolated-core-excitation rate); the J=1
//! block adds `6p_{1/2} nd_{3/2}` as channel 3.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants;

#[derive(Debug, Error)]
pub enum MqdtError {
    #[error("quantum defect matrix is not symmetric: |mu[{i}][{j}] - mu[{j}][{i}]| = {diff}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("eigenvalue {value} of mu is within 1e-9 of a half-integer (pole of tan)")]
    NearPole { value: f64 },
    #[error("energy {energy_cm} cm^-1 is at or above the 6p1/2 threshold {threshold_cm} cm^-1")]
    AboveThreshold { energy_cm: f64, threshold_cm: f64 },
    #[error("simultaneous zero of det(M) and physical amplitude (model pathology)")]
    Degenerate,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Map a quantum defect into the canonical interval (-0.5, 0.5].
///
/// Defects are defined modulo 1 since only tan(pi*mu) is physical.
pub fn canonicalize_defect(mu: f64) -> f64 {
    let mut m = mu - mu.round();
    if m <= -0.5 {
        m += 1.0;
    }
    // round() maps x.5 to x+1, which would give exactly -0.5; fold it back
    if m == -0.5 {
        m = 0.5;
    }
    m
}

/// Symmetric matrix of quantum defects for one total-angular-momentum block.
///
/// Entries are stored canonicalized into (-0.5, 0.5].
#[derive(Debug, Clone, PartialEq)]
pub struct MuMatrix {
    j_block: u8,
    values: DMatrix<f64>,
}

impl MuMatrix {
    /// Build from a full symmetric matrix. 2x2 for J=0, 3x3 for J=1.
    pub fn new(j_block: u8, values: DMatrix<f64>) -> Result<Self, MqdtError> {
        if !values.is_square() {
            return Err(MqdtError::InvalidInput("mu matrix must be square".into()));
        }
        let n = values.nrows();
        let expected = if j_block == 0 { 2 } else { 3 };
        if n != expected {
            return Err(MqdtError::InvalidInput(format!(
                "J={j_block} block must be {expected}x{expected}, got {n}x{n}"
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let diff = (values[(i, j)] - values[(j, i)]).abs();
                if diff != 0.0 {
                    return Err(MqdtError::NotSymmetric { i, j, diff });
                }
            }
        }
        let values = values.map(canonicalize_defect);
        Ok(Self { j_block, values })
    }

    /// J=0 block from upper-triangle entries (mu11, mu12, mu22).
    pub fn from_upper_j0(mu11: f64, mu12: f64, mu22: f64) -> Self {
        let m = DMatrix::from_row_slice(2, 2, &[mu11, mu12, mu12, mu22]);
        Self::new(0, m).expect("2x2 symmetric by construction")
    }

    /// J=1 block from upper-triangle entries (mu11, mu12, mu13, mu22, mu23, mu33).
    pub fn from_upper_j1(mu11: f64, mu12: f64, mu13: f64, mu22: f64, mu23: f64, mu33: f64) -> Self {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[mu11, mu12, mu13, mu12, mu22, mu23, mu13, mu23, mu33],
        );
        Self::new(1, m).expect("3x3 symmetric by construction")
    }

    pub fn j_block(&self) -> u8 {
        self.j_block
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Upper-triangle entries in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.values.nrows();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }
}

/// One MQDT channel: label, open/closed flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub label: &'static str,
    pub open: bool,
}

/// Ordered channel list for one J block.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub j_block: u8,
    pub channels: Vec<Channel>,
}

impl ChannelSet {
    /// J=0: {6s1/2 eps p1/2 (open), 6p1/2 ns1/2 (closed)}.
    pub fn j0() -> Self {
        Self {
            j_block: 0,
            channels: vec![
                Channel { label: "6s1/2 eps p1/2", open: true },
                Channel { label: "6p1/2 ns1/2", open: false },
            ],
        }
    }

    /// J=1: {6s1/2 eps p1/2 (open), 6p1/2 ns1/2, 6p1/2 nd3/2}.
    pub fn j1() -> Self {
        Self {
            j_block: 1,
            channels: vec![
                Channel { label: "6s1/2 eps p1/2", open: true },
                Channel { label: "6p1/2 ns1/2", open: false },
                Channel { label: "6p1/2 nd3/2", open: false },
            ],
        }
    }

    pub fn n_open(&self) -> usize {
        self.channels.iter().filter(|c| c.open).count()
    }
}

/// Energy landmarks of the model: the 6s75s 3S1 launch state, the 6p1/2
/// ionization threshold and the mass-corrected Rydberg constant, all in cm^-1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub e_75_cm: f64,
    pub i_6p12_cm: f64,
    pub r_yb_cm: f64,
    pub nu0: f64,
}

impl ThresholdSet {
    pub fn validate(&self) -> Result<(), MqdtError> {
        if !(self.r_yb_cm > 109736.0 && self.r_yb_cm < 109738.0) {
            return Err(MqdtError::InvalidInput(format!(
                "R_Yb = {} cm^-1 outside the physical band",
                self.r_yb_cm
            )));
        }
        if self.i_6p12_cm <= self.e_75_cm {
            return Err(MqdtError::InvalidInput(
                "I_6p1/2 must lie above E_75".into(),
            ));
        }
        Ok(())
    }
}

/// K = tan(pi * mu) as a matrix function, via eigendecomposition of the
/// symmetric defect matrix.
pub fn k_matrix(mu: &MuMatrix) -> Result<DMatrix<f64>, MqdtError> {
    let m = mu.values();
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    for &lambda in eig.eigenvalues.iter() {
        // distance to the nearest half-integer
        let r = (lambda - 0.5).rem_euclid(1.0);
        let dist = r.min(1.0 - r);
        if dist < 1e-9 {
            return Err(MqdtError::NearPole { value: lambda });
        }
    }
    let tan_vals = eig.eigenvalues.map(|l| (std::f64::consts::PI * l).tan());
    let q = &eig.eigenvectors;
    let k = q * DMatrix::from_diagonal(&tan_vals) * q.transpose();
    // enforce exact symmetry lost to rounding in the rotation
    let k_sym = (&k + k.transpose()) * 0.5;
    Ok(k_sym)
}

/// Effective quantum number nu(E) = sqrt(R_Yb / (I_6p1/2 - E)) of a state at
/// energy E (cm^-1) relative to the 6p1/2 threshold.
pub fn effective_nu(energy_cm: f64, thresholds: &ThresholdSet) -> Result<f64, MqdtError> {
    if energy_cm >= thresholds.i_6p12_cm {
        return Err(MqdtError::AboveThreshold {
            energy_cm,
            threshold_cm: thresholds.i_6p12_cm,
        });
    }
    Ok((thresholds.r_yb_cm / (thresholds.i_6p12_cm - energy_cm)).sqrt())
}

/// Inverse of [`effective_nu`]: the energy (cm^-1) with the given nu.
pub fn energy_from_nu(nu: f64, thresholds: &ThresholdSet) -> f64 {
    thresholds.i_6p12_cm - thresholds.r_yb_cm / (nu * nu)
}

/// Closed-channel amplitudes of the incoming-wave solution at effective
/// quantum number `nu`, for a reaction matrix with one open channel (index 1).
#[derive(Debug, Clone)]
pub struct ClosedChannelSolution {
    /// Eigenphase-like parameter with tan(pi tau) = physical reactance.
    pub tau: f64,
    /// Amplitudes of the closed-channel components, channel 2 first.
    pub z_closed: DVector<f64>,
}

/// Adjugate of a small (1x1 or 2x2) matrix.
fn adjugate(m: &DMatrix<f64>) -> DMatrix<f64> {
    match m.nrows() {
        1 => DMatrix::from_element(1, 1, 1.0),
        2 => DMatrix::from_row_slice(2, 2, &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]]),
        n => panic!("adjugate only implemented for closed blocks up to 2x2, got {n}"),
    }
}

/// Solve the single-open-channel elimination problem at effective quantum
/// number `nu` shared by all closed channels.
///
/// With M = K_cc + tan(pi nu) I on the closed block, D = det M and
/// N = K_oc adj(M) K_co, the physical reactance is K_oo - N/D and
/// Z = -adj(M) K_co / sqrt(D^2 + (K_oo D - N)^2). The adjugate form stays
/// finite where D -> 0 (bound-state resonances) and reduces to
/// -cos(pi tau) M^-1 K_co away from D = 0. The open channel is
/// energy-normalized; the overall incoming-wave phase is dropped.
pub fn closed_channel_solution(
    k: &DMatrix<f64>,
    nu: f64,
) -> Result<ClosedChannelSolution, MqdtError> {
    let n = k.nrows();
    if n < 2 {
        return Err(MqdtError::InvalidInput(
            "need at least one closed channel".into(),
        ));
    }
    let nc = n - 1;
    let k_oo = k[(0, 0)];
    let k_co = DVector::from_fn(nc, |i, _| k[(i + 1, 0)]);
    let k_cc = k.view((1, 1), (nc, nc)).into_owned();

    let t = (std::f64::consts::PI * nu).tan();
    let m = &k_cc + DMatrix::identity(nc, nc) * t;
    let adj = adjugate(&m);
    let d = match nc {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => unreachable!(),
    };
    let n_term = (k_co.transpose() * &adj * &k_co)[(0, 0)];

    let denom_sq = d * d + (k_oo * d - n_term).powi(2);
    if denom_sq < 1e-300 {
        return Err(MqdtError::Degenerate);
    }
    // atan2 puts tau in (-1, 1]; only tan(pi tau) is physical, so fold into
    // the canonical defect interval
    let tau = canonicalize_defect((k_oo * d - n_term).atan2(d) / std::f64::consts::PI);
    let z_closed = -(&adj * &k_co) / denom_sq.sqrt();
    Ok(ClosedChannelSolution { tau, z_closed })
}

/// Place the 6p1/2 threshold so that the main ICE resonance condition
/// nu(E_75 + f_resonance) = nu0 holds:
/// I_6p1/2 = E_75 + f_resonance + R_Yb / nu0^2, with f_resonance in cm^-1.
pub fn calibrate_threshold(
    e_75_cm: f64,
    f_resonance_cm: f64,
    nu0: f64,
    r_yb_cm: f64,
) -> Result<f64, MqdtError> {
    if e_75_cm <= 0.0 || f_resonance_cm <= 0.0 || nu0 <= 0.0 || r_yb_cm <= 0.0 {
        return Err(MqdtError::InvalidInput(
            "calibrate_threshold expects positive inputs".into(),
        ));
    }
    Ok(e_75_cm + f_resonance_cm + r_yb_cm / (nu0 * nu0))
}

/// Full MQDT parameterization as carried by the JSON model file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChannelModel {
    /// J=0 quantum defect matrix (2x2, row-major).
    pub mu_j0: Vec<Vec<f64>>,
    /// J=1 quantum defect matrix (3x3, row-major).
    pub mu_j1: Vec<Vec<f64>>,
    /// Energy of the 6s75s 3S1 state, cm^-1.
    pub e_75_cm: f64,
    /// Effective quantum number of 6s75s with respect to 6s1/2.
    pub nu0: f64,
    /// Yb+ 6s -> 6p1/2 transition frequency, THz.
    pub f_plus_thz: f64,
    /// Offset of the main ICE line from f_plus, GHz.
    pub delta_plus_ghz: f64,
}

impl ChannelModel {
    /// Model with the published best-fit quantum defects and line positions.
    pub fn reference() -> Self {
        Self {
            mu_j0: vec![
                vec![8.58074e-3, 1.71383e-1],
                vec![1.71383e-1, -4.83877e-1],
            ],
            mu_j1: vec![
                vec![3.68692e-2, -1.37765, 4.42814e-2],
                vec![-1.37765, -1.35495e-2, -7.41744e-1],
                vec![4.42814e-2, -7.41744e-1, 1.02353e-2],
            ],
            e_75_cm: 50421.0303,
            nu0: 70.561,
            f_plus_thz: 811.29150,
            delta_plus_ghz: -0.73,
        }
    }

    fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, MqdtError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(MqdtError::InvalidInput("ragged mu matrix".into()));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn mu_matrix_j0(&self) -> Result<MuMatrix, MqdtError> {
        MuMatrix::new(0, Self::matrix_from_rows(&self.mu_j0)?)
    }

    pub fn mu_matrix_j1(&self) -> Result<MuMatrix, MqdtError> {
        MuMatrix::new(1, Self::matrix_from_rows(&self.mu_j1)?)
    }

    /// Frequency of the main resonance, f_plus + delta_plus, in cm^-1.
    pub fn f_resonance_cm(&self) -> f64 {
        self.f_plus_thz * constants::thz_to_cm() + self.delta_plus_ghz * constants::ghz_to_cm()
    }

    /// Thresholds with I_6p1/2 calibrated to the main resonance.
    pub fn thresholds(&self) -> Result<ThresholdSet, MqdtError> {
        let r_yb = constants::rydberg_yb_cm();
        let i_6p12 = calibrate_threshold(self.e_75_cm, self.f_resonance_cm(), self.nu0, r_yb)?;
        let t = ThresholdSet {
            e_75_cm: self.e_75_cm,
            i_6p12_cm: i_6p12,
            r_yb_cm: r_yb,
            nu0: self.nu0,
        };
        t.validate()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table_mu_j0() -> MuMatrix {
        ChannelModel::reference().mu_matrix_j0().unwrap()
    }

    /// Independent oracle for the matrix tangent: Taylor series for
    /// sin(pi mu) and cos(pi mu) (entire functions, converge everywhere),
    /// then solve cos(pi mu) T = sin(pi mu).
    fn tan_pi_series(mu: &DMatrix<f64>) -> DMatrix<f64> {
        let n = mu.nrows();
        let x = mu * std::f64::consts::PI;
        let mut sin = DMatrix::zeros(n, n);
        let mut cos = DMatrix::identity(n, n);
        let x2 = &x * &x;
        // sin: sum (-1)^k x^{2k+1}/(2k+1)!, cos: sum (-1)^k x^{2k}/(2k)!
        let mut term_s = x.clone();
        let mut term_c: DMatrix<f64> = DMatrix::identity(n, n);
        for k in 0..60 {
            if k > 0 {
                let kf = k as f64;
                term_s = &term_s * &x2 * (-1.0 / ((2.0 * kf) * (2.0 * kf + 1.0)));
                term_c = &term_c * &x2 * (-1.0 / ((2.0 * kf - 1.0) * (2.0 * kf)));
            }
            sin += &term_s;
            cos += if k == 0 { DMatrix::zeros(n, n) } else { term_c.clone() };
        }
        cos.lu().solve(&sin).expect("cos(pi mu) invertible")
    }

    #[test]
    fn k_of_zero_is_zero() {
        let mu = MuMatrix::new(0, DMatrix::zeros(2, 2)).unwrap();
        let k = k_matrix(&mu).unwrap();
        assert!(k.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn k_diagonal_case_is_elementwise() {
        let mu = MuMatrix::new(
            0,
            DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.25]),
        )
        .unwrap();
        let k = k_matrix(&mu).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], 0.3249196962, epsilon = 1e-9);
        assert_abs_diff_eq!(k[(1, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn k_matches_series_oracle_on_table_j0() {
        let mu = table_mu_j0();
        let k = k_matrix(&mu).unwrap();
        let k_oracle = tan_pi_series(mu.values());
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(k[(i, j)], k_oracle[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn k_matches_series_oracle_on_table_j1() {
        let mu = ChannelModel::reference().mu_matrix_j1().unwrap();
        let k = k_matrix(&mu).unwrap();
        let k_oracle = tan_pi_series(mu.values());
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(k[(i, j)], k_oracle[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn k_is_symmetric() {
        let k = k_matrix(&ChannelModel::reference().mu_matrix_j1().unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[(i, j)] - k[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn k_invariant_under_integer_shift() {
        let mu = table_mu_j0();
        let shifted = mu.values() + DMatrix::identity(2, 2);
        let mu_shifted = MuMatrix::new(0, shifted).unwrap();
        let k0 = k_matrix(&mu).unwrap();
        let k1 = k_matrix(&mu_shifted).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(k0[(i, j)], k1[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn near_pole_rejected() {
        let mu = MuMatrix::new(
            0,
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.1]),
        )
        .unwrap();
        assert!(matches!(k_matrix(&mu), Err(MqdtError::NearPole { .. })));
    }

    #[test]
    fn asymmetric_mu_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]);
        assert!(matches!(
            MuMatrix::new(0, m),
            Err(MqdtError::NotSymmetric { .. })
        ));
    }

    fn thresholds() -> ThresholdSet {
        ChannelModel::reference().thresholds().unwrap()
    }

    #[test]
    fn nu_at_one_rydberg_below_threshold() {
        let t = thresholds();
        let nu = effective_nu(t.i_6p12_cm - t.r_yb_cm, &t).unwrap();
        assert_abs_diff_eq!(nu, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nu_recovers_nu0() {
        let t = thresholds();
        let e = t.i_6p12_cm - t.r_yb_cm / (70.561 * 70.561);
        assert_abs_diff_eq!(effective_nu(e, &t).unwrap(), 70.561, epsilon = 1e-9);
    }

    #[test]
    fn nu_direct_arithmetic() {
        let t = thresholds();
        let e = t.i_6p12_cm - t.r_yb_cm / 4900.0;
        assert_abs_diff_eq!(effective_nu(e, &t).unwrap(), 70.0, epsilon = 1e-10);
    }

    #[test]
    fn nu_above_threshold_is_error() {
        let t = thresholds();
        assert!(matches!(
            effective_nu(t.i_6p12_cm, &t),
            Err(MqdtError::AboveThreshold { .. })
        ));
    }

    #[test]
    fn nu_strictly_increasing_in_energy() {
        let t = thresholds();
        let mut last = 0.0;
        for k in 0..100 {
            let e = t.i_6p12_cm - t.r_yb_cm / (1.0 + k as f64).powi(2) * 0.9;
            let nu = effective_nu(e, &t).unwrap();
            assert!(nu > last);
            last = nu;
        }
    }

    #[test]
    fn decoupled_channels_give_zero_z() {
        let k = DMatrix::zeros(2, 2);
        for i in 0..50 {
            let nu = 0.01 + 0.02 * i as f64;
            let sol = closed_channel_solution(&k, nu).unwrap();
            assert_eq!(sol.z_closed[0], 0.0);
            assert_abs_diff_eq!(sol.tau, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_channel_toy_value() {
        // K_oo = 0, K_cc = 0, coupling 0.5, nu = 0.25:
        // M = tan(pi/4) = 1, D = 1, N = 0.25, Z = -0.5/sqrt(1 + 0.0625)
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let sol = closed_channel_solution(&k, 0.25).unwrap();
        assert_abs_diff_eq!(sol.z_closed[0], -0.5 / 1.0625f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(sol.z_closed[0], -0.48507, epsilon = 1e-5);
    }

    /// Direct boundary-condition oracle for the 2-channel toy: impose
    /// tan(pi nu) B_c + (K B)_c = 0 on the closed row with an
    /// energy-normalized open channel, and normalize the full solution by the
    /// open-channel flux.
    fn toy_z_oracle(k_oo: f64, k_oc: f64, k_cc: f64, nu: f64) -> f64 {
        let t = (std::f64::consts::PI * nu).tan();
        // closed row: (k_cc + t) b_c + k_oc b_o = 0 with b_o = 1
        let b_c = -k_oc / (k_cc + t);
        // physical reactance seen by the open channel
        let k_phys = k_oo + k_oc * b_c;
        // amplitude normalization cos(pi tau) with tan(pi tau) = k_phys
        let cos_tau = 1.0 / (1.0 + k_phys * k_phys).sqrt();
        cos_tau * b_c
    }

    #[test]
    fn toy_matches_boundary_condition_oracle() {
        let k = DMatrix::from_row_slice(2, 2, &[0.3, 0.5, 0.5, -0.2]);
        for i in 1..40 {
            let nu = 0.017 * i as f64;
            let sol = closed_channel_solution(&k, nu).unwrap();
            let z = toy_z_oracle(0.3, 0.5, -0.2, nu);
            assert_abs_diff_eq!(sol.z_closed[0].abs(), z.abs(), epsilon = 1e-10);
        }
    }

    #[test]
    fn z_squared_continuous_across_det_zero() {
        // det(M) = 0 where tan(pi nu) = -k_cc; scan across it
        let k = DMatrix::from_row_slice(2, 2, &[0.1, 0.4, 0.4, 0.7]);
        let nu_zero = (-0.7f64).atan() / std::f64::consts::PI + 1.0; // tan(pi nu) = -0.7
        let mut prev: Option<f64> = None;
        let mut max_jump: f64 = 0.0;
        let mut i = -500i64;
        while i <= 500 {
            let nu = nu_zero + i as f64 * 1e-6;
            let z2 = closed_channel_solution(&k, nu).unwrap().z_closed[0].powi(2);
            if let Some(p) = prev {
                max_jump = max_jump.max((z2 - p).abs());
            }
            prev = Some(z2);
            i += 1;
        }
        assert!(max_jump < 1e-4, "max |Z|^2 jump = {max_jump}");
    }

    #[test]
    fn adjugate_form_agrees_with_inverse_form() {
        let model = ChannelModel::reference();
        let k = k_matrix(&model.mu_matrix_j1().unwrap()).unwrap();
        let nc = 2;
        for i in 0..2000 {
            let nu = 60.0 + 0.01 * i as f64 + 0.0037;
            let sol = closed_channel_solution(&k, nu).unwrap();
            let t = (std::f64::consts::PI * nu).tan();
            let k_cc = k.view((1, 1), (nc, nc)).into_owned();
            let m = &k_cc + DMatrix::identity(nc, nc) * t;
            let d = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            if d.abs() <= 1e-3 {
                continue;
            }
            let k_co = DVector::from_fn(nc, |r, _| k[(r + 1, 0)]);
            let minv = m.clone().try_inverse().unwrap();
            // signed cos(pi tau) = D / sqrt(D^2 + (K_oo D - N)^2), before the
            // modulo-1 folding of tau
            let adj = DMatrix::from_row_slice(
                2,
                2,
                &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]],
            );
            let n_term = (k_co.transpose() * &adj * &k_co)[(0, 0)];
            let cos_tau = d / (d * d + (k[(0, 0)] * d - n_term).powi(2)).sqrt();
            assert!(
                ((std::f64::consts::PI * sol.tau).cos().abs() - cos_tau.abs()).abs() < 1e-12
            );
            let z_alt = -(minv * &k_co) * cos_tau;
            for c in 0..nc {
                assert!(
                    (sol.z_closed[c] - z_alt[c]).abs() < 1e-9,
                    "nu = {nu}: {} vs {}",
                    sol.z_closed[c],
                    z_alt[c]
                );
            }
        }
    }

    #[test]
    fn threshold_calibration_reference_value() {
        let model = ChannelModel::reference();
        let t = model.thresholds().unwrap();
        // E_75 + 27061.75 + 22.04 ~ 77504.8 cm^-1
        assert!((t.i_6p12_cm - 77504.8).abs() < 0.3, "I = {}", t.i_6p12_cm);
        // resonance condition closes: nu(E_75 + f_res) = nu0
        let nu = effective_nu(model.e_75_cm + model.f_resonance_cm(), &t).unwrap();
        assert_abs_diff_eq!(nu, model.nu0, epsilon = 1e-9);
    }

    #[test]
    fn threshold_shift_with_delta_plus_zero() {
        let model = ChannelModel::reference();
        let mut m0 = model.clone();
        m0.delta_plus_ghz = 0.0;
        let shift = m0.thresholds().unwrap().i_6p12_cm - model.thresholds().unwrap().i_6p12_cm;
        assert_abs_diff_eq!(shift, 0.73 * constants::ghz_to_cm(), epsilon = 1e-9);
        assert!((shift - 0.0244).abs() < 3e-4);
    }

    #[test]
    fn rydberg_term_alone_with_unit_nu0() {
        let r = constants::rydberg_yb_cm();
        let i = calibrate_threshold(1.0, 1.0, 1.0, r).unwrap();
        assert_abs_diff_eq!(i, 2.0 + r, epsilon = 1e-12);
    }

    #[test]
    fn channel_sets_have_single_continuum() {
        assert_eq!(ChannelSet::j0().n_open(), 1);
        assert_eq!(ChannelSet::j1().n_open(), 1);
        assert_eq!(ChannelSet::j0().channels[1].label, "6p1/2 ns1/2");
        assert_eq!(ChannelSet::j1().channels[1].label, "6p1/2 ns1/2");
    }

    #[test]
    fn model_json_round_trip_exact() {
        let model = ChannelModel::reference();
        let text = serde_json::to_string(&model).unwrap();
        let back: ChannelModel = serde_json::from_str(&text).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn canonicalization_interval() {
        assert_eq!(canonicalize_defect(0.5), 0.5);
        assert_eq!(canonicalize_defect(-0.5), 0.5);
        assert_eq!(canonicalize_defect(1.25), 0.25);
        assert_eq!(canonicalize_defect(-1.37765), -0.37765000000000004);
        assert!(canonicalize_defect(-0.75) > -0.5);
    }
}
