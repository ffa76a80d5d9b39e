//! Vacuum-mediated dipole-dipole kernels.
//!
//! Positions are measured in units of the transition wavelength when the
//! ensemble is built with [`EmitterEnsemble::chain`]; any length unit works as
//! long as `k_e` is expressed in its inverse.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this argument the `cos/x^2 - sin/x^3` combination is evaluated by series.
pub const SERIES_SWITCH: f64 = 1e-3;
/// The transverse bracket cancels to O(x^2) and loses digits much earlier.
const TRANSVERSE_SWITCH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Dipoles orthogonal to the chain axis.
    #[default]
    Perpendicular,
    /// Dipoles along the chain axis.
    Parallel,
}

#[derive(Debug, Clone)]
pub struct EmitterEnsemble {
    pub positions: Vec<Vector3<f64>>,
    pub dipole: Vector3<f64>,
    pub gamma: f64,
    pub k_e: f64,
}

impl EmitterEnsemble {
    pub fn new(positions: Vec<Vector3<f64>>, dipole: Vector3<f64>, gamma: f64, k_e: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
        }
        if !(k_e > 0.0 && k_e.is_finite()) {
            return Err(Error::InvalidInput(format!("k_e must be positive, got {k_e}")));
        }
        if (dipole.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("dipole orientation must be a unit vector, |mu| = {}", dipole.norm())));
        }
        if positions.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput("non-finite emitter position".into()));
        }
        for i in 0..positions.len() {
            for j in 0..i {
                if (positions[i] - positions[j]).norm() == 0.0 {
                    return Err(Error::CoincidentEmitters(j, i));
                }
            }
        }
        Ok(Self { positions, dipole, gamma, k_e })
    }

    /// Equidistant chain along x with spacing `d` (in wavelengths), `k_e = 2 pi`.
    pub fn chain(n: usize, d: f64, orientation: Orientation, gamma: f64) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::InvalidInput(format!("chain spacing must be positive, got {d}")));
        }
        let positions = (0..n).map(|j| Vector3::new(j as f64 * d, 0.0, 0.0)).collect();
        let dipole = match orientation {
            Orientation::Perpendicular => Vector3::y(),
            Orientation::Parallel => Vector3::x(),
        };
        Self::new(positions, dipole, gamma, 2.0 * std::f64::consts::PI)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingKernels {
    /// Coherent exchange Omega_ij, zero diagonal.
    pub omega: DMatrix<f64>,
    /// Collective decay gamma_ij with gamma on the diagonal.
    pub gamma_matrix: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub gamma: f64,
}

impl CouplingKernels {
    /// No exchange and no cross decay.
    pub fn independent(n: usize, gamma: f64) -> Self {
        Self {
            omega: DMatrix::zeros(n, n),
            gamma_matrix: DMatrix::identity(n, n) * gamma,
            h: DMatrix::identity(n, n),
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.omega.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest |Omega_ij|.
    pub fn omega_max(&self) -> f64 {
        self.omega.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularProfiles {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
}

// cos(x)/x^2 - sin(x)/x^3
fn longitudinal_bracket(x: f64) -> f64 {
    if x < SERIES_SWITCH {
        let x2 = x * x;
        -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0
    } else {
        x.cos() / (x * x) - x.sin() / (x * x * x)
    }
}

// sin(x)/x + 3cos(x)/x^2 - 3sin(x)/x^3, which vanishes like -x^2/15
fn transverse_bracket(x: f64) -> f64 {
    if x < TRANSVERSE_SWITCH {
        // coefficient of x^(2n+1) in x^2 sin x + 3x cos x - 3 sin x
        let x2 = x * x;
        let mut sum = 0.0;
        let mut pow = 1.0;
        let mut fact = [1.0_f64; 30];
        for k in 1..30 {
            fact[k] = fact[k - 1] * k as f64;
        }
        for n in 2..13 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let c = -sign / fact[2 * n - 1] + 3.0 * sign / fact[2 * n] - 3.0 * sign / fact[2 * n + 1];
            sum += c * pow * x2;
            pow *= x2;
        }
        sum
    } else {
        x.sin() / x + 3.0 * x.cos() / (x * x) - 3.0 * x.sin() / (x * x * x)
    }
}

fn fz_gz(kr: f64, cos_theta: f64) -> (f64, f64) {
    let c2 = cos_theta * cos_theta;
    let s2 = 1.0 - c2;
    let (s, c) = kr.sin_cos();
    let fz = s2 * s / kr + (1.0 - 3.0 * c2) * longitudinal_bracket(kr);
    let gz = s2 * c / kr - (1.0 - 3.0 * c2) * (s / (kr * kr) + c / (kr * kr * kr));
    (fz, gz)
}

/// Field-profile functions of a unit dipole at distance `kr`, polar angle
/// `theta` from the dipole axis and azimuth `phi` around it.
pub fn angular_profiles(kr: f64, theta: f64, phi: f64) -> Result<AngularProfiles> {
    if !(kr.is_finite() && theta.is_finite() && phi.is_finite()) {
        return Err(Error::InvalidInput("angular_profiles: non-finite argument".into()));
    }
    if kr <= 0.0 {
        return Err(Error::InvalidInput(format!("angular_profiles: kr must be positive, got {kr}")));
    }
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (fz, gz) = fz_gz(kr, ct);
    let (s, c) = kr.sin_cos();
    let bf = transverse_bracket(kr);
    let bg = c / kr - 3.0 * s / (kr * kr) - 3.0 * c / (kr * kr * kr);
    let pre = -ct * st;
    Ok(AngularProfiles {
        fx: pre * cp * bf,
        fy: pre * sp * bf,
        fz,
        gx: pre * cp * bg,
        gy: pre * sp * bg,
        gz,
    })
}

pub fn coupling_kernels(ensemble: &EmitterEnsemble) -> Result<CouplingKernels> {
    let n = ensemble.len();
    let gamma = ensemble.gamma;
    let mut omega = DMatrix::zeros(n, n);
    let mut gm = DMatrix::identity(n, n) * gamma;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = ensemble.positions[i] - ensemble.positions[j];
            let dist = r.norm();
            if dist == 0.0 {
                return Err(Error::CoincidentEmitters(i, j));
            }
            let (fz, gz) = fz_gz(ensemble.k_e * dist, r.dot(&ensemble.dipole) / dist);
            omega[(i, j)] = -0.75 * gamma * gz;
            omega[(j, i)] = omega[(i, j)];
            gm[(i, j)] = 1.5 * gamma * fz;
            gm[(j, i)] = gm[(i, j)];
        }
    }
    let mut h = &gm / gamma;
    for i in 0..n {
        h[(i, i)] = 1.0;
    }
    Ok(CouplingKernels { omega, gamma_matrix: gm, h, gamma })
}

/// Orthonormal frame (e1, e2, mu) used to resolve field components.
pub fn dipole_frame(dipole: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = if dipole.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (a - dipole * a.dot(dipole)).normalize();
    let e2 = dipole.cross(&e1);
    (e1, e2)
}

/// Complex field vector F - iG at displacement `r` from a dipole, in lab coordinates.
pub fn field_vector(r: &Vector3<f64>, dipole: &Vector3<f64>, k_e: f64) -> Result<Vector3<Complex64>> {
    let dist = r.norm();
    if dist == 0.0 {
        return Err(Error::InvalidInput("observation point coincides with an emitter".into()));
    }
    let (e1, e2) = dipole_frame(dipole);
    let u = r / dist;
    let theta = u.dot(dipole).clamp(-1.0, 1.0).acos();
    let phi = u.dot(&e2).atan2(u.dot(&e1));
    let p = angular_profiles(k_e * dist, theta, phi)?;
    let fx = Complex64::new(p.fx, -p.gx);
    let fy = Complex64::new(p.fy, -p.gy);
    let fz = Complex64::new(p.fz, -p.gz);
    Ok(e1.map(|v| fx * v) + e2.map(|v| fy * v) + dipole.map(|v| fz * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn fz_small_argument_limit() {
        for theta in [0.0, 0.3, 1.0, PI / 2.0] {
            let p = angular_profiles(1e-7, theta, 0.0).unwrap();
            assert!((p.fz - 2.0 / 3.0).abs() < 1e-9, "theta {theta}: {}", p.fz);
        }
    }

    #[test]
    fn fz_at_half_wavelength_equator() {
        let p = angular_profiles(PI, PI / 2.0, 0.0).unwrap();
        assert!((p.fz + 1.0 / (PI * PI)).abs() < 1e-14);
        assert!((p.fz + 0.10132).abs() < 1e-5);
    }

    #[test]
    fn transverse_components_vanish_on_equator() {
        for kr in [1e-4, 0.1, 1.0, 7.3] {
            let p = angular_profiles(kr, PI / 2.0, 0.4).unwrap();
            for v in [p.fx, p.fy, p.gx, p.gy] {
                assert!(v.abs() < 1e-12 * (1.0 + p.gz.abs()));
            }
        }
    }

    #[test]
    fn series_matches_closed_form_at_switch() {
        let x = SERIES_SWITCH;
        let closed = x.cos() / (x * x) - x.sin() / (x * x * x);
        let series = longitudinal_bracket(x * (1.0 - 1e-15));
        assert!(((series - closed) / closed).abs() < 1e-9);
        for theta in [0.0, 0.7, PI / 2.0] {
            let below = angular_profiles(x * (1.0 - 1e-12), theta, 0.2).unwrap();
            let above = angular_profiles(x, theta, 0.2).unwrap();
            assert!(((below.fz - above.fz) / above.fz).abs() < 1e-9);
            assert!(((below.gz - above.gz) / above.gz).abs() < 1e-9);
        }
    }

    #[test]
    fn transverse_series_matches_closed_form_at_switch() {
        let x = TRANSVERSE_SWITCH;
        let closed = x.sin() / x + 3.0 * x.cos() / (x * x) - 3.0 * x.sin() / (x * x * x);
        let series = transverse_bracket(x * (1.0 - 1e-15));
        assert!(((series - closed) / closed).abs() < 1e-11);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(angular_profiles(f64::NAN, 0.0, 0.0).is_err());
        assert!(angular_profiles(1.0, f64::INFINITY, 0.0).is_err());
        assert!(angular_profiles(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn near_contact_pair_is_fully_correlated() {
        let lam = 1e-6 / (2.0 * PI);
        let e = EmitterEnsemble::chain(2, lam, Orientation::Perpendicular, 1.0).unwrap();
        let k = coupling_kernels(&e).unwrap();
        assert!((k.h[(0, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn half_wavelength_perpendicular_pair() {
        let e = EmitterEnsemble::chain(2, 0.5, Orientation::Perpendicular, 0.05).unwrap();
        let k = coupling_kernels(&e).unwrap();
        assert!((k.h[(0, 1)] + 1.5 / (PI * PI)).abs() < 1e-12);
        assert!((k.h[(0, 1)] + 0.15198).abs() < 1e-5);
    }

    #[test]
    fn single_emitter_kernels() {
        let e = EmitterEnsemble::chain(1, 0.1, Orientation::Perpendicular, 0.05).unwrap();
        let k = coupling_kernels(&e).unwrap();
        assert_eq!(k.omega, DMatrix::zeros(1, 1));
        assert_eq!(k.gamma_matrix, DMatrix::from_element(1, 1, 0.05));
    }

    #[test]
    fn coincident_emitters_rejected() {
        let p = vec![Vector3::zeros(), Vector3::zeros()];
        assert!(matches!(
            EmitterEnsemble::new(p, Vector3::y(), 1.0, 1.0),
            Err(Error::CoincidentEmitters(0, 1))
        ));
    }

    #[test]
    fn field_vector_is_frame_consistent() {
        // on the dipole axis only the longitudinal component survives
        let f = field_vector(&Vector3::new(0.0, 0.0, 0.8), &Vector3::z(), 2.0 * PI).unwrap();
        assert!(f.x.norm() < 1e-14 && f.y.norm() < 1e-14);
        let p = angular_profiles(2.0 * PI * 0.8, 0.0, 0.0).unwrap();
        assert!((f.z - Complex64::new(p.fz, -p.gz)).norm() < 1e-14);
    }
}
