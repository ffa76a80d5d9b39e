//! Free-space collective physics: nearest-neighbour excitons, diagonal decay
//! channels and radiation-intensity maps.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::greens::{field_vector, EmitterEnsemble};
use crate::linalg::{c, CMatrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitonState {
    pub n: usize,
    pub m: usize,
    pub coeffs: Vec<f64>,
}

impl ExcitonState {
    /// Single-excitation coherence matrix `<S_i+ S_j> = c_i c_j`.
    pub fn coherence(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| c(self.coeffs[i] * self.coeffs[j], 0.0))
    }
}

fn check_index(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::InvalidInput(format!("exciton index m = {m} outside 1..={n}")));
    }
    Ok(())
}

pub fn exciton_state(n: usize, m: usize) -> Result<ExcitonState> {
    check_index(n, m)?;
    let norm = (2.0 / (n as f64 + 1.0)).sqrt();
    let coeffs = (1..=n).map(|j| norm * (PI * (m * j) as f64 / (n as f64 + 1.0)).sin()).collect();
    Ok(ExcitonState { n, m, coeffs })
}

/// `omega_e + 2 Omega12 cos(pi m / (N + 1))`.
pub fn exciton_energy(n: usize, m: usize, omega_e: f64, omega12: f64) -> Result<f64> {
    check_index(n, m)?;
    Ok(omega_e + 2.0 * omega12 * (PI * m as f64 / (n as f64 + 1.0)).cos())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayChannels {
    /// Channel rates, descending.
    pub lambdas: DVector<f64>,
    /// Orthogonal matrix whose columns are the channel vectors.
    pub t: DMatrix<f64>,
}

impl DecayChannels {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.t * DMatrix::from_diagonal(&self.lambdas) * self.t.transpose()
    }
}

pub fn diagonal_decay_channels(gamma_matrix: &DMatrix<f64>) -> Result<DecayChannels> {
    let n = gamma_matrix.nrows();
    if gamma_matrix.ncols() != n {
        return Err(Error::Dimension("decay matrix must be square".into()));
    }
    let scale = gamma_matrix.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (gamma_matrix[(i, j)] - gamma_matrix[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("decay matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    if n == 0 {
        return Ok(DecayChannels { lambdas: DVector::zeros(0), t: DMatrix::zeros(0, 0) });
    }
    let eig = gamma_matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambdas = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut t = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        t.set_column(col, &eig.eigenvectors.column(k));
    }
    Ok(DecayChannels { lambdas, t })
}

/// Total emission rate `sum_ij c_i c_j gamma_ij` of a single-excitation state.
pub fn collective_rate(gamma_matrix: &DMatrix<f64>, coeffs: &[f64]) -> f64 {
    let v = DVector::from_column_slice(coeffs);
    (v.transpose() * gamma_matrix * &v)[(0, 0)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityMap {
    pub points: Vec<[f64; 3]>,
    /// Intensity per point without the `(3 gamma / 4 mu)^2` prefactor;
    /// `None` where the point coincides with an emitter.
    pub intensity: Vec<Option<f64>>,
}

impl IntensityMap {
    pub fn max(&self) -> f64 {
        self.intensity.iter().flatten().fold(0.0_f64, |m, &v| m.max(v))
    }

    pub fn skipped(&self) -> usize {
        self.intensity.iter().filter(|v| v.is_none()).count()
    }
}

/// `I(r) = sum_ij <S_i+ S_j> conj(E_i(r)) . E_j(r)` with `E_i = F - iG` about emitter `i`.
pub fn radiation_intensity(ensemble: &EmitterEnsemble, coherence: &CMatrix, points: &[Vector3<f64>]) -> Result<IntensityMap> {
    let n = ensemble.len();
    if coherence.nrows() != n || coherence.ncols() != n {
        return Err(Error::Dimension(format!("coherence matrix must be {n}x{n}")));
    }
    let scale = crate::linalg::max_abs(coherence).max(f64::MIN_POSITIVE);
    if crate::linalg::max_abs(&(coherence - coherence.adjoint())) > 1e-10 * scale {
        return Err(Error::InvalidInput("coherence matrix is not Hermitian".into()));
    }
    let mut intensity = Vec::with_capacity(points.len());
    for r in points {
        let fields: Option<Vec<_>> = ensemble
            .positions
            .iter()
            .map(|p| field_vector(&(r - p), &ensemble.dipole, ensemble.k_e).ok())
            .collect();
        let Some(fields) = fields else {
            intensity.push(None);
            continue;
        };
        let mut total = c(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let dot: num_complex::Complex64 = (0..3).map(|k| fields[i][k].conj() * fields[j][k]).sum();
                total += coherence[(i, j)] * dot;
            }
        }
        intensity.push(Some(total.re));
    }
    Ok(IntensityMap { points: points.iter().map(|p| [p.x, p.y, p.z]).collect(), intensity })
}

/// Rectangular x-y grid at fixed `z`, row-major in y.
pub fn plane_grid(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize, z: f64) -> Vec<Vector3<f64>> {
    let step = |(lo, hi): (f64, f64), n: usize, k: usize| if n > 1 { lo + (hi - lo) * k as f64 / (n - 1) as f64 } else { lo };
    (0..ny).flat_map(|iy| (0..nx).map(move |ix| Vector3::new(step(x, nx, ix), step(y, ny, iy), z))).collect()
}

/// Trapezoid integral of a plane map produced by [`plane_grid`].
pub fn plane_integral(map: &IntensityMap, x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> f64 {
    if nx < 2 || ny < 2 {
        return 0.0;
    }
    let (dx, dy) = ((x.1 - x.0) / (nx - 1) as f64, (y.1 - y.0) / (ny - 1) as f64);
    let mut total = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let w = if ix == 0 || ix == nx - 1 { 0.5 } else { 1.0 } * if iy == 0 || iy == ny - 1 { 0.5 } else { 1.0 };
            total += w * map.intensity[iy * nx + ix].unwrap_or(0.0);
        }
    }
    total * dx * dy
}
