//! Dense complex helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn to_complex_vec(v: &DVector<f64>) -> CVector {
    v.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.norm()))
}

/// Eigenvalues of a complex square matrix, read off the Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 10_000).ok_or(Error::EigenFailure)?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

fn singular(m: &CMatrix, context: &str) -> Error {
    let eigenvalue = eigenvalues(m)
        .ok()
        .and_then(|ev| ev.into_iter().min_by(|a, b| a.norm().total_cmp(&b.norm())))
        .map(|e| format!("{e}"))
        .unwrap_or_else(|| "unavailable".into());
    Error::Singular { context: context.into(), eigenvalue }
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: &CMatrix, b: &CMatrix, context: &str) -> Result<CMatrix> {
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    let lu = a.clone().lu();
    match lu.solve(b) {
        Some(x) if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => Ok(x),
        _ => Err(singular(a, context)),
    }
}

pub fn solve_vec(a: &CMatrix, b: &CVector, context: &str) -> Result<CVector> {
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    let lu = a.clone().lu();
    match lu.solve(b) {
        Some(x) if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => Ok(x),
        _ => Err(singular(a, context)),
    }
}

/// Kronecker route for `M V + V M^T = -D` (column-major vectorization).
pub fn lyapunov_kronecker(m: &CMatrix, d: &CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    let nn = n * n;
    let mut a = CMatrix::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for k in 0..n {
                a[(row, k + n * j)] += m[(i, k)];
                a[(row, i + n * k)] += m[(j, k)];
            }
        }
    }
    let rhs = CVector::from_iterator(nn, d.iter().map(|v| -v));
    let x = solve_vec(&a, &rhs, "Lyapunov operator")?;
    Ok(CMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Bartels-Stewart route via the complex Schur form `M = U T U*`.
pub fn lyapunov_schur(m: &CMatrix, d: &CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 10_000).ok_or(Error::EigenFailure)?;
    let (u, t) = schur.unpack();
    let f = -(u.adjoint() * d * u.conjugate());
    let mut y = CMatrix::zeros(n, n);
    for j in (0..n).rev() {
        let mut rhs = f.column(j).into_owned();
        for k in (j + 1)..n {
            let tjk = t[(j, k)];
            if tjk != Complex64::new(0.0, 0.0) {
                rhs -= y.column(k) * tjk;
            }
        }
        let mut shifted = t.clone();
        for i in 0..n {
            shifted[(i, i)] += t[(j, j)];
        }
        let col = shifted
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| singular(m, "Lyapunov triangular solve"))?;
        y.set_column(j, &col);
    }
    Ok(&u * y * u.transpose())
}
