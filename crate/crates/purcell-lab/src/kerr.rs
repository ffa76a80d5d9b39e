//! Third-order (Kerr) correction to the weak-drive dipole response.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, solve_vec, to_complex, CMatrix, CVector, I};
use crate::steadystate::{effective_quantities, loglog_slope, CavitySystem, ChainSpec, Symmetry, FIT_MIN_N};

/// Largest excited population admitted for Kerr claims.
pub const POPULATION_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct KerrResult {
    pub beta1: CVector,
    pub beta3: CVector,
    pub t_lin: Complex64,
    pub t_nl: Complex64,
    pub norm_beta3: f64,
}

impl KerrResult {
    pub fn max_population(&self) -> f64 {
        (&self.beta1 + &self.beta3).iter().fold(0.0_f64, |m, b| m.max(b.norm_sqr()))
    }

    /// Error unless every `|beta_j|^2` stays under `limit`.
    pub fn check_population(&self, limit: f64) -> Result<()> {
        let p = self.max_population();
        if p > limit {
            return Err(Error::PopulationGuard(p));
        }
        Ok(())
    }
}

// K_c (i Omega + Gamma + extra) + G G^T
fn cavity_dressed(sys: &CavitySystem, diagonal: Complex64, subtract_gamma: bool) -> CMatrix {
    let n = sys.n();
    let k = &sys.kernels;
    let mut m = to_complex(&k.gamma_matrix) + to_complex(&k.omega) * I;
    for j in 0..n {
        m[(j, j)] += diagonal;
        if subtract_gamma {
            m[(j, j)] -= sys.gamma();
        }
    }
    let g = to_complex(&DMatrix::from_column_slice(n, 1, sys.g.as_slice()));
    m * sys.kc() + &g * g.transpose()
}

fn transmission(sys: &CavitySystem, beta: &CVector) -> Complex64 {
    if sys.eta == 0.0 {
        return (sys.kappa_a * sys.kappa_b).sqrt() / sys.kc();
    }
    let gb: Complex64 = sys.g.iter().zip(beta.iter()).map(|(g, b)| b * *g).sum();
    (sys.kappa_a * sys.kappa_b).sqrt() * (1.0 - I * gb / sys.eta) / sys.kc()
}

/// Linear response `beta1` and its cubic correction
/// `beta3 = 2 L^{-1} diag(|beta1|^2) (i eta G + W beta1)` with
/// `L = K_c (i Omega + Gamma - i Delta_e) + G G^T` and `W` the same with
/// `Gamma - gamma` and no detuning.
pub fn kerr_correction(sys: &CavitySystem) -> Result<KerrResult> {
    let n = sys.n();
    let l = cavity_dressed(sys, c(0.0, -sys.delta_e), false);
    let w = cavity_dressed(sys, c(0.0, 0.0), true);
    let g = sys.g_complex();
    let unit = solve_vec(&l, &(&g * -I), "Kerr resolvent")?;
    let eta = sys.eta;
    let beta1 = &unit * c(eta, 0.0);
    let source = &g * I + &w * &unit;
    let weighted = CVector::from_fn(n, |j, _| 2.0 * unit[j].norm_sqr() * source[j]);
    let beta3 = solve_vec(&l, &weighted, "Kerr resolvent")? * c(eta.powi(3), 0.0);
    let t_lin = transmission(sys, &beta1);
    let t_nl = transmission(sys, &(&beta1 + &beta3));
    let norm_beta3 = beta3.norm();
    Ok(KerrResult { beta1, beta3, t_lin, t_nl, norm_beta3 })
}

/// `2 eta^3 / N * sqrt((NC)^3 / (gamma^3 (1 + NC)^8 kappa^3))`, the resonant
/// magnitude for N independent emitters with identical coupling.
pub fn independent_kerr_magnitude(n: usize, coop: f64, gamma: f64, kappa: f64, eta: f64) -> f64 {
    let nc = n as f64 * coop;
    2.0 * eta.powi(3) / n as f64 * (nc.powi(3) / (gamma.powi(3) * (1.0 + nc).powi(8) * kappa.powi(3))).sqrt()
}

/// Closed-form Kerr magnitude of two emitters with the cavity matched to the
/// addressed collective state.
pub fn two_emitter_resonant_kerr(sys: &CavitySystem) -> Result<f64> {
    if sys.n() != 2 {
        return Err(Error::InvalidInput(format!("two-emitter formula needs N = 2, got {}", sys.n())));
    }
    let q = effective_quantities(sys)?;
    let gamma = sys.gamma();
    let omega12 = sys.kernels.omega[(0, 1)];
    let ce = q.c_eff;
    let base = q.gamma_eff * (1.0 + ce);
    Ok((ce.powi(3) / (1.0 + ce).powi(3)).sqrt() * sys.eta.powi(3) * (gamma * gamma + omega12 * omega12).sqrt()
        / (base.powi(5) * sys.kappa().powi(3)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KerrRow {
    /// Emitter count or spacing, depending on the scan.
    pub x: f64,
    pub norm_beta3: f64,
    pub t_lin_abs2: f64,
    pub t_nl_abs2: f64,
    pub shift: f64,
    pub max_population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KerrScan {
    pub symmetry: Symmetry,
    pub matched: bool,
    pub rows: Vec<KerrRow>,
    pub exponent: Option<f64>,
}

fn kerr_row(sys: &CavitySystem, x: f64, shift: f64) -> Result<KerrRow> {
    let k = kerr_correction(sys)?;
    k.check_population(POPULATION_LIMIT)?;
    let p = k.max_population();
    if p > 1e-4 {
        log::warn!("excited population {p:e} at x = {x} is not in the weak-drive regime");
    }
    Ok(KerrRow {
        x,
        norm_beta3: k.norm_beta3,
        t_lin_abs2: k.t_lin.norm_sqr(),
        t_nl_abs2: k.t_nl.norm_sqr(),
        shift,
        max_population: p,
    })
}

/// Kerr magnitude for one chain length, matched or on bare resonance.
pub fn kerr_scaling_row(spec: &ChainSpec, n: usize, symmetry: Symmetry, eta: f64, matched: bool) -> Result<KerrRow> {
    let (sys, shift) = if matched { spec.matched_system(n, symmetry, eta)? } else { (spec.system(n, symmetry, eta)?, 0.0) };
    kerr_row(&sys, n as f64, shift)
}

/// Slope of log(norm_beta3) against log(N) for rows with `n_min <= N <= n_max`.
pub fn fit_kerr_rows(rows: &[KerrRow], n_min: usize, n_max: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.x >= n_min as f64 && r.x <= n_max as f64)
        .map(|r| (r.x, r.norm_beta3))
        .collect();
    loglog_slope(&pts)
}

pub fn kerr_scaling_scan(spec: &ChainSpec, ns: &[usize], symmetry: Symmetry, eta: f64, matched: bool) -> Result<KerrScan> {
    let rows = ns.iter().map(|&n| kerr_scaling_row(spec, n, symmetry, eta, matched)).collect::<Result<Vec<_>>>()?;
    let exponent = fit_kerr_rows(&rows, FIT_MIN_N, usize::MAX);
    Ok(KerrScan { symmetry, matched, rows, exponent })
}

/// Two emitters at spacing `d`, cavity matched to the state addressed by `symmetry`.
pub fn kerr_distance_row(spec: &ChainSpec, d: f64, symmetry: Symmetry, eta: f64) -> Result<KerrRow> {
    let at = ChainSpec { d, ..*spec };
    let (sys, shift) = at.matched_system(2, symmetry, eta)?;
    kerr_row(&sys, d, shift)
}

/// Analytic independent-emitter curve and its log-log slope.
pub fn independent_kerr_curve(ns: &[usize], coop: f64, gamma: f64, kappa: f64, eta: f64) -> (Vec<(f64, f64)>, Option<f64>) {
    let pts: Vec<(f64, f64)> = ns.iter().map(|&n| (n as f64, independent_kerr_magnitude(n, coop, gamma, kappa, eta))).collect();
    let slope = loglog_slope(&pts);
    (pts, slope)
}
