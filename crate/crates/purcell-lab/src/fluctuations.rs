//! Linearized quantum fluctuations: drift, diffusion, Lyapunov covariance,
//! output spectra and time-integrated detection statistics.
//!
//! Operator ordering is `(a, a+, s_1..s_N, s+_1..s+_N, sz_1..sz_N)`; inputs are
//! `(a_in, a_in+, b_in, b_in+, xi_1.., xi+_1.., xiz_1..)`. Spectrum indices in
//! the docs (S33, S43, ...) are 1-based into that input/output ordering.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, eigenvalues, lyapunov_kronecker, lyapunov_schur, max_abs, solve, CMatrix, I};
use crate::steadystate::{CavitySystem, ClassicalState};

/// Largest drift dimension solved through the Kronecker operator.
pub const KRONECKER_MAX_DIM: usize = 20;

#[derive(Debug, Clone)]
pub struct FluctuationSystem {
    pub m: CMatrix,
    pub n_mat: CMatrix,
    pub c_mat: CMatrix,
    pub d: CMatrix,
    pub n_emitters: usize,
}

impl FluctuationSystem {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.n_mat.ncols()
    }
}

/// Index helpers for the operator vector.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn s(&self, j: usize) -> usize {
        2 + j
    }
    pub fn sd(&self, j: usize) -> usize {
        2 + self.n + j
    }
    pub fn sz(&self, j: usize) -> usize {
        2 + 2 * self.n + j
    }
    pub fn xi(&self, j: usize) -> usize {
        4 + j
    }
    pub fn xid(&self, j: usize) -> usize {
        4 + self.n + j
    }
    pub fn xiz(&self, j: usize) -> usize {
        4 + 2 * self.n + j
    }
}

pub fn build_fluctuation_system(sys: &CavitySystem, state: &ClassicalState) -> Result<FluctuationSystem> {
    let n = sys.n();
    if state.beta.len() != n || state.z.len() != n {
        return Err(Error::Dimension(format!("state has {} amplitudes for {n} emitters", state.beta.len())));
    }
    let lay = Layout { n };
    let dim = 2 + 3 * n;
    let nin = 4 + 3 * n;
    let gamma = sys.gamma();
    let kap = sys.kappa();
    let k = &sys.kernels;
    let (alpha, beta, z) = (state.alpha, &state.beta, &state.z);
    let coupling = |j: usize, l: usize| c(k.gamma_matrix[(j, l)], k.omega[(j, l)]);

    let mut m = CMatrix::zeros(dim, dim);
    m[(0, 0)] = -c(kap, -sys.delta_c);
    m[(1, 1)] = -c(kap, sys.delta_c);
    for j in 0..n {
        let g = sys.g[j];
        m[(0, lay.s(j))] = -I * g;
        m[(1, lay.sd(j))] = I * g;
        m[(lay.s(j), 0)] = I * g * z[j];
        m[(lay.sd(j), 1)] = -I * g * z[j];

        let mut b = I * g * alpha;
        let mut kjj = 2.0 * I * g * alpha.conj();
        for l in 0..n {
            let a = if l == j { -c(gamma, -sys.delta_e) } else { coupling(j, l) * z[j] };
            m[(lay.s(j), lay.s(l))] = a;
            m[(lay.sd(j), lay.sd(l))] = a.conj();
            if l != j {
                b += coupling(j, l) * beta[l];
                // exchange keeps the inversion rows consistent with the Hamiltonian
                kjj -= 2.0 * c(k.gamma_matrix[(j, l)], -k.omega[(j, l)]) * beta[l].conj();
                let kjl = -2.0 * coupling(j, l) * beta[j].conj();
                m[(lay.sz(j), lay.s(l))] = kjl;
                m[(lay.sz(j), lay.sd(l))] = kjl.conj();
            }
        }
        m[(lay.s(j), lay.sz(j))] = b;
        m[(lay.sd(j), lay.sz(j))] = b.conj();
        m[(lay.sz(j), lay.s(j))] = kjj;
        m[(lay.sz(j), lay.sd(j))] = kjj.conj();
        m[(lay.sz(j), 0)] = -2.0 * I * g * beta[j].conj();
        m[(lay.sz(j), 1)] = 2.0 * I * g * beta[j];
        m[(lay.sz(j), lay.sz(j))] = c(-2.0 * gamma, 0.0);
    }

    let mut nm = CMatrix::zeros(dim, nin);
    let (ska, skb) = (sys.kappa_a.sqrt(), sys.kappa_b.sqrt());
    nm[(0, 0)] = c(ska, 0.0);
    nm[(0, 2)] = c(skb, 0.0);
    nm[(1, 1)] = c(ska, 0.0);
    nm[(1, 3)] = c(skb, 0.0);
    let s2g = (2.0 * gamma).sqrt();
    for j in 0..n {
        nm[(lay.s(j), lay.xi(j))] = c(-s2g, 0.0);
        nm[(lay.sd(j), lay.xid(j))] = c(-s2g, 0.0);
        nm[(lay.sz(j), lay.xiz(j))] = c(s2g, 0.0);
    }

    let mut cm = CMatrix::zeros(nin, nin);
    cm[(0, 1)] = c(1.0, 0.0);
    cm[(2, 3)] = c(1.0, 0.0);
    for j in 0..n {
        for l in 0..n {
            let h = k.h[(j, l)];
            if j == l {
                cm[(lay.xi(j), lay.xid(j))] = c(1.0, 0.0);
                cm[(lay.xiz(j), lay.xiz(j))] = c(2.0 * (z[j] + 1.0), 0.0);
                cm[(lay.xiz(j), lay.xid(j))] = -2.0 * beta[j].conj();
            } else {
                cm[(lay.xi(j), lay.xid(l))] = c(h * z[j] * z[l], 0.0);
                cm[(lay.xiz(j), lay.xiz(l))] = 4.0 * h * beta[j].conj() * beta[l];
                cm[(lay.xiz(j), lay.xid(l))] = 2.0 * h * z[l] * beta[j].conj();
            }
        }
    }
    for j in 0..n {
        for l in 0..n {
            cm[(lay.xi(j), lay.xiz(l))] = cm[(lay.xiz(l), lay.xid(j))].conj();
        }
    }
    let d = &nm * &cm * nm.transpose();
    Ok(FluctuationSystem { m, n_mat: nm, c_mat: cm, d, n_emitters: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stability {
    pub is_stable: bool,
    pub spectral_abscissa: f64,
}

pub fn stability(m: &CMatrix) -> Result<Stability> {
    if m.nrows() != m.ncols() || m.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidInput("stability needs a finite square matrix".into()));
    }
    let ev = eigenvalues(m)?;
    let a = ev.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(Stability { is_stable: a < 0.0, spectral_abscissa: a })
}

/// Slowest decay rate of a stable drift matrix.
pub fn narrowest_rate(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|v| -v.re).fold(f64::INFINITY, f64::min))
}

/// Steady covariance `V` with `M V + V M^T = -D`.
pub fn solve_lyapunov(m: &CMatrix, d: &CMatrix) -> Result<CMatrix> {
    let st = stability(m)?;
    if !st.is_stable {
        return Err(Error::Unstable(st.spectral_abscissa));
    }
    let scale = max_abs(d);
    if scale == 0.0 {
        return Ok(CMatrix::zeros(m.nrows(), m.nrows()));
    }
    let check = |v: &CMatrix| max_abs(&(m * v + v * m.transpose() + d)) / scale;
    let v = if m.nrows() <= KRONECKER_MAX_DIM { lyapunov_kronecker(m, d)? } else { lyapunov_schur(m, d)? };
    let res = check(&v);
    if res < 1e-10 {
        return Ok(v);
    }
    let alt = if m.nrows() <= KRONECKER_MAX_DIM { lyapunov_schur(m, d)? } else { lyapunov_kronecker(m, d)? };
    let res_alt = check(&alt);
    if res_alt < 1e-10 {
        Ok(alt)
    } else {
        Err(Error::NoConvergence { iterations: 0, residual: res.min(res_alt) })
    }
}

/// Intracavity quadrature variances `(X, Y)` from a covariance `V`, with
/// `X = (a + a+)/sqrt 2`; vacuum gives 1/2.
pub fn intracavity_quadratures(v: &CMatrix) -> (f64, f64) {
    let s = v[(0, 1)] + v[(1, 0)];
    let var_x = 0.5 * (v[(0, 0)] + s + v[(1, 1)]).re;
    let var_y = 0.5 * (s - v[(0, 0)] - v[(1, 1)]).re;
    (var_x, var_y)
}

#[derive(Debug, Clone)]
pub struct SpectrumMatrix {
    pub s: CMatrix,
    pub omega: f64,
}

impl SpectrumMatrix {
    /// 1-based entry access matching the S^{ij} notation.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.s[(i - 1, j - 1)]
    }
}

fn transfer(fs: &FluctuationSystem, omega: f64) -> Result<CMatrix> {
    let n = fs.dim();
    let mut a = -fs.m.clone();
    for i in 0..n {
        a[(i, i)] += I * omega;
    }
    let x = solve(&a, &fs.n_mat, "output resolvent")?;
    Ok(fs.n_mat.transpose() * x - CMatrix::identity(fs.inputs(), fs.inputs()))
}

/// `S(w) = F(w) C F(-w)^T` with `F(w) = N^T (iw - M)^{-1} N - 1`.
pub fn output_spectrum(fs: &FluctuationSystem, omega: f64) -> Result<SpectrumMatrix> {
    let f = transfer(fs, omega)?;
    let fm = transfer(fs, -omega)?;
    Ok(SpectrumMatrix { s: f * &fs.c_mat * fm.transpose(), omega })
}

/// Intracavity spectrum `(iw - M)^{-1} D (-iw - M)^{-T}`; integrates to `2 pi V`.
pub fn intracavity_spectrum(fs: &FluctuationSystem, omega: f64) -> Result<CMatrix> {
    let n = fs.dim();
    let shifted = |w: f64| {
        let mut a = -fs.m.clone();
        for i in 0..n {
            a[(i, i)] += I * w;
        }
        a
    };
    let left = solve(&shifted(omega), &fs.d, "intracavity resolvent")?;
    let right = solve(&shifted(-omega).transpose(), &left.transpose(), "intracavity resolvent")?;
    Ok(right.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectedStats {
    pub mean_amp_t: Complex64,
    pub mean_amp_r: Complex64,
    pub var_x: f64,
    pub var_y: f64,
    pub n_det: f64,
    /// Photon-number variance from the Gaussian four-point expansion.
    pub var_n: f64,
    /// The compact closed form with |S44|^2 in place of S44 S33.
    pub var_n_closed: f64,
    pub g2: f64,
    pub t_window: f64,
}

/// Gaussian (Isserlis) four-point moment `<b+ b b+ b>` from two-point moments.
pub fn four_point_number(s33: Complex64, s43: Complex64, s34: Complex64, s44: Complex64) -> Complex64 {
    s43 * s43 + s44 * s33 + s43 * s34
}

/// Gaussian four-point moment `<b+ b+ b b>`.
pub fn four_point_pair(s33: Complex64, s43: Complex64, s44: Complex64) -> Complex64 {
    s44 * s33 + 2.0 * s43 * s43
}

/// Statistics of the long-window detected transmission from `S(0)` and the
/// mean detected amplitudes.
pub fn detected_statistics(
    s0: &SpectrumMatrix,
    mean_amp_t: Complex64,
    mean_amp_r: Complex64,
    t_window: f64,
) -> Result<DetectedStats> {
    let s33 = s0.entry(3, 3);
    let s43 = s0.entry(4, 3);
    let s34 = s0.entry(3, 4);
    let s44 = s0.entry(4, 4);
    let b = mean_amp_t;
    let b2 = b.norm_sqr();
    let n_det = b2 + s43.re;
    if n_det < -1e-12 {
        return Err(Error::NegativePhotonNumber(n_det));
    }
    let var_n = four_point_number(s33, s43, s34, s44) - s43 * s43
        + b2 * (1.0 + 2.0 * s43)
        + b.conj().powi(2) * s33
        + b.powi(2) * s44;
    let var_n_closed = s44.norm_sqr() + b2 * (1.0 + 2.0 * s43.re) + 2.0 * (b.powi(2) * s44).re + (s43 * s34).re;
    let num = b2 * b2 + 4.0 * b2 * s43 + b.powi(2) * s44 + b.conj().powi(2) * s33 + four_point_pair(s33, s43, s44);
    let den = (b2 + s43.re).powi(2);
    let g2 = if den > 0.0 { num.re / den } else { 1.0 };
    Ok(DetectedStats {
        mean_amp_t,
        mean_amp_r,
        var_x: 0.5 + s43.re + s33.re,
        var_y: 0.5 + s43.re - s33.re,
        n_det: n_det.max(0.0),
        var_n: var_n.re,
        var_n_closed,
        g2,
        t_window,
    })
}

/// Mean detected amplitudes (transmission, reflection) over a window of half-width `t_window`.
pub fn detected_means(sys: &CavitySystem, state: &ClassicalState, t_window: f64) -> (Complex64, Complex64) {
    let w = (2.0 * t_window).sqrt();
    let b = state.alpha * sys.kappa_b.sqrt() * w;
    let a = (state.alpha * sys.kappa_a.sqrt() - sys.eta / sys.kappa_a.sqrt()) * w;
    (b, a)
}

/// Full pipeline at one operating point: fluctuation system, `S(0)` and the
/// detected statistics. Returns whether the window exceeds ten inverse
/// linewidths alongside.
pub fn detected_point(sys: &CavitySystem, state: &ClassicalState, t_window: f64) -> Result<(DetectedStats, bool)> {
    let fs = build_fluctuation_system(sys, state)?;
    let st = stability(&fs.m)?;
    if !st.is_stable {
        return Err(Error::Unstable(st.spectral_abscissa));
    }
    let window_ok = t_window * narrowest_rate(&fs.m)? > 10.0;
    if !window_ok {
        log::warn!("detection window T = {t_window} is short against the narrowest linewidth");
    }
    let s0 = output_spectrum(&fs, 0.0)?;
    let (b, a) = detected_means(sys, state, t_window);
    Ok((detected_statistics(&s0, b, a, t_window)?, window_ok))
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F>(f: &F, a: f64, b: f64, fa: &CMatrix, fm: &CMatrix, fb: &CMatrix, tol: f64, depth: usize) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let flm = f(lm)?;
    let frm = f(rm)?;
    let h = b - a;
    let whole = (fa + fm * c(4.0, 0.0) + fb) * c(h / 6.0, 0.0);
    let left = (fa + &flm * c(4.0, 0.0) + fm) * c(h / 12.0, 0.0);
    let right = (fm + &frm * c(4.0, 0.0) + fb) * c(h / 12.0, 0.0);
    let split = &left + &right;
    let err = max_abs(&(&split - &whole));
    if depth == 0 || err <= 15.0 * tol {
        return Ok(&split + (&split - &whole) / c(15.0, 0.0));
    }
    Ok(adaptive_simpson(f, a, m, fa, &flm, fm, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, m, b, fm, &frm, fb, 0.5 * tol, depth - 1)?)
}

/// Adaptive Simpson integral of a matrix-valued function on `[a, b]`.
pub fn integrate_matrix<F>(f: &F, a: f64, b: f64, tol: f64) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    let fa = f(a)?;
    let fm = f(0.5 * (a + b))?;
    let fb = f(b)?;
    adaptive_simpson(f, a, b, &fa, &fm, &fb, tol, 40)
}

/// Integral over the whole real line: panels of width `panel` on
/// `[-w, w]` and the tails mapped through `omega = w/u`. `f` must decay
/// like `1/omega^2`.
pub fn integrate_real_line<F>(f: &F, w: f64, panels: usize, tol: f64) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    let panels = panels.max(1);
    let step = 2.0 * w / panels as f64;
    let mut total = integrate_matrix(f, -w, -w + step, tol / panels as f64)?;
    for p in 1..panels {
        let a = -w + p as f64 * step;
        total += integrate_matrix(f, a, a + step, tol / panels as f64)?;
    }
    let tail = |sign: f64| {
        move |u: f64| -> Result<CMatrix> {
            let u = u.max(1e-12);
            let om = sign * w / u;
            Ok(f(om)? * c(w / (u * u), 0.0))
        }
    };
    total += integrate_matrix(&tail(1.0), 0.0, 1.0, tol)?;
    total += integrate_matrix(&tail(-1.0), 0.0, 1.0, tol)?;
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteTOptions {
    /// Number of sinc^2 lobes resolved on each side of zero.
    pub lobes: usize,
    /// Absolute tolerance per matrix entry.
    pub tol: f64,
}

impl Default for FiniteTOptions {
    fn default() -> Self {
        Self { lobes: 40, tol: 1e-10 }
    }
}

/// Detected correlation matrix for a finite window of half-width `t_window`:
/// `(1/(pi T)) * integral of sin^2(wT)/w^2 S(w)`.
pub fn detected_correlations_finite_t(fs: &FluctuationSystem, t_window: f64, opts: FiniteTOptions) -> Result<CMatrix> {
    if !(t_window > 0.0) {
        return Err(Error::InvalidInput("detection window must be positive".into()));
    }
    let lobe = std::f64::consts::PI / t_window;
    let w = opts.lobes as f64 * lobe;
    if w < 40.0 / t_window {
        return Err(Error::WindowTooNarrow { required: 40.0 / t_window, given: w });
    }
    let pre = 1.0 / (std::f64::consts::PI * t_window);
    let near = |om: f64| -> Result<CMatrix> {
        let weight = if om == 0.0 { t_window * t_window } else { (om * t_window).sin().powi(2) / (om * om) };
        Ok(output_spectrum(fs, om)?.s * c(pre * weight, 0.0))
    };
    let mut total = CMatrix::zeros(fs.inputs(), fs.inputs());
    let lobes = 2 * opts.lobes;
    for k in 0..lobes {
        let a = -w + k as f64 * lobe;
        total += integrate_matrix(&near, a, a + lobe, opts.tol / lobes as f64)?;
    }
    // beyond the resolved lobes sin^2 averages to 1/2
    for sign in [1.0, -1.0] {
        let far = move |u: f64| -> Result<CMatrix> {
            let u = u.max(1e-12);
            Ok(output_spectrum(fs, sign * w / u)?.s * c(pre / (2.0 * w), 0.0))
        };
        total += integrate_matrix(&far, 0.0, 1.0, opts.tol)?;
    }
    Ok(total)
}

/// `V` recovered as `(1/2 pi) * integral of the intracavity spectrum`.
pub fn covariance_by_quadrature(fs: &FluctuationSystem, tol: f64) -> Result<CMatrix> {
    let ev = eigenvalues(&fs.m)?;
    let width = ev.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    let narrow = ev.iter().map(|v| -v.re).fold(f64::INFINITY, f64::min);
    let w = 20.0 * width.max(1e-3);
    let panels = ((2.0 * w / narrow).ceil() as usize).clamp(64, 200_000);
    let f = |om: f64| intracavity_spectrum(fs, om);
    Ok(integrate_real_line(&f, w, panels, tol)? / c(2.0 * std::f64::consts::PI, 0.0))
}

/// Forward-Euler-free reference: integrate `dV/dt = M V + V M^T + D` with RK4.
pub fn covariance_by_integration(fs: &FluctuationSystem, t_end: f64, dt: f64) -> CMatrix {
    let n = fs.dim();
    let rhs = |v: &CMatrix| &fs.m * v + v * fs.m.transpose() + &fs.d;
    let mut v = CMatrix::zeros(n, n);
    let steps = (t_end / dt).ceil() as usize;
    let h = c(dt, 0.0);
    for _ in 0..steps {
        let k1 = rhs(&v);
        let k2 = rhs(&(&v + &k1 * (h * 0.5)));
        let k3 = rhs(&(&v + &k2 * (h * 0.5)));
        let k4 = rhs(&(&v + &k3 * h));
        v += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * (h / 6.0);
    }
    v
}
