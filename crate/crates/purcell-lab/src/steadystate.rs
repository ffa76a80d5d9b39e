//! Classical steady states, linear response and collective effective quantities.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freespace::exciton_energy;
use crate::greens::{coupling_kernels, CouplingKernels, EmitterEnsemble, Orientation};
use crate::linalg::{c, solve_vec, to_complex, to_complex_vec, CMatrix, CVector, I};

#[derive(Debug, Clone)]
pub struct CavitySystem {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub delta_c: f64,
    pub delta_e: f64,
    pub eta: f64,
    pub g: DVector<f64>,
    pub kernels: CouplingKernels,
}

impl CavitySystem {
    pub fn new(
        kappa_a: f64,
        kappa_b: f64,
        delta_c: f64,
        delta_e: f64,
        eta: f64,
        g: DVector<f64>,
        kernels: CouplingKernels,
    ) -> Result<Self> {
        if !(kappa_a > 0.0 && kappa_b > 0.0) {
            return Err(Error::InvalidInput(format!("mirror rates must be positive, got {kappa_a}, {kappa_b}")));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidInput(format!("drive must be finite and non-negative, got {eta}")));
        }
        if !(delta_c.is_finite() && delta_e.is_finite()) {
            return Err(Error::InvalidInput("non-finite detuning".into()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coupling".into()));
        }
        if g.len() != kernels.len() {
            return Err(Error::Dimension(format!("{} couplings for {} emitters", g.len(), kernels.len())));
        }
        Ok(Self { kappa_a, kappa_b, delta_c, delta_e, eta, g, kernels })
    }

    /// Single-emitter convenience constructor with balanced mirrors.
    pub fn single(kappa: f64, gamma: f64, g: f64, delta_c: f64, delta_e: f64, eta: f64) -> Result<Self> {
        Self::new(kappa, kappa, delta_c, delta_e, eta, DVector::from_element(1, g), CouplingKernels::independent(1, gamma))
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn kappa(&self) -> f64 {
        0.5 * (self.kappa_a + self.kappa_b)
    }

    pub fn gamma(&self) -> f64 {
        self.kernels.gamma
    }

    pub fn is_balanced(&self) -> bool {
        (self.kappa_a - self.kappa_b).abs() <= 1e-14 * self.kappa()
    }

    /// kappa - i Delta_c
    pub fn kc(&self) -> Complex64 {
        c(self.kappa(), -self.delta_c)
    }

    pub fn with_detunings(&self, delta_c: f64, delta_e: f64) -> Self {
        Self { delta_c, delta_e, ..self.clone() }
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..self.clone() }
    }

    /// -i Delta_e 1 + i Omega + Gamma
    pub fn resolvent_matrix(&self) -> CMatrix {
        let n = self.n();
        let mut r = to_complex(&self.kernels.gamma_matrix) + to_complex(&self.kernels.omega) * I;
        for j in 0..n {
            r[(j, j)] -= I * self.delta_e;
        }
        r
    }

    pub fn g_complex(&self) -> CVector {
        to_complex_vec(&self.g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionModel {
    /// z_j = 2|beta_j|^2 - 1
    Closure,
    /// z_j from the stationary inversion equation, including exchange terms.
    Full,
}

#[derive(Debug, Clone)]
pub struct ClassicalState {
    pub alpha: Complex64,
    pub beta: CVector,
    pub z: DVector<f64>,
    pub inversion: InversionModel,
    pub iterations: usize,
    pub residual: f64,
}

impl ClassicalState {
    pub fn dark(n: usize) -> Self {
        Self {
            alpha: c(0.0, 0.0),
            beta: CVector::zeros(n),
            z: DVector::from_element(n, -1.0),
            inversion: InversionModel::Closure,
            iterations: 0,
            residual: 0.0,
        }
    }
}

fn alpha_of(sys: &CavitySystem, beta: &CVector) -> Complex64 {
    let gb: Complex64 = sys.g.iter().zip(beta.iter()).map(|(g, b)| b * *g).sum();
    (c(sys.eta, 0.0) - I * gb) / sys.kc()
}

fn beta_dot(sys: &CavitySystem, alpha: Complex64, beta: &CVector, z: &DVector<f64>) -> CVector {
    let n = sys.n();
    let gamma = sys.gamma();
    let k = &sys.kernels;
    CVector::from_fn(n, |j, _| {
        let mut v = -c(gamma, -sys.delta_e) * beta[j] + I * alpha * (sys.g[j] * z[j]);
        for l in 0..n {
            if l != j {
                v += c(k.gamma_matrix[(j, l)], k.omega[(j, l)]) * beta[l] * z[j];
            }
        }
        v
    })
}

fn z_dot(sys: &CavitySystem, alpha: Complex64, beta: &CVector, z: &DVector<f64>) -> DVector<f64> {
    let n = sys.n();
    let gamma = sys.gamma();
    let k = &sys.kernels;
    DVector::from_fn(n, |j, _| {
        let mut v = -2.0 * gamma * (z[j] + 1.0) - 4.0 * sys.g[j] * (alpha.conj() * beta[j]).im;
        for l in 0..n {
            if l != j {
                let p = beta[j].conj() * beta[l];
                v += -4.0 * k.gamma_matrix[(j, l)] * p.re + 4.0 * k.omega[(j, l)] * p.im;
            }
        }
        v
    })
}

fn residual(sys: &CavitySystem, beta: &CVector, z: &DVector<f64>, model: InversionModel) -> f64 {
    let alpha = alpha_of(sys, beta);
    let rb = beta_dot(sys, alpha, beta, z).iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    match model {
        InversionModel::Closure => rb,
        InversionModel::Full => rb.max(z_dot(sys, alpha, beta, z).amax()),
    }
}

// beta solving the averaged equations for fixed z
fn beta_for(sys: &CavitySystem, z: &DVector<f64>) -> Result<CVector> {
    let n = sys.n();
    let gamma = sys.gamma();
    let kc = sys.kc();
    let k = &sys.kernels;
    let mut a = CMatrix::zeros(n, n);
    for j in 0..n {
        for l in 0..n {
            let local = if j == l {
                c(-gamma, sys.delta_e)
            } else {
                c(k.gamma_matrix[(j, l)], k.omega[(j, l)]) * z[j]
            };
            a[(j, l)] = local + c(z[j] * sys.g[j] * sys.g[l], 0.0) / kc;
        }
    }
    let rhs = CVector::from_fn(n, |j, _| -I * sys.eta * z[j] * sys.g[j] / kc);
    solve_vec(&a, &rhs, "classical steady state")
}

const DAMPING: f64 = 0.5;
const MAX_ITER: usize = 10_000;

fn solve_with(sys: &CavitySystem, model: InversionModel) -> Result<ClassicalState> {
    let n = sys.n();
    if sys.eta == 0.0 {
        let mut s = ClassicalState::dark(n);
        s.inversion = model;
        return Ok(s);
    }
    let tol = 1e-13 * sys.eta;
    let mut z = DVector::from_element(n, -1.0);
    let mut beta = beta_for(sys, &z)?;
    for it in 1..=MAX_ITER {
        let zn = match model {
            InversionModel::Closure => beta.map(|b| 2.0 * b.norm_sqr() - 1.0),
            InversionModel::Full => {
                let alpha = alpha_of(sys, &beta);
                &z + z_dot(sys, alpha, &beta, &z) / (2.0 * sys.gamma())
            }
        };
        let bn = beta_for(sys, &zn)?;
        z = &z * DAMPING + zn * (1.0 - DAMPING);
        beta = &beta * c(DAMPING, 0.0) + bn * c(1.0 - DAMPING, 0.0);
        let bmax = beta.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
        if !(bmax <= 1.0) {
            return Err(Error::WeakExcitation(bmax));
        }
        if model == InversionModel::Closure {
            z = beta.map(|b| 2.0 * b.norm_sqr() - 1.0);
        }
        let res = residual(sys, &beta, &z, model);
        if res < tol {
            return Ok(ClassicalState { alpha: alpha_of(sys, &beta), beta, z, inversion: model, iterations: it, residual: res });
        }
        if it == MAX_ITER {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
    }
    unreachable!()
}

/// Damped fixed point of the averaged equations with `z = 2|beta|^2 - 1`.
pub fn solve_classical(sys: &CavitySystem) -> Result<ClassicalState> {
    solve_with(sys, InversionModel::Closure)
}

/// Same, with the inversion taken from its own stationary equation. This is
/// the state around which the linearized fluctuations keep exact commutators.
pub fn solve_classical_full(sys: &CavitySystem) -> Result<ClassicalState> {
    solve_with(sys, InversionModel::Full)
}

/// Residual of the dipole equations at `beta` with `z = 2|beta|^2 - 1`.
pub fn closure_residual(sys: &CavitySystem, beta: &CVector) -> f64 {
    let z = beta.map(|b| 2.0 * b.norm_sqr() - 1.0);
    residual(sys, beta, &z, InversionModel::Closure)
}

/// Residual of the averaged equations at a given state.
pub fn classical_residual(sys: &CavitySystem, state: &ClassicalState) -> f64 {
    residual(sys, &state.beta, &state.z, state.inversion)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridModes {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
}

/// Polariton decay rates and frequencies at resonance.
pub fn hybrid_modes(g: f64, kappa: f64, gamma: f64) -> Result<HybridModes> {
    if !(kappa > 0.0 && gamma > 0.0 && g >= 0.0) {
        return Err(Error::InvalidInput("hybrid_modes needs kappa, gamma > 0 and g >= 0".into()));
    }
    let half = 0.5 * (kappa - gamma);
    let root = c(half * half - g * g, 0.0).sqrt();
    let mean = 0.5 * (kappa + gamma);
    Ok(HybridModes {
        gamma_plus: mean + root.re,
        gamma_minus: mean - root.re,
        omega_plus: root.im,
        omega_minus: -root.im,
    })
}

/// Cooperativity `g^2/(kappa gamma)` and Purcell factor `4C`.
pub fn purcell_quantities(g: f64, kappa: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(kappa > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidInput("purcell_quantities needs kappa, gamma > 0".into()));
    }
    let coop = g * g / (kappa * gamma);
    Ok((coop, 4.0 * coop))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResponseCoefficients {
    pub delta: f64,
    pub t_c: Complex64,
    pub r_c: Complex64,
    /// Scattered intensity; only a magnitude is defined.
    pub abs_s2: f64,
    pub phi: f64,
    pub phi_emitter: f64,
}

/// `G^T R^{-1} G` for the emitter resolvent at the system's detuning.
pub fn emitter_susceptibility(sys: &CavitySystem) -> Result<Complex64> {
    if sys.n() == 0 {
        return Ok(c(0.0, 0.0));
    }
    let g = sys.g_complex();
    let y = solve_vec(&sys.resolvent_matrix(), &g, "emitter resolvent")?;
    Ok(g.dot(&y))
}

/// Linear-response coefficients at the system's own detunings.
pub fn response_at(sys: &CavitySystem) -> Result<ResponseCoefficients> {
    let a_per_eta = 1.0 / (sys.kc() + emitter_susceptibility(sys)?);
    let t_c = a_per_eta * (sys.kappa_a * sys.kappa_b).sqrt();
    let r_c = a_per_eta * sys.kappa_a - 1.0;
    let abs_s2 = if sys.is_balanced() {
        2.0 * (t_c.re - t_c.norm_sqr())
    } else {
        1.0 - r_c.norm_sqr() - t_c.norm_sqr()
    };
    let phi = t_c.arg();
    Ok(ResponseCoefficients {
        delta: sys.delta_e,
        t_c,
        r_c,
        abs_s2,
        phi,
        phi_emitter: phi - (sys.delta_c / sys.kappa()).atan(),
    })
}

/// Scan the laser across `grid` (detuning from the emitters); the cavity
/// keeps its offset `Delta_c - Delta_e` from the system.
pub fn linear_response(sys: &CavitySystem, grid: &[f64]) -> Result<Vec<ResponseCoefficients>> {
    let offset = sys.delta_c - sys.delta_e;
    grid.iter().map(|&d| response_at(&sys.with_detunings(d + offset, d))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveQuantities {
    pub delta_eff: f64,
    pub gamma_eff: f64,
    pub c_eff: f64,
    /// Set when gamma_eff <= 0, i.e. next to a collective pole.
    pub pole_warning: bool,
}

pub fn effective_quantities(sys: &CavitySystem) -> Result<EffectiveQuantities> {
    let gg = sys.g.norm_squared();
    if sys.n() == 0 || gg == 0.0 {
        return Err(Error::InvalidInput("effective quantities need at least one coupled emitter".into()));
    }
    let x = c(gg, 0.0) / emitter_susceptibility(sys)?;
    let gamma_eff = x.re;
    Ok(EffectiveQuantities {
        delta_eff: -x.im,
        gamma_eff,
        c_eff: gg / (sys.kappa() * gamma_eff),
        pole_warning: gamma_eff <= 0.0,
    })
}

fn delta_eff_at(sys: &CavitySystem, delta_e: f64) -> Option<f64> {
    effective_quantities(&sys.with_detunings(sys.delta_c, delta_e)).ok().map(|q| q.delta_eff)
}

const MATCH_POINTS: usize = 1001;

/// All rising zero crossings of `Delta_eff` as a function of `Delta_e`.
pub fn effective_detuning_roots(sys: &CavitySystem) -> Result<Vec<f64>> {
    let gamma = sys.gamma();
    let span = 4.0 * sys.kernels.omega_max().max(gamma);
    let xs: Vec<f64> = (0..MATCH_POINTS)
        .map(|i| -span + 2.0 * span * i as f64 / (MATCH_POINTS - 1) as f64)
        .collect();
    let fs: Vec<Option<f64>> = xs.iter().map(|&x| delta_eff_at(sys, x)).collect();
    let mut roots = Vec::new();
    for i in 0..MATCH_POINTS - 1 {
        let (Some(f0), Some(f1)) = (fs[i], fs[i + 1]) else { continue };
        if !(f0 < 0.0 && f1 >= 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (xs[i], xs[i + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match delta_eff_at(sys, mid) {
                Some(f) if f < 0.0 => lo = mid,
                Some(_) => hi = mid,
                None => break,
            }
        }
        let root = if delta_eff_at(sys, lo).map_or(f64::INFINITY, f64::abs) < delta_eff_at(sys, hi).map_or(f64::INFINITY, f64::abs) {
            lo
        } else {
            hi
        };
        // rising crossings through a pole fail this check
        if delta_eff_at(sys, root).is_some_and(|f| f.abs() < 1e-10 * gamma) {
            roots.push(root);
        }
    }
    if roots.is_empty() {
        return Err(Error::NoBracket { lo: -span, hi: span });
    }
    Ok(roots)
}

/// Cavity frequency that puts the addressed collective state on resonance.
pub fn match_cavity(sys: &CavitySystem, omega_e: f64, target_shift_guess: f64) -> Result<f64> {
    let roots = effective_detuning_roots(sys)?;
    let best = roots
        .into_iter()
        .min_by(|a, b| (a - target_shift_guess).abs().total_cmp(&(b - target_shift_guess).abs()))
        .expect("non-empty");
    Ok(omega_e + best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    Symmetric,
    Alternating,
    Independent,
}

impl Symmetry {
    pub fn tag(&self) -> &'static str {
        match self {
            Symmetry::Symmetric => "symmetric",
            Symmetry::Alternating => "alternating",
            Symmetry::Independent => "independent",
        }
    }

    pub fn coupling(&self, n: usize, g: f64) -> DVector<f64> {
        match self {
            Symmetry::Alternating => DVector::from_fn(n, |j, _| if j % 2 == 0 { g } else { -g }),
            _ => DVector::from_element(n, g),
        }
    }

    /// Exciton index the coupling pattern addresses.
    pub fn exciton(&self, n: usize) -> usize {
        match self {
            Symmetry::Alternating => n,
            _ => 1,
        }
    }
}

/// Equidistant chain inside a balanced cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub d: f64,
    #[serde(default)]
    pub orientation: Orientation,
    pub gamma: f64,
    pub kappa: f64,
    pub g: f64,
}

impl ChainSpec {
    pub fn kernels(&self, n: usize, symmetry: Symmetry) -> Result<CouplingKernels> {
        match symmetry {
            Symmetry::Independent => Ok(CouplingKernels::independent(n, self.gamma)),
            _ => coupling_kernels(&EmitterEnsemble::chain(n, self.d, self.orientation, self.gamma)?),
        }
    }

    /// Resonant system with all detunings zero.
    pub fn system(&self, n: usize, symmetry: Symmetry, eta: f64) -> Result<CavitySystem> {
        CavitySystem::new(self.kappa, self.kappa, 0.0, 0.0, eta, symmetry.coupling(n, self.g), self.kernels(n, symmetry)?)
    }

    /// System with the cavity matched to the addressed collective state and
    /// the laser on the cavity. Returns the cavity-emitter offset too.
    pub fn matched_system(&self, n: usize, symmetry: Symmetry, eta: f64) -> Result<(CavitySystem, f64)> {
        let sys = self.system(n, symmetry, eta)?;
        let omega12 = if n > 1 { sys.kernels.omega[(0, 1)] } else { 0.0 };
        let guess = exciton_energy(n, symmetry.exciton(n), 0.0, omega12)?;
        let shift = match_cavity(&sys, 0.0, guess)?;
        Ok((sys.with_detunings(0.0, shift), shift))
    }
}

/// Ordinary least-squares slope of log(y) against log(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Smallest N admitted into exponent fits.
pub const FIT_MIN_N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CooperativityRow {
    pub n: usize,
    pub c_eff: f64,
    pub gamma_eff: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CooperativityScan {
    pub symmetry: Symmetry,
    pub rows: Vec<CooperativityRow>,
    pub exponent: Option<f64>,
}

pub fn cooperativity_row(spec: &ChainSpec, n: usize, symmetry: Symmetry) -> Result<CooperativityRow> {
    let (sys, shift) = spec.matched_system(n, symmetry, 0.0)?;
    let q = effective_quantities(&sys)?;
    Ok(CooperativityRow { n, c_eff: q.c_eff, gamma_eff: q.gamma_eff, shift })
}

/// Matched effective cooperativity per N, with the log-log exponent over N >= 4.
pub fn cooperativity_scan(spec: &ChainSpec, ns: &[usize], symmetry: Symmetry) -> Result<CooperativityScan> {
    let rows = ns.iter().map(|&n| cooperativity_row(spec, n, symmetry)).collect::<Result<Vec<_>>>()?;
    let exponent = fit_rows(&rows);
    Ok(CooperativityScan { symmetry, rows, exponent })
}

pub fn fit_rows(rows: &[CooperativityRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.n >= FIT_MIN_N).map(|r| (r.n as f64, r.c_eff)).collect();
    loglog_slope(&pts)
}

/// Real symmetric matrix helper used by tests and scenarios.
pub fn nearest_neighbour_kernels(n: usize, gamma: f64, omega12: f64, h12: f64) -> CouplingKernels {
    let mut omega = DMatrix::zeros(n, n);
    let mut h = DMatrix::identity(n, n);
    for j in 0..n.saturating_sub(1) {
        omega[(j, j + 1)] = omega12;
        omega[(j + 1, j)] = omega12;
        h[(j, j + 1)] = h12;
        h[(j + 1, j)] = h12;
    }
    CouplingKernels { omega, gamma_matrix: &h * gamma, h, gamma }
}
