//! Brute-force Lindblad integration on a truncated Fock space times the
//! emitter qubits. Used as ground truth for small systems.
//!
//! Basis states are `(photons, mask)` with bit `j` of `mask` set when emitter
//! `j` is excited.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freespace::diagonal_decay_channels;
use crate::greens::CouplingKernels;
use crate::linalg::{c, CMatrix, I};
use crate::steadystate::CavitySystem;

/// Largest Hilbert space the oracle accepts.
pub const MAX_DIM: usize = 10_000;
/// Largest ensemble simulated together with the cavity.
pub const MAX_EMITTERS_WITH_CAVITY: usize = 3;
/// Largest ensemble for free decay.
pub const MAX_EMITTERS_FREE: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub n_emitters: usize,
    /// Fock cutoff; `None` without a cavity.
    pub n_max: Option<usize>,
    pub states: Vec<(usize, u32)>,
    index: HashMap<(usize, u32), usize>,
}

impl Basis {
    fn from_states(n_emitters: usize, n_max: Option<usize>, states: Vec<(usize, u32)>) -> Result<Self> {
        if states.len() > MAX_DIM {
            return Err(Error::TooLarge(states.len()));
        }
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Ok(Self { n_emitters, n_max, states, index })
    }

    /// Full product space of `n_max + 1` Fock levels and `n` qubits.
    pub fn product(n_emitters: usize, n_max: usize) -> Result<Self> {
        let dim = (n_max + 1).saturating_mul(1usize << n_emitters);
        if dim > MAX_DIM {
            return Err(Error::TooLarge(dim));
        }
        let states = (0..=n_max).flat_map(|p| (0..1u32 << n_emitters).map(move |m| (p, m))).collect();
        Self::from_states(n_emitters, Some(n_max), states)
    }

    /// Emitters only, all `2^N` configurations.
    pub fn emitters(n_emitters: usize) -> Result<Self> {
        Self::from_states(n_emitters, None, (0..1u32 << n_emitters).map(|m| (0, m)).collect())
    }

    /// Emitters only, ground state plus the single-excitation sector.
    pub fn single_excitation(n_emitters: usize) -> Result<Self> {
        let states = std::iter::once((0, 0)).chain((0..n_emitters).map(|j| (0, 1u32 << j))).collect();
        Self::from_states(n_emitters, None, states)
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: (usize, u32)) -> Option<usize> {
        self.index.get(&state).copied()
    }

    fn map_op<F>(&self, f: F) -> SparseOp
    where
        F: Fn(usize, u32) -> Option<((usize, u32), f64)>,
    {
        let mut entries = Vec::new();
        for (col, &(p, m)) in self.states.iter().enumerate() {
            if let Some((target, amp)) = f(p, m) {
                if let Some(row) = self.index_of(target) {
                    entries.push((row, col, c(amp, 0.0)));
                }
            }
        }
        SparseOp { dim: self.dim(), entries }
    }

    pub fn annihilation(&self) -> SparseOp {
        self.map_op(|p, m| (p > 0).then(|| ((p - 1, m), (p as f64).sqrt())))
    }

    pub fn lowering(&self, j: usize) -> SparseOp {
        self.map_op(|p, m| (m & (1 << j) != 0).then(|| ((p, m & !(1 << j)), 1.0)))
    }
}

/// Coordinate-list operator used inside the integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    pub dim: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * s)).collect() }
    }

    pub fn adjoint(&self) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect() }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for col in 0..m.ncols() {
            for row in 0..m.nrows() {
                let v = m[(row, col)];
                if v != c(0.0, 0.0) {
                    entries.push((row, col, v));
                }
            }
        }
        Self { dim: m.nrows(), entries }
    }

    pub fn sum(ops: &[SparseOp], dim: usize) -> Self {
        let mut dense = CMatrix::zeros(dim, dim);
        for op in ops {
            for &(r, c, v) in &op.entries {
                dense[(r, c)] += v;
            }
        }
        Self::from_dense(&dense)
    }

    pub fn compose(&self, other: &SparseOp) -> Self {
        Self::from_dense(&(self.to_dense() * other.to_dense()))
    }

    /// `self * m`.
    pub fn left_mul(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, m.ncols());
        for k in 0..m.ncols() {
            let src = m.column(k);
            let mut dst = out.column_mut(k);
            for &(r, c, v) in &self.entries {
                dst[r] += v * src[c];
            }
        }
        out
    }

    pub fn expectation(&self, rho: &CMatrix) -> Complex64 {
        self.entries.iter().map(|&(r, c, v)| v * rho[(c, r)]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DissipatorForm {
    /// Jump operators along the eigenvectors of the decay matrix.
    Channels,
    /// Double sum over emitter pairs weighted by gamma_ij.
    Pairwise,
}

/// `d rho/dt = -i (H_eff rho - rho H_eff^+) + sum_k rate_k A_k rho B_k^+`.
#[derive(Debug, Clone)]
pub struct Generators {
    pub basis: Basis,
    pub hamiltonian: SparseOp,
    pub h_eff: SparseOp,
    pub recycling: Vec<(f64, SparseOp, SparseOp)>,
    pub max_rate: f64,
}

impl Generators {
    pub fn derivative(&self, rho: &CMatrix) -> CMatrix {
        let x = self.h_eff.left_mul(rho);
        let mut out = (&x - x.adjoint()) * (-I);
        for (rate, a, b) in &self.recycling {
            let y = a.left_mul(rho).adjoint();
            out += b.left_mul(&y).adjoint() * c(*rate, 0.0);
        }
        out
    }

    /// Fixed RK4 step size used by default.
    pub fn default_dt(&self) -> f64 {
        0.005 / self.max_rate
    }
}

fn emitter_terms(
    basis: &Basis,
    kernels: &CouplingKernels,
    delta_e: f64,
    form: DissipatorForm,
    h_terms: &mut Vec<SparseOp>,
    collapse: &mut Vec<(f64, SparseOp, SparseOp)>,
) -> Result<()> {
    let n = basis.n_emitters;
    let s: Vec<SparseOp> = (0..n).map(|j| basis.lowering(j)).collect();
    let sd: Vec<SparseOp> = s.iter().map(|o| o.adjoint()).collect();
    for j in 0..n {
        if delta_e != 0.0 {
            h_terms.push(sd[j].compose(&s[j]).scaled(c(-delta_e, 0.0)));
        }
        for (k, sk) in s.iter().enumerate() {
            if j != k && kernels.omega[(j, k)] != 0.0 {
                h_terms.push(sd[j].compose(sk).scaled(c(kernels.omega[(j, k)], 0.0)));
            }
        }
    }
    match form {
        DissipatorForm::Channels => {
            let ch = diagonal_decay_channels(&kernels.gamma_matrix)?;
            for (i, &lambda) in ch.lambdas.iter().enumerate() {
                let lambda = lambda.max(0.0);
                if lambda == 0.0 {
                    continue;
                }
                let parts: Vec<SparseOp> = (0..n).map(|j| s[j].scaled(c(ch.t[(j, i)], 0.0))).collect();
                let pi = SparseOp::sum(&parts, basis.dim());
                collapse.push((2.0 * lambda, pi.clone(), pi));
            }
        }
        DissipatorForm::Pairwise => {
            for i in 0..n {
                for j in 0..n {
                    let g = kernels.gamma_matrix[(i, j)];
                    if g != 0.0 {
                        collapse.push((2.0 * g, s[j].clone(), s[i].clone()));
                    }
                }
            }
        }
    }
    Ok(())
}

fn assemble(basis: Basis, h_terms: Vec<SparseOp>, collapse: Vec<(f64, SparseOp, SparseOp)>, max_rate: f64) -> Generators {
    let dim = basis.dim();
    let hamiltonian = SparseOp::sum(&h_terms, dim);
    // H_eff = H - (i/2) sum_k rate_k B_k^+ A_k
    let mut damping: Vec<SparseOp> = vec![hamiltonian.clone()];
    for (rate, a, b) in &collapse {
        damping.push(b.adjoint().compose(a).scaled(c(0.0, -0.5 * rate)));
    }
    let h_eff = SparseOp::sum(&damping, dim);
    Generators { basis, hamiltonian, h_eff, recycling: collapse, max_rate }
}

fn rate_scale(kernels: &CouplingKernels, others: &[f64]) -> f64 {
    let n = kernels.len();
    let hmax = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| kernels.h[(i, j)].abs()).fold(0.0, f64::max);
    others
        .iter()
        .fold(kernels.gamma * (1.0 + hmax), |m, &v| m.max(v.abs()))
        .max(kernels.omega_max())
        .max(f64::MIN_POSITIVE)
}

/// Cavity plus emitters in the frame of the drive.
pub fn build_generators(sys: &CavitySystem, n_max: usize, form: DissipatorForm) -> Result<Generators> {
    let n = sys.n();
    if n > MAX_EMITTERS_WITH_CAVITY {
        return Err(Error::InvalidInput(format!("oracle with cavity supports at most {MAX_EMITTERS_WITH_CAVITY} emitters, got {n}")));
    }
    if n_max < 1 {
        return Err(Error::InvalidInput("Fock cutoff must be at least 1".into()));
    }
    let basis = Basis::product(n, n_max)?;
    let a = basis.annihilation();
    let ad = a.adjoint();
    let mut h_terms = vec![ad.compose(&a).scaled(c(-sys.delta_c, 0.0))];
    if sys.eta != 0.0 {
        h_terms.push(ad.scaled(I * sys.eta));
        h_terms.push(a.scaled(-I * sys.eta));
    }
    for j in 0..n {
        let s = basis.lowering(j);
        h_terms.push(ad.compose(&s).scaled(c(sys.g[j], 0.0)));
        h_terms.push(a.compose(&s.adjoint()).scaled(c(sys.g[j], 0.0)));
    }
    let mut collapse = vec![(2.0 * sys.kappa(), a.clone(), a)];
    emitter_terms(&basis, &sys.kernels, sys.delta_e, form, &mut h_terms, &mut collapse)?;
    let gmax = sys.g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let max_rate = rate_scale(&sys.kernels, &[sys.kappa(), gmax, sys.eta]);
    Ok(assemble(basis, h_terms, collapse, max_rate))
}

/// Emitters in free space on a given basis (no cavity, no drive).
pub fn build_free_generators(kernels: &CouplingKernels, basis: Basis, form: DissipatorForm) -> Result<Generators> {
    if basis.n_emitters != kernels.len() || basis.n_max.is_some() {
        return Err(Error::Dimension("free-space basis must match the ensemble and carry no cavity".into()));
    }
    let mut h_terms = vec![SparseOp::zeros(basis.dim())];
    let mut collapse = Vec::new();
    emitter_terms(&basis, kernels, 0.0, form, &mut h_terms, &mut collapse)?;
    let max_rate = rate_scale(kernels, &[]);
    Ok(assemble(basis, h_terms, collapse, max_rate))
}

#[derive(Debug, Clone)]
pub struct DensityOperator {
    pub rho: CMatrix,
    pub basis: Basis,
    pub time: f64,
    pub converged: bool,
}

impl DensityOperator {
    pub fn pure(basis: &Basis, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::Dimension(format!("state has {} amplitudes for dimension {}", amplitudes.len(), basis.dim())));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        let v = nalgebra::DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| a / norm));
        Ok(Self { rho: &v * v.adjoint(), basis: basis.clone(), time: 0.0, converged: false })
    }

    /// Cavity vacuum with every emitter in the ground state.
    pub fn ground(basis: &Basis) -> Self {
        let mut rho = CMatrix::zeros(basis.dim(), basis.dim());
        let g = basis.index_of((0, 0)).expect("ground state is in every basis");
        rho[(g, g)] = c(1.0, 0.0);
        Self { rho, basis: basis.clone(), time: 0.0, converged: false }
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        crate::linalg::max_abs(&(&self.rho - self.rho.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * c(0.5, 0.0);
        h.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn expect(&self, op: &SparseOp) -> Complex64 {
        op.expectation(&self.rho)
    }

    pub fn cavity_amplitude(&self) -> Complex64 {
        self.expect(&self.basis.annihilation())
    }

    pub fn emitter_amplitude(&self, j: usize) -> Complex64 {
        self.expect(&self.basis.lowering(j))
    }

    pub fn excited_population(&self, j: usize) -> f64 {
        self.basis.states.iter().enumerate().filter(|(_, s)| s.1 & (1 << j) != 0).map(|(i, _)| self.rho[(i, i)].re).sum()
    }

    pub fn total_excitation(&self) -> f64 {
        (0..self.basis.n_emitters).map(|j| self.excited_population(j)).sum()
    }

    /// Population of the highest Fock level kept.
    pub fn top_fock_population(&self) -> f64 {
        match self.basis.n_max {
            Some(top) => self.basis.states.iter().enumerate().filter(|(_, s)| s.0 == top).map(|(i, _)| self.rho[(i, i)].re).sum(),
            None => 0.0,
        }
    }

    /// Intracavity quadrature variances for `X = (a + a^+)/sqrt 2` and `Y = (a - a^+)/(i sqrt 2)`; vacuum gives 1/2.
    pub fn cavity_quadratures(&self) -> (f64, f64) {
        let a = self.basis.annihilation();
        let ad = a.adjoint();
        let aa = self.expect(&a.compose(&a));
        let ada = self.expect(&ad.compose(&a)).re;
        let m = self.expect(&a);
        let var_x = 0.5 + ada + aa.re - 2.0 * m.re * m.re;
        let var_y = 0.5 + ada - aa.re - 2.0 * m.im * m.im;
        (var_x, var_y)
    }

    /// `<a+ a+ a a> / <a+ a>^2`.
    pub fn cavity_g2(&self) -> f64 {
        let a = self.basis.annihilation();
        let ad = a.adjoint();
        let n = self.expect(&ad.compose(&a)).re;
        let num = self.expect(&ad.compose(&ad).compose(&a).compose(&a)).re;
        num / (n * n)
    }

    /// Reduced emitter state on the full `2^N` space, cavity traced out.
    pub fn emitter_state(&self) -> CMatrix {
        let n = self.basis.n_emitters;
        let d = 1usize << n;
        let mut out = CMatrix::zeros(d, d);
        for (i, &(pi, mi)) in self.basis.states.iter().enumerate() {
            for (k, &(pk, mk)) in self.basis.states.iter().enumerate() {
                if pi == pk {
                    out[(mi as usize, mk as usize)] += self.rho[(i, k)];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: Option<f64>,
    /// Declare convergence when `max |d rho/dt| < tol * max_rate`.
    pub tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { t_end: 4000.0, dt: None, tol: 1e-10 }
    }
}

fn rk4_step(gens: &Generators, rho: &CMatrix, h: f64) -> CMatrix {
    let k1 = gens.derivative(rho);
    let k2 = gens.derivative(&(rho + &k1 * c(0.5 * h, 0.0)));
    let k3 = gens.derivative(&(rho + &k2 * c(0.5 * h, 0.0)));
    let k4 = gens.derivative(&(rho + &k3 * c(h, 0.0)));
    rho + (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0)
}

/// Fixed-step RK4 until the derivative falls under tolerance or `t_end`.
pub fn evolve_to_steady_state(gens: &Generators, rho0: &DensityOperator, opts: EvolveOptions) -> Result<DensityOperator> {
    let dt = opts.dt.unwrap_or_else(|| gens.default_dt());
    if !(dt > 0.0) || !(opts.t_end > 0.0) {
        return Err(Error::InvalidInput("time step and horizon must be positive".into()));
    }
    let mut rho = rho0.rho.clone();
    let steps = (opts.t_end / dt).ceil() as usize;
    let check_every = ((1.0 / (gens.max_rate * dt)).ceil() as usize).max(1);
    let mut converged = false;
    let mut step = 0;
    while step < steps {
        rho = rk4_step(gens, &rho, dt);
        step += 1;
        if step % check_every == 0 {
            let d = crate::linalg::max_abs(&gens.derivative(&rho));
            if !d.is_finite() {
                return Err(Error::NoConvergence { iterations: step, residual: d });
            }
            if d < opts.tol * gens.max_rate {
                converged = true;
                break;
            }
        }
    }
    let out = DensityOperator { rho, basis: gens.basis.clone(), time: step as f64 * dt, converged };
    if let Some(n_max) = gens.basis.n_max {
        let top = out.top_fock_population();
        if top >= 1e-6 {
            return Err(Error::FockCutoff { n_max, population: top });
        }
    }
    if !converged {
        log::warn!("oracle stopped at t = {} before reaching the derivative tolerance", out.time);
    }
    Ok(out)
}

/// Steady state of the driven system starting from the ground state,
/// raising the Fock cutoff from `n_max_start` until the top level is empty.
pub fn steady_state(sys: &CavitySystem, n_max_start: usize, opts: EvolveOptions) -> Result<DensityOperator> {
    let mut n_max = n_max_start.max(1);
    loop {
        let gens = build_generators(sys, n_max, DissipatorForm::Channels)?;
        match evolve_to_steady_state(&gens, &DensityOperator::ground(&gens.basis), opts) {
            Err(Error::FockCutoff { .. }) if n_max < 40 => n_max += 2,
            other => return other,
        }
    }
}

/// Free evolution of an emitter state, sampled at increasing `times`.
/// States inside the ground plus single-excitation sector are evolved there,
/// which is exact because that sector is closed under free decay.
pub fn free_decay_evolution(kernels: &CouplingKernels, initial: &[Complex64], times: &[f64], dt: Option<f64>) -> Result<Vec<DensityOperator>> {
    let n = kernels.len();
    if n > MAX_EMITTERS_FREE {
        return Err(Error::InvalidInput(format!("free decay supports at most {MAX_EMITTERS_FREE} emitters, got {n}")));
    }
    if initial.len() != 1 << n {
        return Err(Error::Dimension(format!("initial state needs {} amplitudes", 1usize << n)));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidInput("sample times must be non-negative and sorted".into()));
    }
    let single = initial.iter().enumerate().all(|(m, a)| (m as u32).count_ones() <= 1 || *a == c(0.0, 0.0));
    let basis = if single { Basis::single_excitation(n)? } else { Basis::emitters(n)? };
    let amps: Vec<Complex64> = basis.states.iter().map(|&(_, m)| initial[m as usize]).collect();
    let gens = build_free_generators(kernels, basis, DissipatorForm::Channels)?;
    let dt = dt.unwrap_or_else(|| gens.default_dt());
    let mut state = DensityOperator::pure(&gens.basis, &amps)?;
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &target in times {
        while t < target - 1e-12 * target.max(1.0) {
            let h = dt.min(target - t);
            state.rho = rk4_step(&gens, &state.rho, h);
            t += h;
        }
        state.time = t;
        out.push(state.clone());
    }
    Ok(out)
}

/// Embed an emitter-only density operator into the full `2^N` space.
pub fn embed_emitters(state: &DensityOperator) -> CMatrix {
    state.emitter_state()
}

/// `log2 || rho^{T_A} ||_1` for the emitters in `partition`.
pub fn logarithmic_negativity(rho: &CMatrix, n_emitters: usize, partition: &[usize]) -> Result<f64> {
    let d = 1usize << n_emitters;
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::Dimension(format!("emitter state must be {d}x{d}")));
    }
    if partition.is_empty() || partition.len() >= n_emitters || partition.iter().any(|&j| j >= n_emitters) {
        return Err(Error::InvalidInput("partition must be a nonempty proper subset of the emitters".into()));
    }
    let mask: usize = partition.iter().fold(0, |m, &j| m | (1 << j));
    let mut pt = CMatrix::zeros(d, d);
    for x in 0..d {
        for y in 0..d {
            let xs = (x & !mask) | (y & mask);
            let ys = (y & !mask) | (x & mask);
            pt[(xs, ys)] = rho[(x, y)];
        }
    }
    let herm = (&pt + pt.adjoint()) * c(0.5, 0.0);
    let norm: f64 = herm.symmetric_eigen().eigenvalues.iter().map(|v| v.abs()).sum();
    Ok(norm.log2())
}

/// Single-excitation amplitudes `sum_j coeffs_j |e_j>` on the `2^N` space.
pub fn single_excitation_state(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len();
    let mut v = vec![c(0.0, 0.0); 1 << n];
    for (j, &a) in coeffs.iter().enumerate() {
        v[1 << j] = c(a, 0.0);
    }
    v
}

/// Total excited population of each sampled state.
pub fn population_trace(states: &[DensityOperator]) -> Vec<(f64, f64)> {
    states.iter().map(|s| (s.time, s.total_excitation())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freespace::exciton_state;
    use crate::greens::{coupling_kernels, EmitterEnsemble, Orientation};
    use crate::steadystate::{nearest_neighbour_kernels, solve_classical};
    use nalgebra::DVector;

    fn random_state(dim: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut next = || rng.random_range(-0.5..0.5);
        let a = CMatrix::from_fn(dim, dim, |_, _| c(next(), next()));
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        rho / tr
    }

    #[test]
    fn channel_and_pairwise_forms_agree() {
        let k = coupling_kernels(&EmitterEnsemble::chain(3, 0.2, Orientation::Perpendicular, 0.05).unwrap()).unwrap();
        let sys = CavitySystem::new(1.0, 1.0, 0.1, -0.05, 0.03, DVector::from_vec(vec![0.1, 0.2, -0.1]), k).unwrap();
        let a = build_generators(&sys, 3, DissipatorForm::Channels).unwrap();
        let b = build_generators(&sys, 3, DissipatorForm::Pairwise).unwrap();
        for seed in 0..3 {
            let rho = random_state(a.basis.dim(), seed);
            let diff = crate::linalg::max_abs(&(a.derivative(&rho) - b.derivative(&rho)));
            assert!(diff < 1e-12, "{diff}");
        }
    }

    #[test]
    fn derivative_is_traceless_and_hermitian() {
        let sys = CavitySystem::single(1.0, 0.05, 0.2, 0.1, 0.1, 0.05).unwrap();
        let g = build_generators(&sys, 4, DissipatorForm::Channels).unwrap();
        let rho = random_state(g.basis.dim(), 7);
        let d = g.derivative(&rho);
        assert!(d.trace().norm() < 1e-14);
        assert!(crate::linalg::max_abs(&(&d - d.adjoint())) < 1e-14);
    }

    #[test]
    fn empty_cavity_coherent_state() {
        let sys = CavitySystem::new(1.0, 1.0, 0.3, 0.0, 0.05, DVector::zeros(0), CouplingKernels::independent(0, 0.05)).unwrap();
        let s = steady_state(&sys, 6, EvolveOptions::default()).unwrap();
        let expect = 0.05 / c(1.0, -0.3);
        assert!((s.cavity_amplitude() - expect).norm() < 1e-8);
        assert!((s.trace() - 1.0).norm() < 1e-8);
    }

    #[test]
    fn dark_steady_state_is_vacuum() {
        let sys = CavitySystem::single(1.0, 0.05, 0.2, 0.0, 0.0, 0.0).unwrap();
        let s = steady_state(&sys, 2, EvolveOptions { t_end: 10.0, ..Default::default() }).unwrap();
        assert!((s.rho[(0, 0)] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn single_emitter_decay() {
        let k = CouplingKernels::independent(1, 0.05);
        let out = free_decay_evolution(&k, &[c(0.0, 0.0), c(1.0, 0.0)], &[0.0, 5.0, 10.0, 20.0], None).unwrap();
        for s in &out {
            assert!((s.total_excitation() - (-0.1 * s.time).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn dicke_superradiant_slope() {
        let k = nearest_neighbour_kernels(2, 0.05, 0.0, 1.0);
        let init = single_excitation_state(&exciton_state(2, 1).unwrap().coeffs);
        let t = 1e-3;
        let out = free_decay_evolution(&k, &init, &[t], None).unwrap();
        let slope = (1.0 - out[0].total_excitation()) / t;
        assert!((slope - 4.0 * 0.05).abs() < 1e-3 * 0.2);
    }

    #[test]
    fn single_excitation_sector_matches_full_space() {
        let k = coupling_kernels(&EmitterEnsemble::chain(3, 0.15, Orientation::Perpendicular, 0.05).unwrap()).unwrap();
        let init = single_excitation_state(&exciton_state(3, 3).unwrap().coeffs);
        let fast = free_decay_evolution(&k, &init, &[7.0], None).unwrap();
        let full_basis = Basis::emitters(3).unwrap();
        let gens = build_free_generators(&k, full_basis.clone(), DissipatorForm::Channels).unwrap();
        let mut rho = DensityOperator::pure(&full_basis, &init).unwrap().rho;
        let dt = gens.default_dt();
        let steps = (7.0 / dt).round() as usize;
        for _ in 0..steps {
            rho = rk4_step(&gens, &rho, 7.0 / steps as f64);
        }
        assert!(crate::linalg::max_abs(&(embed_emitters(&fast[0]) - rho)) < 1e-10);
    }

    #[test]
    fn negativity_examples() {
        let mut prod = CMatrix::zeros(4, 4);
        prod[(1, 1)] = c(1.0, 0.0);
        assert!(logarithmic_negativity(&prod, 2, &[0]).unwrap().abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = DVector::from_vec(vec![c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)]);
        let bell = &v * v.adjoint();
        assert!((logarithmic_negativity(&bell, 2, &[0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(logarithmic_negativity(&bell, 2, &[0, 1]).is_err());
        assert!(logarithmic_negativity(&bell, 2, &[]).is_err());
    }

    #[test]
    fn single_emitter_steady_state_matches_classical() {
        let sys = CavitySystem::single(1.0, 0.05, 0.2, 0.0, 0.0, 0.05).unwrap();
        let s = steady_state(&sys, 6, EvolveOptions::default()).unwrap();
        let cl = solve_classical(&sys).unwrap();
        assert!((s.cavity_amplitude() - cl.alpha).norm() < 0.01 * cl.alpha.norm());
        assert!((s.emitter_amplitude(0) - cl.beta[0]).norm() < 0.01 * cl.beta[0].norm());
        assert!(s.hermiticity_error() < 1e-10 && s.min_eigenvalue() > -1e-8);
        let g2 = s.cavity_g2();
        assert!(g2.is_finite() && g2 > 0.0);
    }

    #[test]
    fn rejects_large_ensembles() {
        let k = CouplingKernels::independent(4, 0.05);
        let sys = CavitySystem::new(1.0, 1.0, 0.0, 0.0, 0.0, DVector::from_element(4, 0.1), k).unwrap();
        assert!(build_generators(&sys, 2, DissipatorForm::Channels).is_err());
    }
}
