//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.
//! Exits nonzero when any criterion fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use purcell_lab::fluctuations::{
    build_fluctuation_system, detected_correlations_finite_t, detected_point, intracavity_quadratures, output_spectrum,
    solve_lyapunov, stability, FiniteTOptions,
};
use purcell_lab::freespace::{diagonal_decay_channels, exciton_state, plane_grid, plane_integral, radiation_intensity};
use purcell_lab::greens::{coupling_kernels, CouplingKernels, EmitterEnsemble, Orientation};
use purcell_lab::kerr::{
    fit_kerr_rows, independent_kerr_curve, independent_kerr_magnitude, kerr_correction, kerr_scaling_row,
    two_emitter_resonant_kerr,
};
use purcell_lab::linalg::{max_abs, I};
use purcell_lab::oracle::{
    free_decay_evolution, logarithmic_negativity, single_excitation_state, steady_state, EvolveOptions,
};
use purcell_lab::steadystate::{
    closure_residual, cooperativity_scan, fit_rows, hybrid_modes, linear_response, solve_classical, solve_classical_full,
    CavitySystem, ChainSpec, Symmetry,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() > limit {
        Err(format!("runtime {:.2} s exceeds {limit} s", elapsed.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn single(g: f64, gamma: f64, delta: f64, eta: f64) -> CavitySystem {
    CavitySystem::single(1.0, gamma, g, delta, delta, eta).expect("valid single-emitter system")
}

fn c1_resonance_intensities() -> Outcome {
    let start = Instant::now();
    let gamma: f64 = 0.05;
    let mut worst = 0.0_f64;
    for coop in [0.1, 0.8, 5.0, 50.0] {
        let g = (coop * gamma).sqrt();
        let r = linear_response(&single(g, gamma, 0.0, 0.0), &[0.0]).map_err(|e| e.to_string())?[0];
        let p = (1.0 + coop).powi(2);
        worst = worst
            .max((r.t_c.norm_sqr() - 1.0 / p).abs())
            .max((r.r_c.norm_sqr() - coop * coop / p).abs())
            .max((r.abs_s2 - 2.0 * coop / p).abs());
    }
    within(start.elapsed(), 1.0)?;
    check(worst < 1e-10, format!("max deviation {worst:.2e} (tol 1e-10)"))
}

fn c2_energy_conservation() -> Outcome {
    let grid: Vec<f64> = (0..1000).map(|k| -2.0 + 4.0 * k as f64 / 999.0).collect();
    let rows = linear_response(&single(0.2, 0.05, 0.0, 0.0), &grid).map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| (r.t_c.norm_sqr() + r.r_c.norm_sqr() + r.abs_s2 - 1.0).abs()).fold(0.0, f64::max);
    check(worst < 1e-10, format!("max |r|^2+|t|^2+|s|^2-1 = {worst:.2e} over 1000 points (tol 1e-10)"))
}

fn c3_hybrid_threshold() -> Outcome {
    let (kappa, gamma) = (1.0, 0.05);
    let threshold = 0.5 * (kappa - gamma);
    for g in [0.0, 0.1, 0.3, threshold] {
        let h = hybrid_modes(g, kappa, gamma).map_err(|e| e.to_string())?;
        if h.omega_plus != 0.0 || h.omega_minus != 0.0 {
            return Err(format!("g = {g}: splitting {} below threshold", h.omega_plus));
        }
    }
    let h = hybrid_modes(10.0, kappa, gamma).map_err(|e| e.to_string())?;
    let dev = ((h.omega_plus - 10.0) / 10.0).abs().max(((h.omega_minus + 10.0) / 10.0).abs());
    check(dev < 0.02, format!("zero splitting up to g = {threshold}; g = 10: relative deviation {dev:.2e} (tol 2e-2)"))
}

fn random_system(rng: &mut ChaCha8Rng) -> CavitySystem {
    let n = rng.random_range(0..=3usize);
    let gamma = rng.random_range(0.02..0.2);
    let d = rng.random_range(0.1..0.8);
    let kernels = if n == 0 {
        CouplingKernels::independent(0, gamma)
    } else {
        coupling_kernels(&EmitterEnsemble::chain(n, d, Orientation::Perpendicular, gamma).unwrap()).unwrap()
    };
    let g = DVector::from_fn(n, |_, _| rng.random_range(-0.3..0.3));
    let dc = rng.random_range(-0.3..0.3);
    let de = rng.random_range(-0.3..0.3);
    let eta = rng.random_range(0.0..0.05);
    CavitySystem::new(1.0, 1.0, dc, de, eta, g, kernels).unwrap()
}

fn c4_lyapunov() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut done, mut worst_res, mut worst_comm) = (0, 0.0_f64, 0.0_f64);
    let mut attempts = 0;
    while done < 20 {
        attempts += 1;
        if attempts > 1000 {
            return Err("could not draw 20 stable operating points".into());
        }
        let sys = random_system(&mut rng);
        let Ok(state) = solve_classical_full(&sys) else { continue };
        let fs = build_fluctuation_system(&sys, &state).map_err(|e| e.to_string())?;
        if !stability(&fs.m).map_err(|e| e.to_string())?.is_stable {
            continue;
        }
        let v = solve_lyapunov(&fs.m, &fs.d).map_err(|e| e.to_string())?;
        let res = max_abs(&(&fs.m * &v + &v * fs.m.transpose() + &fs.d)) / max_abs(&fs.d);
        let comm = (v[(0, 1)] - v[(1, 0)] - 1.0).norm();
        worst_res = worst_res.max(res);
        worst_comm = worst_comm.max(comm);
        done += 1;
    }
    within(start.elapsed(), 5.0)?;
    check(
        worst_res < 1e-10 && worst_comm < 1e-8,
        format!("20 points: residual {worst_res:.2e} (tol 1e-10), commutator error {worst_comm:.2e} (tol 1e-8)"),
    )
}

const NORMAL_ORDERED: [(usize, usize); 12] =
    [(1, 0), (0, 0), (1, 1), (3, 2), (2, 2), (3, 3), (1, 2), (3, 0), (0, 2), (2, 0), (1, 3), (3, 1)];

fn c5_vacuum_passivity() -> Outcome {
    let pair = coupling_kernels(&EmitterEnsemble::chain(2, 0.2, Orientation::Perpendicular, 0.05).unwrap()).unwrap();
    let systems = [
        single(0.2, 0.05, 0.1, 0.0),
        CavitySystem::new(1.0, 1.0, 0.05, -0.02, 0.0, DVector::from_vec(vec![0.2, -0.1]), pair).unwrap(),
    ];
    let mut worst = 0.0_f64;
    for sys in &systems {
        let st = solve_classical_full(sys).map_err(|e| e.to_string())?;
        let fs = build_fluctuation_system(sys, &st).map_err(|e| e.to_string())?;
        for k in 0..=200 {
            let om = -10.0 + 0.1 * k as f64;
            let s = output_spectrum(&fs, om).map_err(|e| e.to_string())?;
            for &(i, j) in &NORMAL_ORDERED {
                worst = worst.max(s.s[(i, j)].norm());
            }
        }
    }
    let empty = CavitySystem::new(1.0, 1.0, 0.1, 0.0, 0.05, DVector::zeros(0), CouplingKernels::independent(0, 0.05)).unwrap();
    let st = solve_classical(&empty).map_err(|e| e.to_string())?;
    let (d, _) = detected_point(&empty, &st, 1e3).map_err(|e| e.to_string())?;
    check(
        worst < 1e-12 && d.g2 == 1.0,
        format!("max normally-ordered entry {worst:.2e} (tol 1e-12); empty-cavity g2 = {}", d.g2),
    )
}

fn c6_finite_window() -> Outcome {
    let sys = single(0.2, 0.05, 0.0, 0.05);
    let st = solve_classical_full(&sys).map_err(|e| e.to_string())?;
    let fs = build_fluctuation_system(&sys, &st).map_err(|e| e.to_string())?;
    let s0 = output_spectrum(&fs, 0.0).map_err(|e| e.to_string())?;
    let idx = [(2, 2), (3, 2), (2, 3), (3, 3)];
    let scale = idx.iter().map(|&(i, j)| s0.s[(i, j)].norm()).fold(0.0, f64::max);
    let err = |t: f64| -> Result<f64, String> {
        let v = detected_correlations_finite_t(&fs, t, FiniteTOptions::default()).map_err(|e| e.to_string())?;
        Ok(idx.iter().map(|&(i, j)| (v[(i, j)] - s0.s[(i, j)]).norm()).fold(0.0, f64::max) / scale)
    };
    let (e3, e4) = (err(1e3)?, err(1e4)?);
    check(e3 < 1e-2 && e4 < e3, format!("relative error T=1e3: {e3:.2e} (tol 1e-2), T=1e4: {e4:.2e}"))
}

fn oracle_point(sys: &CavitySystem) -> Result<(f64, f64, bool), String> {
    let cl = solve_classical(sys).map_err(|e| e.to_string())?;
    let ora = steady_state(sys, 6, EvolveOptions::default()).map_err(|e| e.to_string())?;
    let ea = (ora.cavity_amplitude() - cl.alpha).norm() / cl.alpha.norm();
    let eb = (0..sys.n())
        .map(|j| (ora.emitter_amplitude(j) - cl.beta[j]).norm() / cl.beta[j].norm())
        .fold(0.0, f64::max);
    let full = solve_classical_full(sys).map_err(|e| e.to_string())?;
    let fs = build_fluctuation_system(sys, &full).map_err(|e| e.to_string())?;
    let v = solve_lyapunov(&fs.m, &fs.d).map_err(|e| e.to_string())?;
    let (lx, ly) = intracavity_quadratures(&v);
    let (ox, oy) = ora.cavity_quadratures();
    let same = (lx < 0.5) == (ox < 0.5) && (ly < 0.5) == (oy < 0.5);
    Ok((ea, eb, same))
}

fn c7_oracle() -> Outcome {
    let start = Instant::now();
    let spec = ChainSpec { d: 0.3, orientation: Orientation::Perpendicular, gamma: 0.05, kappa: 1.0, g: 0.2 };
    let (pair, shift) = spec.matched_system(2, Symmetry::Symmetric, 0.05).map_err(|e| e.to_string())?;
    let mut systems = vec![("N=1", single(0.2, 0.05, 0.0, 0.05))];
    for d in [-0.02, 0.0, 0.02] {
        systems.push(("N=1", single(0.2, 0.05, d, 0.05)));
        systems.push(("N=2", pair.with_detunings(d, d + shift)));
    }
    let mut worst = 0.0_f64;
    let mut sign_ok = true;
    for (tag, sys) in &systems {
        let (ea, eb, same) = oracle_point(sys)?;
        worst = worst.max(ea).max(eb);
        if !same {
            sign_ok = false;
            eprintln!("  squeezing sign mismatch for {tag} at delta_c = {}", sys.delta_c);
        }
    }
    within(start.elapsed(), 120.0)?;
    check(
        worst < 0.01 && sign_ok,
        format!("{} points: worst amplitude error {worst:.2e} (tol 1e-2), squeezing sign agreement {sign_ok}", systems.len()),
    )
}

fn c8_cooperativity() -> Outcome {
    let start = Instant::now();
    let spec = ChainSpec { d: 0.1, orientation: Orientation::Perpendicular, gamma: 0.05, kappa: 1.0, g: 0.01 };
    let ns: Vec<usize> = (1..=40).collect();
    let alt = cooperativity_scan(&spec, &ns, Symmetry::Alternating).map_err(|e| e.to_string())?;
    let ind = cooperativity_scan(&spec, &ns, Symmetry::Independent).map_err(|e| e.to_string())?;
    let sym = cooperativity_scan(&spec, &ns, Symmetry::Symmetric).map_err(|e| e.to_string())?;
    let e_alt = fit_rows(&alt.rows).ok_or("no alternating fit")?;
    let e_ind = fit_rows(&ind.rows).ok_or("no independent fit")?;
    let below = sym.rows.iter().zip(&ind.rows).all(|(s, i)| s.c_eff <= i.c_eff * (1.0 + 1e-12));
    within(start.elapsed(), 60.0)?;
    check(
        (3.5..=4.1).contains(&e_alt) && (e_ind - 1.0).abs() < 1e-6 && below,
        format!("alternating exponent {e_alt:.4} (band [3.5, 4.1]), independent {e_ind:.9}, symmetric never above independent: {below}"),
    )
}

fn c9_kerr_closed_forms() -> Outcome {
    let mut worst1 = 0.0_f64;
    for de in [0.0, 0.05, -0.1] {
        let sys = single(0.2, 0.05, de, 0.01);
        let k = kerr_correction(&sys).map_err(|e| e.to_string())?;
        let b1 = k.beta1[0];
        let expect: Complex64 = -2.0 * b1 * b1.norm_sqr() * (1.0 - I * (0.2 / 0.01) * b1);
        worst1 = worst1.max((k.beta3[0] - expect).norm() / expect.norm());
    }
    let mut worst_ind = 0.0_f64;
    for n in [1, 2, 5, 20] {
        let g = (0.8_f64 * 0.05).sqrt();
        let sys = CavitySystem::new(1.0, 1.0, 0.0, 0.0, 0.01, DVector::from_element(n, g), CouplingKernels::independent(n, 0.05)).unwrap();
        let general = kerr_correction(&sys).map_err(|e| e.to_string())?.norm_beta3;
        let closed = independent_kerr_magnitude(n, 0.8, 0.05, 1.0, 0.01);
        worst_ind = worst_ind.max((general - closed).abs() / closed);
    }
    let mut worst2 = 0.0_f64;
    for d in [0.3, 0.6] {
        for sym in [Symmetry::Symmetric, Symmetry::Alternating] {
            let spec = ChainSpec { d, orientation: Orientation::Perpendicular, gamma: 0.05, kappa: 1.0, g: 0.1 };
            let (sys, _) = spec.matched_system(2, sym, 1e-4).map_err(|e| e.to_string())?;
            let general = kerr_correction(&sys).map_err(|e| e.to_string())?.norm_beta3;
            let closed = two_emitter_resonant_kerr(&sys).map_err(|e| e.to_string())?;
            worst2 = worst2.max((general - closed).abs() / closed);
        }
    }
    let pair = coupling_kernels(&EmitterEnsemble::chain(2, 0.25, Orientation::Perpendicular, 0.05).unwrap()).unwrap();
    let base = CavitySystem::new(1.0, 1.0, 0.01, 0.03, 0.0, DVector::from_vec(vec![0.1, -0.07]), pair).unwrap();
    let residual = |eta: f64| -> Result<f64, String> {
        let s = base.with_eta(eta);
        let k = kerr_correction(&s).map_err(|e| e.to_string())?;
        Ok(closure_residual(&s, &(&k.beta1 + &k.beta3)))
    };
    let ratio = residual(0.004)? / residual(0.002)?;
    check(
        worst1 < 1e-12 && worst_ind < 1e-10 && worst2 < 1e-8 && (ratio / 32.0 - 1.0).abs() < 0.1,
        format!(
            "N=1 {worst1:.1e} (1e-12), independent {worst_ind:.1e} (1e-10), two-emitter {worst2:.1e} (1e-8), residual ratio {ratio:.2} (32 +- 10%)"
        ),
    )
}

fn c10_kerr_scaling() -> Outcome {
    let start = Instant::now();
    let ns: Vec<usize> = (0..=20).map(|k| (1e3 * 10f64.powf(k as f64 / 20.0)).round() as usize).collect();
    let (_, ind_slope) = independent_kerr_curve(&ns, 0.2, 0.05, 1.0, 1e-4);
    let ind_slope = ind_slope.ok_or("no independent slope")?;
    let spec = ChainSpec { d: 0.07, orientation: Orientation::Perpendicular, gamma: 0.05, kappa: 1.0, g: 0.1 };
    let alt_ns = [20, 25, 32, 40, 50, 63, 80, 100];
    let rows = alt_ns
        .iter()
        .map(|&n| kerr_scaling_row(&spec, n, Symmetry::Alternating, 1e-4, true))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let alt_slope = fit_kerr_rows(&rows, 20, 100).ok_or("no alternating slope")?;
    let mut small = Vec::new();
    for n in 2..=4 {
        let s = kerr_scaling_row(&spec, n, Symmetry::Symmetric, 1e-4, true).map_err(|e| e.to_string())?.norm_beta3;
        let i = kerr_scaling_row(&spec, n, Symmetry::Independent, 1e-4, true).map_err(|e| e.to_string())?.norm_beta3;
        small.push((n, s / i));
    }
    let above = small.iter().all(|&(_, r)| r > 1.0);
    let ratios: Vec<String> = small.iter().map(|(n, r)| format!("N={n}: {r:.3}")).collect();
    within(start.elapsed(), 120.0)?;
    check(
        (ind_slope + 3.5).abs() < 0.05 && (alt_slope + 0.5).abs() < 0.3 && above,
        format!(
            "independent slope {ind_slope:.4} (-3.5 +- 0.05, N in [1e3, 1e4]); alternating slope {alt_slope:.3} (-0.5 +- 0.3, N in [20, 100]); symmetric/independent {}",
            ratios.join(", ")
        ),
    )
}

fn c11_free_space() -> Outcome {
    let ens = EmitterEnsemble::chain(2, 0.3, Orientation::Perpendicular, 0.05).unwrap();
    let k = coupling_kernels(&ens).map_err(|e| e.to_string())?;
    let h = k.h[(0, 1)];
    let gamma = 0.05;
    let ch = diagonal_decay_channels(&k.gamma_matrix).map_err(|e| e.to_string())?;
    let mut expected = [gamma * (1.0 + h), gamma * (1.0 - h)];
    expected.sort_by(|a, b| b.total_cmp(a));
    let ch_err = (ch.lambdas[0] - expected[0]).abs().max((ch.lambdas[1] - expected[1]).abs());
    let times: Vec<f64> = (0..=20).map(|i| i as f64 / (20.0 * gamma)).collect();
    let mut pop_err = 0.0_f64;
    for (m, sign) in [(1, 1.0), (2, -1.0)] {
        let init = single_excitation_state(&exciton_state(2, m).unwrap().coeffs);
        let states = free_decay_evolution(&k, &init, &times, None).map_err(|e| e.to_string())?;
        for s in &states {
            let exact = (-2.0 * gamma * (1.0 + sign * h) * s.time).exp();
            pop_err = pop_err.max((s.total_excitation() - exact).abs() / exact);
        }
    }
    let (x, y, nx) = ((-6.0, 6.3), (-6.0, 6.0), 81);
    let grid = plane_grid(x, y, nx, nx, 2.0);
    let total = |m| -> Result<f64, String> {
        let map = radiation_intensity(&ens, &exciton_state(2, m).unwrap().coherence(), &grid).map_err(|e| e.to_string())?;
        Ok(plane_integral(&map, x, y, nx, nx))
    };
    let (i1, i2) = (total(1)?, total(2)?);
    check(
        ch_err < 1e-10 && pop_err < 0.01 && i1 > i2,
        format!("channel error {ch_err:.1e} (1e-10), population error {pop_err:.1e} (1e-2), I(m=1) {i1:.4e} > I(m=2) {i2:.4e}"),
    )
}

fn c12_entanglement() -> Outcome {
    let start = Instant::now();
    let mut prod = purcell_lab::linalg::CMatrix::zeros(4, 4);
    prod[(1, 1)] = Complex64::new(1.0, 0.0);
    let e_prod = logarithmic_negativity(&prod, 2, &[0]).map_err(|e| e.to_string())?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = DVector::from_vec(vec![0.0, s, s, 0.0].into_iter().map(|x| Complex64::new(x, 0.0)).collect());
    let e_bell = logarithmic_negativity(&(&v * v.adjoint()), 2, &[0]).map_err(|e| e.to_string())?;
    let k = coupling_kernels(&EmitterEnsemble::chain(6, 0.1, Orientation::Perpendicular, 0.05).unwrap()).map_err(|e| e.to_string())?;
    let init = single_excitation_state(&exciton_state(6, 6).unwrap().coeffs);
    let out = free_decay_evolution(&k, &init, &[100.0 / 0.05], None).map_err(|e| e.to_string())?;
    let rho = out[0].emitter_state();
    let site = |j| logarithmic_negativity(&rho, 6, &[j]).map_err(|e| e.to_string());
    let (edge, center) = (site(0)?, site(2)?);
    within(start.elapsed(), 300.0)?;
    check(
        e_prod.abs() < 1e-10 && (e_bell - 1.0).abs() < 1e-8 && center > 0.0 && center > edge,
        format!("product {e_prod:.1e}, Bell {e_bell:.10}, t=100/gamma: center {center:.4e} > edge {edge:.4e}"),
    )
}

fn c13_cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_purcell-lab");
    let scenario = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/fig3_detected_stats.json");
    let base = std::env::temp_dir().join(format!("purcell-lab-acceptance-{}", std::process::id()));
    let run = |tag: &str, workers: &str| -> Result<Vec<u8>, String> {
        let dir = base.join(tag);
        let status = Command::new(bin)
            .args(["run", scenario.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--workers", workers])
            .output()
            .map_err(|e| e.to_string())?
            .status;
        if !status.success() {
            return Err(format!("run {tag} exited with {status}"));
        }
        std::fs::read(dir.join("detected_stats.csv")).map_err(|e| e.to_string())
    };
    let a = run("a", "1")?;
    let b = run("b", "1")?;
    let c = run("c", "8")?;
    let manifests_equal = std::fs::read(base.join("a/manifest.json")).ok() == std::fs::read(base.join("c/manifest.json")).ok();
    let _ = std::fs::remove_dir_all(&base);
    check(
        a == b && a == c && manifests_equal,
        format!("repeat identical: {}, serial vs 8 workers identical: {}, manifests identical: {manifests_equal}", a == b, a == c),
    )
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("single-emitter resonance intensities", c1_resonance_intensities),
        ("energy conservation on a detuning grid", c2_energy_conservation),
        ("hybrid-mode threshold", c3_hybrid_threshold),
        ("Lyapunov residual and commutator", c4_lyapunov),
        ("vacuum passivity", c5_vacuum_passivity),
        ("finite-window detection limit", c6_finite_window),
        ("oracle cross-validation", c7_oracle),
        ("subradiant cooperativity scaling", c8_cooperativity),
        ("Kerr closed forms", c9_kerr_closed_forms),
        ("Kerr scaling exponents", c10_kerr_scaling),
        ("free-space decay and radiation", c11_free_space),
        ("entanglement", c12_entanglement),
        ("CLI determinism", c13_cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
