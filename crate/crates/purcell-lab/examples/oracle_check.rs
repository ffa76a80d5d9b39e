//! Cross-check of the mean-field amplitudes against a truncated master-equation steady state.

use purcell_lab::oracle::{steady_state, EvolveOptions};
use purcell_lab::steadystate::{solve_classical, CavitySystem};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sys = CavitySystem::single(1.0, 0.05, 0.2, 0.0, 0.0, 0.05)?;
    let classical = solve_classical(&sys)?;
    let quantum = steady_state(&sys, 6, EvolveOptions::default())?;
    let alpha = quantum.cavity_amplitude();
    let beta = quantum.emitter_amplitude(0);
    println!("alpha: mean field {:.6}, master equation {:.6}", classical.alpha, alpha);
    println!("beta:  mean field {:.6}, master equation {:.6}", classical.beta[0], beta);
    println!(
        "relative differences {:.2e} {:.2e}, emitter excitation {:.3e}",
        (alpha - classical.alpha).norm() / classical.alpha.norm(),
        (beta - classical.beta[0]).norm() / classical.beta[0].norm(),
        quantum.excited_population(0)
    );
    let (vx, vy) = quantum.cavity_quadratures();
    println!("cavity quadrature variances {vx:.6} {vy:.6}, g2 {:.5}", quantum.cavity_g2());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
