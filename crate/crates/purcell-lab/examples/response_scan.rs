//! Transmission, reflection and emitter scattering of a one-emitter cavity across detuning.

use purcell_lab::steadystate::{linear_response, purcell_quantities, CavitySystem};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (kappa, gamma, g) = (1.0, 0.05, 0.2);
    let sys = CavitySystem::single(kappa, gamma, g, 0.0, 0.0, 0.0)?;
    let (coop, purcell) = purcell_quantities(g, kappa, gamma)?;
    println!("cooperativity {coop:.3}, Purcell factor {purcell:.3}");

    let grid: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
    println!("{:>7} {:>10} {:>10} {:>10} {:>10}", "delta", "|t|^2", "|r|^2", "|s|^2", "sum");
    for r in linear_response(&sys, &grid)? {
        let (t, rr) = (r.t_c.norm_sqr(), r.r_c.norm_sqr());
        println!("{:>7.2} {t:>10.5} {rr:>10.5} {:>10.5} {:>10.2e}", r.delta, r.abs_s2, t + rr + r.abs_s2 - 1.0);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
