//! Detected photon statistics of the transmitted light: quadrature squeezing, number variance and g2.

use purcell_lab::fluctuations::detected_point;
use purcell_lab::steadystate::{solve_classical_full, CavitySystem};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let t_window = 1000.0;
    println!("{:>6} {:>10} {:>9} {:>9} {:>10} {:>8}", "delta", "n_det", "var_x", "var_y", "var_n/n", "g2");
    for k in 0..=10 {
        let delta = -0.25 + 0.05 * k as f64;
        let sys = CavitySystem::single(1.0, 0.05, 0.2, delta, delta, 0.05)?;
        let state = solve_classical_full(&sys)?;
        let (s, window_ok) = detected_point(&sys, &state, t_window)?;
        let flag = if window_ok { "" } else { "  (window short)" };
        println!(
            "{delta:>6.2} {:>10.4e} {:>9.5} {:>9.5} {:>10.6} {:>8.5}{flag}",
            s.n_det,
            s.var_x,
            s.var_y,
            s.var_n / s.n_det,
            s.g2
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
