//! Third-order (Kerr) correction to the emitter amplitudes versus chain length and spacing.

use purcell_lab::greens::Orientation;
use purcell_lab::kerr::{independent_kerr_curve, kerr_distance_row, kerr_scaling_scan};
use purcell_lab::steadystate::{ChainSpec, Symmetry};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let eta = 1e-4;
    let spec = ChainSpec { d: 0.07, orientation: Orientation::Perpendicular, gamma: 0.05, kappa: 1.0, g: 0.1 };
    let ns = [1, 2, 4, 8, 16, 32];
    for sym in [Symmetry::Independent, Symmetry::Symmetric, Symmetry::Alternating] {
        let scan = kerr_scaling_scan(&spec, &ns, sym, eta, true)?;
        let norms: Vec<String> = scan.rows.iter().map(|r| format!("{:.2e}", r.norm_beta3)).collect();
        println!("{:<12} |beta3|: {}  exponent {:.2}", sym.tag(), norms.join(" "), scan.exponent.unwrap_or(f64::NAN));
    }

    let big: Vec<usize> = [1e3, 2e3, 5e3, 1e4].iter().map(|&x| x as usize).collect();
    let (_, slope) = independent_kerr_curve(&big, 0.2, 0.05, 1.0, eta);
    println!("independent closed form, C = 0.2, N in [1e3, 1e4]: slope {:.3}", slope.unwrap_or(f64::NAN));

    println!("two emitters versus spacing:");
    for d in [0.05, 0.1, 0.2, 0.4, 0.8] {
        let s = kerr_distance_row(&spec, d, Symmetry::Symmetric, eta)?;
        let a = kerr_distance_row(&spec, d, Symmetry::Alternating, eta)?;
        println!("  d = {d:<5} symmetric {:.3e}  alternating {:.3e}", s.norm_beta3, a.norm_beta3);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
