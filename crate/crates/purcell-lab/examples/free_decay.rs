//! Free-space decay of a six-emitter exciton and the entanglement left on each site.

use purcell_lab::freespace::exciton_state;
use purcell_lab::greens::{coupling_kernels, EmitterEnsemble, Orientation};
use purcell_lab::oracle::{free_decay_evolution, logarithmic_negativity, single_excitation_state};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (n, gamma) = (6, 0.05);
    let kernels = coupling_kernels(&EmitterEnsemble::chain(n, 0.1, Orientation::Perpendicular, gamma)?)?;
    let initial = single_excitation_state(&exciton_state(n, n)?.coeffs);
    let times: Vec<f64> = (0..=5).map(|k| k as f64 * 400.0).collect();
    for state in free_decay_evolution(&kernels, &initial, &times, None)? {
        let rho = state.emitter_state();
        let neg: Vec<String> = (0..n)
            .map(|j| logarithmic_negativity(&rho, n, &[j]).map(|e| format!("{e:.3e}")))
            .collect::<Result<_, _>>()?;
        println!("t = {:>6.0}  excitation {:.4e}  site negativity {}", state.time, state.total_excitation(), neg.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
