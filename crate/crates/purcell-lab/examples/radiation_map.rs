//! Far-side radiation pattern of a two-emitter exciton state on a plane above the chain.

use purcell_lab::freespace::{diagonal_decay_channels, exciton_state, plane_grid, plane_integral, radiation_intensity};
use purcell_lab::greens::{coupling_kernels, EmitterEnsemble, Orientation};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let ens = EmitterEnsemble::chain(2, 0.3, Orientation::Perpendicular, 0.05)?;
    let kernels = coupling_kernels(&ens)?;
    let channels = diagonal_decay_channels(&kernels.gamma_matrix)?;
    println!("decay channels: {:?}", channels.lambdas.as_slice());

    let (x, y, n) = ((-4.0, 4.3), (-4.0, 4.0), 41);
    let grid = plane_grid(x, y, n, n, 2.0);
    for m in 1..=2 {
        let state = exciton_state(2, m)?;
        let map = radiation_intensity(&ens, &state.coherence(), &grid)?;
        println!(
            "m = {m}: peak {:.4e}, plane integral {:.4e}, skipped points {}",
            map.max(),
            plane_integral(&map, x, y, n, n),
            map.skipped()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
