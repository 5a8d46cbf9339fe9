//! Grid-refinement stability of the gap eigenvalues: the bound-state energy
//! of the default attractive well drifts by less than 1e-2 when the lattice
//! is refined from 12³ to 16³ at fixed extent.

use diraclab_core::bound_states::{spectral_decompose, EigenOptions};
use diraclab_core::potential::{build_potential, PotentialProfile};
use diraclab_core::{PeriodicGrid, SpectralEngine};

#[test]
fn bound_state_energy_stable_under_refinement() {
    let profile = PotentialProfile::GaussianIdentity {
        amplitude: -1.0,
        width: 1.3,
    };
    let mut energies = Vec::new();
    for n in [12usize, 16] {
        let grid = PeriodicGrid::new(n, 12.0).unwrap();
        let engine = SpectralEngine::new(grid);
        let pot = build_potential(grid, &profile, 6.0).unwrap();
        let decomp = spectral_decompose(&engine, &pot, 1.0, &EigenOptions::default()).unwrap();
        assert!(
            !decomp.bound_states.is_empty(),
            "no bound state at n = {n}"
        );
        energies.push(decomp.bound_states[0].omega);
    }
    let drift = (energies[0] - energies[1]).abs();
    assert!(
        drift < 1e-2,
        "eigenvalue drift {drift} between 12³ ({}) and 16³ ({})",
        energies[0],
        energies[1]
    );
}
