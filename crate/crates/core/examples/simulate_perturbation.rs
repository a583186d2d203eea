// Perturb an equilibrium, integrate, and compare the measured decay rate
// with the dominant eigenvalue of the linearization.

use sizestruct::equilibrium::solve_equilibrium_general;
use sizestruct::models;
use sizestruct::numerics::{dense_eigen, SizeGrid};
use sizestruct::simulator::{measure_growth_rate, perturb_equilibrium, simulate, PerturbationMode, PopulationState};
use sizestruct::stability::assemble_linearized;

pub fn run_example() -> sizestruct::Result<()> {
    let rates = models::mortality_feedback();
    let grid = SizeGrid::uniform(1.0, 200)?;
    let eq = solve_equilibrium_general(&rates, &grid, (1e-3, 100.0))?.remove(0);
    let dominant = dense_eigen(&assemble_linearized(&rates, &eq, &grid)?.matrix)?.dominant();

    for amplitude in [0.01, 0.02] {
        let p0 = perturb_equilibrium(&rates, &eq, &grid, amplitude, PerturbationMode::Uniform)?;
        let trace = simulate(&PopulationState::new(grid.clone(), p0, 0.0)?, &rates, 6.0, None)?;
        let fit = measure_growth_rate(&trace, eq.pop_star, (2.0, 5.0))?;
        println!(
            "amplitude {amplitude}: measured {:.5}, eigenvalue {:.5}, max mass-balance residual {:.1e}",
            fit.rate,
            dominant.re,
            trace.max_mass_balance_residual()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
