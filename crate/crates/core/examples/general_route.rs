// Equilibria as zeros of the dominant eigenvalue `λ_P` of the discretized
// operator, for a separable and a non-separable kernel.

use sizestruct::equilibrium::{dominant_eigenvalue, solve_equilibrium_general, solve_equilibrium_separable};
use sizestruct::models;
use sizestruct::numerics::SizeGrid;

pub fn run_example() -> sizestruct::Result<()> {
    let baseline = models::baseline();
    for n in [200, 400] {
        let grid = SizeGrid::uniform(1.0, n)?;
        let general = solve_equilibrium_general(&baseline, &grid, (1e-3, 100.0))?;
        let separable = solve_equilibrium_separable(&baseline, &grid, (1e-3, 100.0))?;
        println!(
            "baseline, {n} cells: general {:.6}, separable {:.6}, gap {:.2e}",
            general[0].pop_star,
            separable[0].pop_star,
            (general[0].pop_star - separable[0].pop_star).abs()
        );
    }

    let spread = models::offspring_spread();
    let grid = SizeGrid::uniform(1.0, 200)?;
    for p in [0.0, 0.5, 2.0] {
        let (lambda, _) = dominant_eigenvalue(&spread, &grid, p)?;
        println!("offspring spread: λ_P at P = {p}: {lambda:.5}");
    }
    let eqs = solve_equilibrium_general(&spread, &grid, (1e-3, 10.0))?;
    for eq in &eqs {
        println!("offspring spread: P* = {:.6}, residual {:.1e}", eq.pop_star, eq.residual_stationary);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
