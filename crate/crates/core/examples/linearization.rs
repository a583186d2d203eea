// Linearized operator at an equilibrium and its agreement with the
// finite-difference Jacobian of the simulator's right-hand side.

use sizestruct::equilibrium::solve_equilibrium_general;
use sizestruct::models;
use sizestruct::numerics::SizeGrid;
use sizestruct::stability::{assemble_linearized, check_positivity_condition, check_sufficient_stability};

pub fn run_example() -> sizestruct::Result<()> {
    let grid = SizeGrid::uniform(1.0, 100)?;
    let cases = [
        ("baseline", models::baseline()),
        ("mortality feedback", models::mortality_feedback()),
        ("growth feedback", models::growth_feedback()),
    ];
    for (name, rates) in cases {
        let eq = solve_equilibrium_general(&rates, &grid, (1e-3, 5.0))?.remove(0);
        let lin = assemble_linearized(&rates, &eq, &grid)?;
        let rho_max = lin.rho_star.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let positivity = check_positivity_condition(&rates, &eq, &grid)?;
        let sufficient = check_sufficient_stability(&rates, &eq, &grid)?;
        println!(
            "{name}: P* = {:.5}, max|ρ*| = {rho_max:.3}, Jacobian residual {:.1e}, positivity {} ({:.3}), sufficient {} ({:.3})",
            eq.pop_star, lin.jacobian_residual, positivity.holds, positivity.margin, sufficient.holds, sufficient.margin
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
