// Fertility that rises with crowding: the recruitment term dominates a
// constant `ε` and `K(0) > 1`, which certifies a positive growth rate.

use sizestruct::equilibrium::solve_equilibrium_separable;
use sizestruct::models;
use sizestruct::numerics::SizeGrid;
use sizestruct::stability::{check_instability, k_instability};

pub fn run_example() -> sizestruct::Result<()> {
    let rates = models::exp_fertility(-0.5);
    let grid = SizeGrid::uniform(1.0, 400)?;
    let eq = solve_equilibrium_separable(&rates, &grid, (1e-3, 100.0))?.remove(0);
    match check_instability(&rates, &eq, &grid)? {
        Some(cert) => {
            println!("ε = {:.5}, K(0) = {:.5}", cert.epsilon, cert.k_at_zero);
            println!("K(λ) = 1 at λ = {:.5}", cert.growth_lower_bound);
            for lambda in [0.0, 0.5, 1.0, 2.0, 4.0] {
                println!("  K({lambda}) = {:.5}", k_instability(&rates, &eq, &grid, cert.epsilon, lambda)?);
            }
        }
        None => println!("no certificate"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
