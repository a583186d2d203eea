// Zeros of the characteristic determinant for a separable kernel, set
// against the spectrum of the linearized matrix.

use sizestruct::equilibrium::solve_equilibrium_separable;
use sizestruct::models;
use sizestruct::numerics::{dense_eigen, Rectangle, SizeGrid};
use sizestruct::stability::{assemble_linearized, find_char_roots, reduced_char_constant_beta2, reduced_stability_condition};

pub fn run_example() -> sizestruct::Result<()> {
    let rates = models::exp_fertility(0.5);
    let grid = SizeGrid::uniform(1.0, 200)?;
    let eq = solve_equilibrium_separable(&rates, &grid, (1e-3, 100.0))?.remove(0);

    let region = Rectangle::new(-8.0, 3.0, -30.0, 30.0)?;
    let roots = find_char_roots(&rates, &eq, &grid, &region)?;
    println!("characteristic roots in {region:?}:");
    for z in &roots {
        println!("  {:.6} {:+.6}i", z.re, z.im);
    }

    let lin = assemble_linearized(&rates, &eq, &grid)?;
    let eig = dense_eigen(&lin.matrix)?;
    println!("matrix dominant eigenvalue: {:.6}", eig.dominant());

    let reduced = reduced_stability_condition(&rates, &eq, &grid)?;
    println!("reduced equation at λ = 0: {:.6} (condition holds: {})", reduced.value_at_zero, reduced.holds);
    println!("reduced function at the rightmost root: {:.2e}", reduced_char_constant_beta2(&rates, &eq, &grid, roots[0].re)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
