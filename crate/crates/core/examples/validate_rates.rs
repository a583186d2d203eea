// Sign, derivative and irreducibility checks, plus the sufficient
// conditions for a positive equilibrium.

use sizestruct::equilibrium::{check_existence_conditions, ComparisonKernel};
use sizestruct::models;
use sizestruct::numerics::SizeGrid;
use sizestruct::rates::{validate_rates, RateSurface, ValidationOptions};

pub fn run_example() -> sizestruct::Result<()> {
    let rates = models::baseline();
    let grid = SizeGrid::uniform(1.0, 200)?;
    let report = validate_rates(&rates, &grid, &[0.0, 1.0, 10.0], &ValidationOptions::default());
    println!("mandatory checks pass: {}", report.mandatory_pass());
    for d in &report.derivatives {
        println!("  {} {}: max relative error {:.1e}", d.surface, d.derivative, d.max_relative_error);
    }

    let lower = ComparisonKernel { beta1: RateSurface::constant(2.0), beta2: RateSurface::constant(1.0), p: 0.5 };
    let upper = ComparisonKernel { beta1: RateSurface::constant(3.0), beta2: RateSurface::constant(1.0), p: 1.5 };
    let conditions = check_existence_conditions(&rates, &grid, Some(&lower), Some(&upper))?;
    println!("{}", serde_json::to_string_pretty(&conditions).expect("report serializes"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
