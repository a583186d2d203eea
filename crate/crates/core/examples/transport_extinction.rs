// Without births and deaths every individual leaves through `s = m` after
// the transit time `Γ(m) = ∫ 1/γ`.

use sizestruct::numerics::SizeGrid;
use sizestruct::rates::{FertilityKernel, GeneralKernel, RateSurface, VitalRates};
use sizestruct::simulator::{simulate, PopulationState};

pub fn run_example() -> sizestruct::Result<()> {
    let rates = VitalRates::new(
        RateSurface::affine_s(1.0, 1.0),
        RateSurface::constant(0.0),
        FertilityKernel::general(GeneralKernel::zero()),
        1.0,
    )?;
    let grid = SizeGrid::uniform(1.0, 2000)?;
    let transit = rates.transit_time(&grid, 0.0);
    let state = PopulationState::new(grid.clone(), vec![1.0; 2000], 0.0)?;
    let trace = simulate(&state, &rates, 1.1 * transit, Some(0.25 * transit))?;
    println!("transit time Γ(m) = {transit:.6} (ln 2 = {:.6})", 2f64.ln());
    for snap in &trace.snapshots {
        let mass: f64 = snap.density.iter().zip(grid.weights()).map(|(d, w)| d * w).sum();
        println!("  t = {:.4}: mass {mass:.3e}", snap.time);
    }
    println!("mass at 1.1 Γ(m): {:.3e}", trace.totals.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
