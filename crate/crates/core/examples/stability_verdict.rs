// Combined verdict from the matrix spectrum, the characteristic roots and
// the sufficient conditions.

use sizestruct::equilibrium::solve_equilibrium_separable;
use sizestruct::models;
use sizestruct::numerics::SizeGrid;
use sizestruct::stability::spectral_verdict;

pub fn run_example() -> sizestruct::Result<()> {
    let grid = SizeGrid::uniform(1.0, 200)?;
    let cases = [
        ("baseline", models::baseline()),
        ("exp fertility k = 0.5", models::exp_fertility(0.5)),
        ("exp fertility k = -0.5", models::exp_fertility(-0.5)),
    ];
    for (name, rates) in cases {
        let eq = solve_equilibrium_separable(&rates, &grid, (1e-3, 100.0))?.remove(0);
        let report = spectral_verdict(&rates, &eq, &grid)?;
        let root = report.rightmost_char_root.map(|z| format!("{:.4}{:+.4}i", z.re, z.im));
        println!(
            "{name}: {} (matrix {:.4}{:+.4}i, root {}, certificate {})",
            report.verdict,
            report.dominant_matrix_eig.re,
            report.dominant_matrix_eig.im,
            root.as_deref().unwrap_or("none"),
            report.instability_certificate.is_some()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
