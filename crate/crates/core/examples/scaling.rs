//! Power-law fit of the ground eigenvalue in n.

use grushin::make_grid;
use grushin::spectral::{eigen_scaling_sweep, required_nx};

fn main() -> grushin::Result<()> {
    let list = [16, 32, 64, 128, 256];
    for gamma in [0.5, 1.0, 2.0] {
        let grid = make_grid(required_nx(256, gamma) | 1)?;
        let fit = eigen_scaling_sweep(gamma, &list, &grid)?;
        println!(
            "gamma = {gamma}: exponent {:.4} (expected {:.4}), lambda / n^p in [{:.4}, {:.4}]",
            fit.exponent_hat,
            2.0 / (1.0 + gamma),
            fit.c_lower_hat,
            fit.c_upper_hat
        );
    }
    Ok(())
}
