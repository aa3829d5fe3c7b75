//! Ground states of the mode operators for the three regimes.

use std::f64::consts::PI;

use grushin::spectral::{first_k_eigenpairs, required_nx};
use grushin::{assemble_mode_operator, ground_eigenpair, make_grid};

fn main() -> grushin::Result<()> {
    for gamma in [0.5, 1.0, 2.0] {
        let grid = make_grid(required_nx(64, gamma) | 1)?;
        println!("gamma = {gamma} (nx = {})", grid.nx());
        for n in [1, 4, 16, 64] {
            let p = ground_eigenpair(&assemble_mode_operator(n, gamma, &grid), 1e-14)?;
            println!(
                "  n = {n:3}  lambda = {:14.8}  bracket width {:.1e}  v(0) = {:.4}",
                p.lambda,
                p.bracket.1 - p.bracket.0,
                p.v[grid.center()]
            );
        }
    }
    // levels (2j+1) n pi of the harmonic oscillator
    let grid = make_grid(2001)?;
    let ps = first_k_eigenpairs(&assemble_mode_operator(64, 1.0, &grid), 3, 1e-14)?;
    for (j, p) in ps.iter().enumerate() {
        println!("gamma = 1, n = 64, level {j}: lambda / (n pi) = {:.5}", p.lambda / (64.0 * PI));
    }
    Ok(())
}
