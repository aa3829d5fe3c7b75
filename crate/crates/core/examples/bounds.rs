//! Hat-function upper bounds, the exponential supersolution and the rho functional.

use grushin::bounds::{comparison_check, hat_bound, rho_sweep, supersolution_params, tail_resolution_nx};
use grushin::{assemble_mode_operator, ground_eigenpair, make_grid, ProblemConfig};

fn main() -> grushin::Result<()> {
    let a = 0.3;
    for gamma in [1.0, 2.0] {
        let grid = make_grid(tail_resolution_nx(256, gamma))?;
        println!("gamma = {gamma}, nx = {}", grid.nx());
        for n in [4, 16, 64, 256] {
            let pair = ground_eigenpair(&assemble_mode_operator(n, gamma, &grid), 1e-14)?;
            let hat = hat_bound(n, gamma);
            let sup = supersolution_params(&pair)?;
            let cmp = comparison_check(&pair, &sup, &grid, a)?;
            let verdict = if cmp.applicable { format!("v <= W: {}", cmp.holds) } else { cmp.note.clone() };
            println!(
                "  n = {n:3}  lambda = {:10.4}  hat/lambda = {:.4}  x_n = {:.4}  {verdict}",
                pair.lambda,
                hat.bound / pair.lambda,
                sup.x_n
            );
        }
    }

    // ln rho_n(T) for gamma = 1 on both sides of a^2 / 2
    let nx = tail_resolution_nx(256, 1.0);
    for horizon in [0.02, 0.2] {
        let cfg = ProblemConfig::new(1.0, a, 0.8, horizon, nx, 100, 256)?;
        let s = rho_sweep(&cfg, &[16, 64, 256])?;
        let logs: Vec<String> = s.iter().map(|r| format!("{:.2}", r.log_rho)).collect();
        println!("gamma = 1, T = {horizon}: ln rho at n = 16, 64, 256: {}", logs.join(", "));
    }
    Ok(())
}
