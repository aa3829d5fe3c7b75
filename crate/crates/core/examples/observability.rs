//! Per-mode observability costs for gamma = 1/2 and 1.

use grushin::observability::uniform_sweep;
use grushin::spectral::required_nx;
use grushin::ProblemConfig;

fn main() -> grushin::Result<()> {
    let list = [1, 2, 4, 8, 16, 32];
    for (gamma, horizon) in [(0.5, 0.3), (1.0, 0.3)] {
        let cfg = ProblemConfig::new(gamma, 0.3, 0.8, horizon, required_nx(32, gamma) | 1, 300, 32)?;
        let sweep = uniform_sweep(&cfg, &list)?;
        println!("gamma = {gamma}, T = {horizon}");
        for r in &sweep.reports {
            println!(
                "  n = {:2}  cost = {:11.4e}  lower = {:11.4e}  {}{}",
                r.n,
                r.cost,
                r.lower_bound,
                r.method,
                if r.converged { "" } else { " (not converged)" }
            );
        }
        println!("  sup over n: {:.4e} at n = {:?}", sweep.sup_cost, sweep.argmax_n);
    }
    Ok(())
}
