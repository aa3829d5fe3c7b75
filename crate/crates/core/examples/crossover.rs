//! Crossover horizon for gamma = 1 from the decay of the strip mass.

use grushin::bounds::crossover_estimate;
use grushin::spectral::required_nx;
use grushin::ProblemConfig;

fn main() -> grushin::Result<()> {
    let list: Vec<usize> = (2..=16).map(|k| 16 * k).collect();
    for a in [0.2, 0.3, 0.5] {
        let cfg = ProblemConfig::new(1.0, a, 0.8, 1.0, required_nx(256, 1.0) | 1, 100, 256)?;
        let r = crossover_estimate(&cfg, &list)?;
        println!(
            "a = {a}: t_hat = {:.5}, a^2/2 = {:.5}, secant spread {:.3}{}",
            r.t_hat,
            r.t_asymptotic,
            r.slope_spread,
            if r.flagged { " (flagged)" } else { "" }
        );
    }
    Ok(())
}
