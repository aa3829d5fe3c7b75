//! Penalized HUM null control of eight Fourier modes for gamma = 1/2.

use grushin::control::{control_full, write_control_csv};
use grushin::grid::seeded_vector;
use grushin::ProblemConfig;

fn main() -> grushin::Result<()> {
    let cfg = ProblemConfig::new(0.5, 0.3, 0.8, 0.3, 201, 300, 8)?;
    let f0: Vec<Vec<f64>> = (0..8).map(|i| seeded_vector(cfg.nx, 42, i)).collect();
    for eps in [1e-6, 1e-8, 1e-10] {
        let r = control_full(&cfg, &f0, eps)?;
        println!(
            "eps = {eps:.0e}: ||f(T)|| / ||f0|| = {:.3e} (2D field {:.3e}), control energy {:.4e}",
            r.total_residual, r.field_residual, r.total_energy
        );
        if eps == 1e-8 {
            for m in &r.per_mode {
                println!("  n = {}  residual {:.2e}  energy {:.3e}  CG iterations {}", m.n, m.residual, m.control_energy, m.cg_iters);
            }
            let path = std::env::temp_dir().join("grushin_control.csv");
            write_control_csv(&mut std::fs::File::create(&path)?, &r, &cfg)?;
            println!("  control written to {}", path.display());
        }
    }
    Ok(())
}
