//! Mode-by-mode Crank-Nicolson against the direct 2D solver.

use std::f64::consts::PI;

use grushin::evolution::{solve_2d_direct, solve_adjoint_mode, synthesize_2d, write_field_csv};
use grushin::grid::seeded_vector;
use grushin::spectral::ModeOperator;
use grushin::ProblemConfig;

fn main() -> grushin::Result<()> {
    let (nx, ny, modes) = (101, 31, 5);
    let cfg = ProblemConfig::new(1.0, 0.3, 0.8, 0.1, nx, 100, modes)?;
    let grid = cfg.grid()?;
    let tg = cfg.time_grid()?;
    let hy = 1.0 / (ny + 1) as f64;
    let trajs = (1..=modes)
        .map(|n| {
            let mu = (2.0 / hy * (n as f64 * PI * hy / 2.0).sin()).powi(2);
            let op = ModeOperator::with_coupling(n, cfg.gamma, &grid, mu);
            solve_adjoint_mode(&op, &seeded_vector(nx, 1, n as u64), tg)
        })
        .collect::<grushin::Result<Vec<_>>>()?;
    let synth = synthesize_2d(&trajs, ny)?;
    let direct = solve_2d_direct(&cfg, ny, &synth.values[0], None)?;
    let last = synth.times.len() - 1;
    let mismatch = synth
        .terminal()
        .iter()
        .zip(direct.terminal())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / direct.terminal().iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("||f(0)|| = {:.6}, ||f(T)|| = {:.6}", synth.norm(0, grid.h()), synth.norm(last, grid.h()));
    println!("relative terminal mismatch, synthesis vs direct: {mismatch:.2e}");

    let path = std::env::temp_dir().join("grushin_field.csv");
    let mut f = std::fs::File::create(&path)?;
    write_field_csv(&mut f, &synth, &grid, &[0, last])?;
    println!("snapshots written to {}", path.display());
    Ok(())
}
