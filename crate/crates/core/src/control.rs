//! Penalized HUM null controls, one Fourier mode at a time.
//!
//! For data `f0` the adjoint datum `g` solves `(G + eps I) g = -S f0`, with
//! `G` the discrete observability Gramian and `S = R^K` the free terminal
//! map. The control `u_j = P R^{K-j} g` then drives the trapezoid-Duhamel
//! scheme to `f(T) = S f0 + G g = -eps g` (up to the CG residual), which is
//! re-measured by an independent forward simulation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrushinError, Result};
use crate::evolution::{sine_mode, solve_controlled_mode, y_nodes, Field2D};
use crate::grid::{ProblemConfig, TimeGrid};
use crate::observability::{conjugate_gradient, Gramian, SpectralGramian};
use crate::spectral::{assemble_mode_operator, ModeOperator};

/// Relative residual of the normal equations at which CG stops.
pub const HUM_CG_TOL: f64 = 1e-12;
/// Time snapshots kept in the synthesized 2D control.
pub const CONTROL_SNAPSHOTS: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HumResult {
    pub n: usize,
    pub epsilon: f64,
    pub g0_opt: Vec<f64>,
    /// Interior indices of the strip nodes; columns of `control`.
    pub strip_nodes: Vec<usize>,
    /// `control[k][c]` at time node `k` and node `strip_nodes[c]`.
    pub control: Vec<Vec<f64>>,
    pub times: TimeGrid,
    /// `||f_n(T)|| / ||f0_n||`, from a forward simulation with `control`.
    pub residual: f64,
    pub f0_norm: f64,
    /// `f_n(T)` from that simulation.
    pub terminal: Vec<f64>,
    pub cg_iters: usize,
    pub cg_rel_residual: f64,
    pub cg_tol: f64,
    pub converged: bool,
    /// `sum_k w_k ||u_k||^2` (trapezoid in time).
    pub control_energy: f64,
    /// `-<g, S f0>`, which equals `<(G + eps)^{-1} S f0, S f0>` at the CG solution.
    pub hum_value: f64,
}

impl HumResult {
    /// Control rows expanded to every interior node (zero off the strip).
    pub fn control_full(&self, nx: usize) -> Vec<Vec<f64>> {
        self.control
            .iter()
            .map(|row| {
                let mut full = vec![0.0; nx];
                for (&i, &u) in self.strip_nodes.iter().zip(row) {
                    full[i] = u;
                }
                full
            })
            .collect()
    }
}

/// How the normal operator `G + eps I` is applied inside CG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramianForm {
    /// Dense matrix in the eigenbasis of the mode operator.
    Spectral,
    /// One forward and one reverse Crank-Nicolson sweep per application.
    MatrixFree,
}

pub fn hum_solve_mode(op: &ModeOperator, f0: &[f64], tg: TimeGrid, cfg: &ProblemConfig, epsilon: f64) -> Result<HumResult> {
    hum_solve_mode_with(op, f0, tg, cfg, epsilon, GramianForm::Spectral)
}

pub fn hum_solve_mode_with(
    op: &ModeOperator,
    f0: &[f64],
    tg: TimeGrid,
    cfg: &ProblemConfig,
    epsilon: f64,
    form: GramianForm,
) -> Result<HumResult> {
    if !(epsilon > 0.0) {
        return Err(GrushinError::Control(format!("require epsilon > 0, got {epsilon}")));
    }
    let nx = op.dim();
    if f0.len() != nx {
        return Err(GrushinError::SizeMismatch { module: "control", expected: nx, got: f0.len() });
    }
    let grid = &op.grid;
    let mask = grid.strip_mask(cfg.a, cfg.b);
    let strip_nodes: Vec<usize> = (0..nx).filter(|&i| mask[i]).collect();
    let gram = Gramian::new(op, tg, &mask)?;
    let sf0 = gram.terminal(f0);
    let max_iter = 8 * nx;

    let cg = match form {
        GramianForm::MatrixFree => {
            let rhs: Vec<f64> = sf0.iter().map(|v| -v).collect();
            conjugate_gradient(
                |v| {
                    let mut gv = gram.apply(v);
                    gv.iter_mut().zip(v).for_each(|(a, b)| *a += epsilon * b);
                    gv
                },
                &rhs,
                None,
                |u, v| grid.dot(u, v),
                HUM_CG_TOL,
                max_iter,
            )
        }
        GramianForm::Spectral => {
            let sg = SpectralGramian::new(op, tg, &mask)?;
            let rhs: Vec<f64> = sg.to_coeffs(&sf0).iter().map(|v| -v).collect();
            let mut out = conjugate_gradient(
                |c| {
                    let mut gc = sg.apply_coeffs(c);
                    gc.iter_mut().zip(c).for_each(|(a, b)| *a += epsilon * b);
                    gc
                },
                &rhs,
                None,
                |u, v| u.iter().zip(v).map(|(a, b)| a * b).sum(),
                HUM_CG_TOL,
                max_iter,
            );
            out.x = sg.from_coeffs(&out.x);
            out
        }
    };
    let g = cg.x;

    // adjoint trajectory z_m = R^m g, played backwards on the strip
    let mut z = Vec::with_capacity(tg.steps + 1);
    let mut cur = g.clone();
    let mut scratch = Vec::new();
    z.push(cur.clone());
    for _ in 0..tg.steps {
        gram.propagator().apply_in_place(&mut cur, &mut scratch);
        z.push(cur.clone());
    }
    let control: Vec<Vec<f64>> =
        (0..=tg.steps).map(|j| strip_nodes.iter().map(|&i| z[tg.steps - j][i]).collect()).collect();
    let control_energy: f64 = control
        .iter()
        .enumerate()
        .map(|(j, row)| tg.weight(j) * grid.h() * row.iter().map(|u| u * u).sum::<f64>())
        .sum();

    let mut result = HumResult {
        n: op.n,
        epsilon,
        hum_value: -grid.dot(&g, &sf0),
        g0_opt: g,
        strip_nodes,
        control,
        times: tg,
        residual: 0.0,
        f0_norm: grid.norm(f0),
        terminal: Vec::new(),
        cg_iters: cg.iterations,
        cg_rel_residual: cg.rel_residual,
        cg_tol: HUM_CG_TOL,
        converged: cg.converged,
        control_energy,
    };
    let traj = solve_controlled_mode(op, f0, &result.control_full(nx), &mask, tg)?;
    result.terminal = traj.terminal().to_vec();
    let fin = grid.norm(&result.terminal);
    result.residual = if result.f0_norm > 0.0 { fin / result.f0_norm } else { fin };
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct ControlReport {
    pub gamma: f64,
    pub horizon: f64,
    pub epsilon: f64,
    /// `per_mode[n-1]` for mode `n`.
    pub per_mode: Vec<HumResult>,
    /// `(sum_n residual_n^2 ||f0_n||^2)^{1/2} / ||f0||`.
    pub total_residual: f64,
    pub total_energy: f64,
    /// `u(t,x,y) = sum_n u_n(t,x) sqrt(2) sin(n pi y)` on `ny = per_mode.len()`
    /// interior y-nodes, at evenly strided time nodes (always including `T`).
    pub control_2d: Field2D,
    /// Synthesized `f(T)` on the same nodes.
    pub terminal_2d: Vec<f64>,
    /// `||f(T)|| / ||f0||` measured on the synthesized 2D fields.
    pub field_residual: f64,
    pub all_converged: bool,
}

/// Per-mode HUM for modes `1..=f0_modes.len()` on the grid and time grid of `cfg`.
pub fn control_full(cfg: &ProblemConfig, f0_modes: &[Vec<f64>], epsilon: f64) -> Result<ControlReport> {
    if f0_modes.is_empty() {
        return Err(GrushinError::Control("no modes given".into()));
    }
    let grid = cfg.grid()?;
    let tg = cfg.time_grid()?;
    let per_mode: Vec<HumResult> = f0_modes
        .par_iter()
        .enumerate()
        .map(|(i, f0)| {
            let op = assemble_mode_operator(i + 1, cfg.gamma, &grid);
            hum_solve_mode(&op, f0, tg, cfg, epsilon)
        })
        .collect::<Result<_>>()?;

    let f0_sq: f64 = per_mode.iter().map(|r| r.f0_norm * r.f0_norm).sum();
    let fin_sq: f64 = per_mode.iter().map(|r| (r.residual * r.f0_norm).powi(2)).sum();
    let total_residual = if f0_sq > 0.0 { (fin_sq / f0_sq).sqrt() } else { fin_sq.sqrt() };
    let total_energy = per_mode.iter().map(|r| r.control_energy).sum();

    let nx = grid.nx();
    let ny = per_mode.len();
    let hy = 1.0 / (ny + 1) as f64;
    let ys = y_nodes(ny);
    let basis: Vec<Vec<f64>> = (1..=ny).map(|n| ys.iter().map(|&y| sine_mode(n, y)).collect()).collect();
    let synth = |rows: &dyn Fn(usize) -> Vec<(usize, f64)>| -> Vec<f64> {
        let mut out = vec![0.0; nx * ny];
        for (m, phi) in basis.iter().enumerate() {
            for (i, v) in rows(m) {
                let base = i * ny;
                for j in 0..ny {
                    out[base + j] += v * phi[j];
                }
            }
        }
        out
    };
    let stride = tg.steps.div_ceil(CONTROL_SNAPSHOTS).max(1);
    let mut snaps: Vec<usize> = (0..=tg.steps).step_by(stride).collect();
    if *snaps.last().unwrap() != tg.steps {
        snaps.push(tg.steps);
    }
    let values: Vec<Vec<f64>> = snaps
        .iter()
        .map(|&k| {
            synth(&|m: usize| {
                let r = &per_mode[m];
                r.strip_nodes.iter().zip(&r.control[k]).map(|(&i, &u)| (i, u)).collect()
            })
        })
        .collect();
    let control_2d = Field2D { times: snaps.iter().map(|&k| tg.time(k)).collect(), nx, ny, values, y_modes: ny };
    let terminal_2d = synth(&|m: usize| per_mode[m].terminal.iter().cloned().enumerate().collect());
    let fin_field = (grid.h() * hy * terminal_2d.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let f0_field = {
        let f = synth(&|m: usize| f0_modes[m].iter().cloned().enumerate().collect());
        (grid.h() * hy * f.iter().map(|v| v * v).sum::<f64>()).sqrt()
    };
    Ok(ControlReport {
        gamma: cfg.gamma,
        horizon: cfg.horizon,
        epsilon,
        all_converged: per_mode.iter().all(|r| r.converged),
        total_residual,
        total_energy,
        field_residual: if f0_field > 0.0 { fin_field / f0_field } else { fin_field },
        per_mode,
        control_2d,
        terminal_2d,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSummary {
    pub n: usize,
    pub residual: f64,
    pub control_energy: f64,
    pub cg_iters: usize,
    pub cg_rel_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlSummary {
    pub gamma: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub epsilon: f64,
    pub total_residual: f64,
    pub total_energy: f64,
    pub per_mode: Vec<ModeSummary>,
}

impl ControlReport {
    pub fn summary(&self) -> ControlSummary {
        ControlSummary {
            gamma: self.gamma,
            horizon: self.horizon,
            epsilon: self.epsilon,
            total_residual: self.total_residual,
            total_energy: self.total_energy,
            per_mode: self
                .per_mode
                .iter()
                .map(|r| ModeSummary {
                    n: r.n,
                    residual: r.residual,
                    control_energy: r.control_energy,
                    cg_iters: r.cg_iters,
                    cg_rel_residual: r.cg_rel_residual,
                    converged: r.converged,
                })
                .collect(),
        }
    }
}

/// CSV `t,x,n,value` over every time node and strip node of every mode.
pub fn write_control_csv<W: Write>(out: &mut W, report: &ControlReport, cfg: &ProblemConfig) -> Result<()> {
    let grid = cfg.grid()?;
    let xs = grid.interior();
    writeln!(out, "t,x,n,value")?;
    for r in &report.per_mode {
        for (k, row) in r.control.iter().enumerate() {
            let t = r.times.time(k);
            for (&i, &u) in r.strip_nodes.iter().zip(row) {
                writeln!(out, "{:.16e},{:.16e},{},{:.16e}", t, xs[i], r.n, u)?;
            }
        }
    }
    Ok(())
}
