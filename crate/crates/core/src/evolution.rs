//! Crank–Nicolson integration of single Fourier modes, sine synthesis of
//! the two-dimensional field, and a direct two-dimensional solver kept as
//! an independent oracle for the mode decomposition.
//!
//! Sources enter through a trapezoid-Duhamel step
//! `f_{k+1} = R (f_k + dt/2 s_k) + dt/2 s_{k+1}` with
//! `R = (I + dt/2 A)^{-1} (I - dt/2 A)`. Unrolled, the terminal state is
//! `R^K f_0 + sum_j w_j R^{K-j} s_j` with trapezoid weights `w_j`, which is
//! the same quadrature the observation energy uses; this makes the adjoint
//! identities of the Gramian exact at the discrete level.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrushinError, Result};
use crate::grid::{Grid1D, ProblemConfig, TimeGrid};
use crate::spectral::ModeOperator;
use crate::tridiag::TridiagFactor;

/// Factored Crank–Nicolson propagator for a fixed operator and step.
#[derive(Debug, Clone)]
pub struct CnPropagator {
    half_dt: f64,
    diag: Vec<f64>,
    off: Vec<f64>,
    factor: TridiagFactor,
}

impl CnPropagator {
    pub fn new(op: &ModeOperator, dt: f64) -> Self {
        let half_dt = 0.5 * dt;
        let d: Vec<f64> = op.matrix.diag.iter().map(|a| 1.0 + half_dt * a).collect();
        let o: Vec<f64> = op.matrix.off.iter().map(|a| half_dt * a).collect();
        CnPropagator {
            half_dt,
            diag: op.matrix.diag.clone(),
            off: op.matrix.off.clone(),
            factor: TridiagFactor::new(&d, &o),
        }
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.half_dt
    }

    /// `(I - dt/2 A) x`
    fn explicit_half(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut ax = self.diag[i] * x[i];
            if i > 0 {
                ax += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                ax += self.off[i] * x[i + 1];
            }
            out[i] = x[i] - self.half_dt * ax;
        }
    }

    /// `x <- R x`
    pub fn apply_in_place(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.resize(x.len(), 0.0);
        self.explicit_half(x, scratch);
        self.factor.solve_in_place(scratch);
        x.copy_from_slice(scratch);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut s = Vec::new();
        self.apply_in_place(&mut y, &mut s);
        y
    }

    /// Solves `(I + dt/2 A) x = b` in place.
    pub fn implicit_solve(&self, b: &mut [f64]) {
        self.factor.solve_in_place(b);
    }
}

/// Scalar Crank–Nicolson amplification `(1 - dt l/2)/(1 + dt l/2)`.
pub fn cn_factor(lambda: f64, dt: f64) -> f64 {
    (1.0 - 0.5 * dt * lambda) / (1.0 + 0.5 * dt * lambda)
}

/// One step of `u' = -A u + s` with `s` held constant over the step.
pub fn step_crank_nicolson(op: &ModeOperator, state: &[f64], dt: f64, source: &[f64]) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(GrushinError::Evolution(format!("require dt > 0, got {dt}")));
    }
    for (name, v) in [("state", state), ("source", source)] {
        if v.len() != op.dim() {
            return Err(GrushinError::Evolution(format!("{name} has {} entries, expected {}", v.len(), op.dim())));
        }
    }
    let p = CnPropagator::new(op, dt);
    let mut out = vec![0.0; state.len()];
    p.explicit_half(state, &mut out);
    out.iter_mut().zip(source).for_each(|(o, s)| *o += dt * s);
    p.implicit_solve(&mut out);
    Ok(out)
}

/// Smallest step count for which every Crank–Nicolson mode above `2/dt`
/// (amplification close to -1) is damped at least `e^{-40}` more strongly
/// over the horizon than the ground mode; never below `requested`.
pub fn stiff_safe_steps(op: &ModeOperator, lambda_ground: f64, horizon: f64, requested: usize) -> usize {
    let (_, lambda_max) = op.matrix.gershgorin();
    // |r|^{2K} ~ exp(-8 K^2 / (T lambda_max)) for dt lambda_max >> 1
    let k = ((horizon * lambda_max / 8.0) * (2.0 * lambda_ground * horizon + 40.0)).sqrt().ceil() as usize;
    k.max(requested).max(1)
}

/// Time-indexed values of one mode on the interior nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeTrajectory {
    pub n: usize,
    pub times: TimeGrid,
    /// `states[k]` at time `times.time(k)`, `k = 0..=steps`.
    pub states: Vec<Vec<f64>>,
    /// Source applied at each time node, zero off the strip.
    pub control: Option<Vec<Vec<f64>>>,
}

impl ModeTrajectory {
    pub fn terminal(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }
}

pub fn solve_adjoint_mode(op: &ModeOperator, g0: &[f64], tg: TimeGrid) -> Result<ModeTrajectory> {
    if g0.len() != op.dim() {
        return Err(GrushinError::SizeMismatch { module: "evolution", expected: op.dim(), got: g0.len() });
    }
    let p = CnPropagator::new(op, tg.dt);
    let mut states = Vec::with_capacity(tg.steps + 1);
    let mut cur = g0.to_vec();
    let mut scratch = Vec::new();
    states.push(cur.clone());
    for _ in 0..tg.steps {
        p.apply_in_place(&mut cur, &mut scratch);
        states.push(cur.clone());
    }
    Ok(ModeTrajectory { n: op.n, times: tg, states, control: None })
}

/// Terminal state `R^K g0` only.
pub fn free_terminal(p: &CnPropagator, g0: &[f64], steps: usize) -> Vec<f64> {
    let mut cur = g0.to_vec();
    let mut scratch = Vec::new();
    for _ in 0..steps {
        p.apply_in_place(&mut cur, &mut scratch);
    }
    cur
}

/// Controlled mode: `f' = -A f + 1_strip u`. `control[k]` is the control at
/// time node `k`; it must vanish at nodes outside `strip`.
pub fn solve_controlled_mode(
    op: &ModeOperator,
    f0: &[f64],
    control: &[Vec<f64>],
    strip: &[bool],
    tg: TimeGrid,
) -> Result<ModeTrajectory> {
    let nx = op.dim();
    if f0.len() != nx || strip.len() != nx {
        return Err(GrushinError::SizeMismatch { module: "evolution", expected: nx, got: f0.len().min(strip.len()) });
    }
    if control.len() != tg.steps + 1 {
        return Err(GrushinError::SizeMismatch { module: "evolution", expected: tg.steps + 1, got: control.len() });
    }
    for (k, u) in control.iter().enumerate() {
        if u.len() != nx {
            return Err(GrushinError::SizeMismatch { module: "evolution", expected: nx, got: u.len() });
        }
        if let Some(i) = (0..nx).find(|&i| !strip[i] && u[i] != 0.0) {
            return Err(GrushinError::Evolution(format!("control nonzero off the strip at time node {k}, node {i}")));
        }
    }
    let p = CnPropagator::new(op, tg.dt);
    let h = 0.5 * tg.dt;
    let mut states = Vec::with_capacity(tg.steps + 1);
    let mut cur = f0.to_vec();
    let mut scratch = Vec::new();
    states.push(cur.clone());
    for k in 0..tg.steps {
        cur.iter_mut().zip(&control[k]).for_each(|(c, u)| *c += h * u);
        p.apply_in_place(&mut cur, &mut scratch);
        cur.iter_mut().zip(&control[k + 1]).for_each(|(c, u)| *c += h * u);
        states.push(cur.clone());
    }
    Ok(ModeTrajectory { n: op.n, times: tg, states, control: Some(control.to_vec()) })
}

/// `sqrt(2) sin(n pi y)`
pub fn sine_mode(n: usize, y: f64) -> f64 {
    std::f64::consts::SQRT_2 * (n as f64 * std::f64::consts::PI * y).sin()
}

/// Interior y-nodes `j/(ny+1)`, `j = 1..=ny`.
pub fn y_nodes(ny: usize) -> Vec<f64> {
    (1..=ny).map(|j| j as f64 / (ny + 1) as f64).collect()
}

/// Values on interior x-nodes times interior y-nodes, one snapshot per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub times: Vec<f64>,
    pub nx: usize,
    pub ny: usize,
    /// `values[k][i * ny + j]` at `(times[k], x_i, y_j)`.
    pub values: Vec<Vec<f64>>,
    /// Number of y-modes the field was built from (0 for the direct solver).
    pub y_modes: usize,
}

impl Field2D {
    /// Discrete L2 norm of snapshot `k` (`hx hy sum u^2`, traces vanish).
    pub fn norm(&self, k: usize, hx: f64) -> f64 {
        let hy = 1.0 / (self.ny + 1) as f64;
        (hx * hy * self.values[k].iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn terminal(&self) -> &[f64] {
        &self.values[self.values.len() - 1]
    }
}

/// `u(t,x,y) = sum_n u_n(t,x) sqrt(2) sin(n pi y)` with `modes[n-1]` the
/// trajectory of mode `n`, sampled at every time node of the trajectories.
pub fn synthesize_2d(modes: &[ModeTrajectory], ny: usize) -> Result<Field2D> {
    let first = modes.first().ok_or_else(|| GrushinError::Evolution("no modes to synthesize".into()))?;
    if ny < modes.len() {
        return Err(GrushinError::Evolution(format!("ny = {ny} below the number of modes {}", modes.len())));
    }
    let nt = first.states.len();
    let nx = first.states[0].len();
    for (idx, m) in modes.iter().enumerate() {
        if m.n != idx + 1 {
            return Err(GrushinError::Evolution(format!("mode at position {idx} has index {}, expected {}", m.n, idx + 1)));
        }
        if m.states.len() != nt || m.times != first.times {
            return Err(GrushinError::Evolution("mode trajectories use different time grids".into()));
        }
    }
    let ys = y_nodes(ny);
    let basis: Vec<Vec<f64>> = modes.iter().map(|m| ys.iter().map(|&y| sine_mode(m.n, y)).collect()).collect();
    let values = (0..nt)
        .into_par_iter()
        .map(|k| {
            let mut out = vec![0.0; nx * ny];
            for (m, phi) in modes.iter().zip(&basis) {
                let s = &m.states[k];
                for i in 0..nx {
                    let row = &mut out[i * ny..(i + 1) * ny];
                    row.iter_mut().zip(phi).for_each(|(o, p)| *o += s[i] * p);
                }
            }
            out
        })
        .collect();
    Ok(Field2D { times: (0..nt).map(|k| first.times.time(k)).collect(), nx, ny, values, y_modes: modes.len() })
}

/// Mode `n` coefficient of a field snapshot: `hy sum_j u(x_i, y_j) phi_n(y_j)`.
pub fn project_mode(field: &Field2D, k: usize, n: usize) -> Vec<f64> {
    let hy = 1.0 / (field.ny + 1) as f64;
    let ys = y_nodes(field.ny);
    let phi: Vec<f64> = ys.iter().map(|&y| sine_mode(n, y)).collect();
    (0..field.nx)
        .map(|i| hy * field.values[k][i * field.ny..(i + 1) * field.ny].iter().zip(&phi).map(|(u, p)| u * p).sum::<f64>())
        .collect()
}

/// Largest `nx * ny` accepted by [`solve_2d_direct`].
pub const DIRECT_2D_MAX_UNKNOWNS: usize = 16_000;

/// Banded Cholesky factor (lower band stored row-wise).
struct BandCholesky {
    n: usize,
    bw: usize,
    /// `l[i * (bw+1) + (i - j)]` for `j` in `i-bw..=i`.
    l: Vec<f64>,
}

impl BandCholesky {
    /// `entry(i, j)` for `0 <= i - j <= bw`.
    fn new(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = entry(i, j);
                let k0 = j.saturating_sub(bw).max(j0);
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(GrushinError::Evolution(format!("2D system not positive definite at row {i}")));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + self.bw + 1).min(self.n) {
                s -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
    }
}

/// Crank–Nicolson on the full operator `-d_xx - |x|^{2 gamma} d_yy` with
/// five-point differences on `(-1,1) x (0,1)`, `ny` interior y-nodes.
/// `control`, when given, is one snapshot per time node and is multiplied
/// by the strip indicator in x.
pub fn solve_2d_direct(
    cfg: &ProblemConfig,
    ny: usize,
    f0: &[f64],
    control: Option<&[Vec<f64>]>,
) -> Result<Field2D> {
    let nx = cfg.nx;
    let n = nx * ny;
    if n > DIRECT_2D_MAX_UNKNOWNS {
        return Err(GrushinError::Evolution(format!(
            "2D oracle limited to {DIRECT_2D_MAX_UNKNOWNS} unknowns, got {nx} x {ny} = {n}"
        )));
    }
    if f0.len() != n {
        return Err(GrushinError::SizeMismatch { module: "evolution", expected: n, got: f0.len() });
    }
    let tg = cfg.time_grid()?;
    if let Some(c) = control {
        if c.len() != tg.steps + 1 || c.iter().any(|u| u.len() != n) {
            return Err(GrushinError::Evolution("2D control must have one full snapshot per time node".into()));
        }
    }
    let grid: Grid1D = cfg.grid()?;
    let hx2 = grid.h() * grid.h();
    let hy = 1.0 / (ny + 1) as f64;
    let hy2 = hy * hy;
    let wgt: Vec<f64> = grid.interior().iter().map(|x| x.abs().powf(2.0 * cfg.gamma)).collect();
    let strip = grid.strip_mask(cfg.a, cfg.b);
    // L u at (i,j): x-part + weighted y-part, index i*ny + j
    let diag_l = |i: usize| 2.0 / hx2 + 2.0 * wgt[i] / hy2;
    let apply_l = |u: &[f64], out: &mut [f64]| {
        for i in 0..nx {
            for j in 0..ny {
                let p = i * ny + j;
                let mut s = diag_l(i) * u[p];
                if i > 0 {
                    s -= u[p - ny] / hx2;
                }
                if i + 1 < nx {
                    s -= u[p + ny] / hx2;
                }
                if j > 0 {
                    s -= wgt[i] * u[p - 1] / hy2;
                }
                if j + 1 < ny {
                    s -= wgt[i] * u[p + 1] / hy2;
                }
                out[p] = s;
            }
        }
    };
    let half = 0.5 * tg.dt;
    let chol = BandCholesky::new(n, ny, |r, c| {
        let (ir, jr) = (r / ny, r % ny);
        if r == c {
            1.0 + half * diag_l(ir)
        } else if r - c == ny {
            -half / hx2
        } else if r - c == 1 && jr > 0 {
            -half * wgt[ir] / hy2
        } else {
            0.0
        }
    })?;
    let masked = |u: &[f64]| -> Vec<f64> {
        let mut v = u.to_vec();
        for i in 0..nx {
            if !strip[i] {
                v[i * ny..(i + 1) * ny].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        v
    };
    let mut values = Vec::with_capacity(tg.steps + 1);
    let mut cur = f0.to_vec();
    let mut lu = vec![0.0; n];
    values.push(cur.clone());
    for k in 0..tg.steps {
        if let Some(c) = control {
            let s = masked(&c[k]);
            cur.iter_mut().zip(&s).for_each(|(x, s)| *x += half * s);
        }
        apply_l(&cur, &mut lu);
        cur.iter_mut().zip(&lu).for_each(|(x, l)| *x -= half * l);
        chol.solve_in_place(&mut cur);
        if let Some(c) = control {
            let s = masked(&c[k + 1]);
            cur.iter_mut().zip(&s).for_each(|(x, s)| *x += half * s);
        }
        values.push(cur.clone());
    }
    Ok(Field2D { times: (0..=tg.steps).map(|k| tg.time(k)).collect(), nx, ny, values, y_modes: 0 })
}

/// Fewest y-modes `N` with `sum_{n > N} exp(-2 lambda_n T) < 1e-10`, given
/// ground eigenvalues `lambdas[n-1]` (increasing in `n`); the tail past the
/// last entry is bounded by a geometric series with the last ratio.
pub fn y_mode_truncation(lambdas: &[f64], t_min: f64) -> usize {
    let terms: Vec<f64> = lambdas.iter().map(|l| (-2.0 * l * t_min).exp()).collect();
    for cut in 0..terms.len() {
        let tail: f64 = terms[cut..].iter().sum();
        let last = terms[terms.len() - 1];
        let extra = if terms.len() >= 2 {
            let q = (last / terms[terms.len() - 2]).min(0.999);
            last * q / (1.0 - q)
        } else {
            0.0
        };
        if tail + extra < 1e-10 {
            return cut;
        }
    }
    terms.len()
}

/// CSV with columns `t,x,value` (17 significant digits).
pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &ModeTrajectory, grid: &Grid1D) -> Result<()> {
    writeln!(out, "t,x,value")?;
    for (k, s) in traj.states.iter().enumerate() {
        let t = traj.times.time(k);
        for (x, v) in grid.interior().iter().zip(s) {
            writeln!(out, "{t:.16e},{x:.16e},{v:.16e}")?;
        }
    }
    Ok(())
}

/// CSV with columns `t,x,y,value` for the selected snapshots.
pub fn write_field_csv<W: Write>(out: &mut W, field: &Field2D, grid: &Grid1D, snapshots: &[usize]) -> Result<()> {
    writeln!(out, "t,x,y,value")?;
    let ys = y_nodes(field.ny);
    for &k in snapshots {
        let t = field.times[k];
        for (i, x) in grid.interior().iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                writeln!(out, "{t:.16e},{x:.16e},{y:.16e},{:.16e}", field.values[k][i * field.ny + j])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::spectral::{assemble_mode_operator, ground_eigenpair};

    #[test]
    fn zero_in_zero_out() {
        let g = make_grid(51).unwrap();
        let op = assemble_mode_operator(3, 1.0, &g);
        let z = vec![0.0; 51];
        assert!(step_crank_nicolson(&op, &z, 0.01, &z).unwrap().iter().all(|&v| v == 0.0));
        let tr = solve_adjoint_mode(&op, &z, TimeGrid::new(0.5, 10).unwrap()).unwrap();
        assert!(tr.states.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn eigenvector_decays_by_cn_factor() {
        let g = make_grid(199).unwrap();
        let op = ModeOperator::laplacian(&g);
        let p = ground_eigenpair(&op, 1e-15).unwrap();
        let dt = 0.01;
        let next = step_crank_nicolson(&op, &p.v, dt, &vec![0.0; 199]).unwrap();
        let r = cn_factor(p.lambda, dt);
        for (a, b) in next.iter().zip(&p.v) {
            assert!((a - r * b).abs() < 1e-10);
        }
        let exact = cn_factor(std::f64::consts::PI.powi(2) / 4.0, dt);
        assert!((g.dot(&next, &p.v) - exact).abs() < 1e-5);
    }

    #[test]
    fn separable_solution_decay() {
        let g = make_grid(401).unwrap();
        let op = assemble_mode_operator(16, 1.0, &g);
        let p = ground_eigenpair(&op, 1e-15).unwrap();
        let tg = TimeGrid::new(0.1, 400).unwrap();
        let tr = solve_adjoint_mode(&op, &p.v, tg).unwrap();
        let got = g.norm(tr.terminal());
        let want = (-p.lambda * 0.1).exp();
        assert!(((got - want) / want).abs() < 1e-3, "{got} {want}");
    }

    #[test]
    fn band_cholesky_matches_dense_solve() {
        let n = 7;
        let bw = 2;
        let entry = |i: usize, j: usize| if i == j { 4.0 + i as f64 } else if i - j <= bw { -1.0 / (1 + i - j) as f64 } else { 0.0 };
        let ch = BandCholesky::new(n, bw, entry).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let full = |i: usize, j: usize| if i >= j { entry(i, j) } else { entry(j, i) };
        let mut b: Vec<f64> = (0..n)
            .map(|i| (0..n).filter(|&j| i.abs_diff(j) <= bw).map(|j| full(i, j) * x[j]).sum())
            .collect();
        ch.solve_in_place(&mut b);
        for (a, c) in x.iter().zip(&b) {
            assert!((a - c).abs() < 1e-13);
        }
    }

    #[test]
    fn truncation_rule() {
        let l: Vec<f64> = (1..=40).map(|n| 3.0 * n as f64).collect();
        let cut = y_mode_truncation(&l, 1.0);
        let tail: f64 = l[cut..].iter().map(|x| (-2.0 * x).exp()).sum();
        assert!(tail < 1e-10 && cut > 0);
    }
}
