//! Finite-difference mode operators `-d^2/dx^2 + (n pi)^2 |x|^{2 gamma}` on
//! (-1,1) with Dirichlet conditions, and their lowest eigenpairs.
//!
//! Eigenvalues come from Sturm-sequence bisection, so every returned value
//! carries a bracket; eigenvectors from shifted inverse iteration. The
//! ground state is computed with a shift strictly below the bracket, which
//! makes the shifted matrix a nonsingular M-matrix: the Thomas sweep then
//! only adds positive quantities and the eigenvector comes out entrywise
//! positive without cancellation.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrushinError, Result};
use crate::grid::{linear_fit, log_sum_exp, Grid1D};
use crate::tridiag::{SymTridiag, TridiagFactor};

/// Minimum number of nodes across the ground-state width `(n pi)^{-1/(1+gamma)}`.
pub const NODES_PER_WIDTH: f64 = 20.0;

/// Discretized `A_{n,gamma}` on the interior nodes of a grid.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub n: usize,
    pub gamma: f64,
    /// Coefficient of `|x|^{2 gamma}`; `(n pi)^2` unless built with
    /// [`ModeOperator::with_coupling`].
    pub coupling: f64,
    pub grid: Grid1D,
    pub matrix: SymTridiag,
}

/// Standard centred second difference plus the sampled potential.
pub fn assemble_mode_operator(n: usize, gamma: f64, grid: &Grid1D) -> ModeOperator {
    let c = (n as f64 * PI).powi(2);
    ModeOperator::with_coupling(n, gamma, grid, c)
}

impl ModeOperator {
    pub fn with_coupling(n: usize, gamma: f64, grid: &Grid1D, coupling: f64) -> Self {
        let h2 = grid.h() * grid.h();
        let diag = grid
            .interior()
            .iter()
            .map(|&x| 2.0 / h2 + coupling * x.abs().powf(2.0 * gamma))
            .collect();
        let off = vec![-1.0 / h2; grid.nx() - 1];
        ModeOperator { n, gamma, coupling, grid: grid.clone(), matrix: SymTridiag::new(diag, off) }
    }

    /// Dirichlet Laplacian (zero potential) on the same grid.
    pub fn laplacian(grid: &Grid1D) -> Self {
        Self::with_coupling(0, 1.0, grid, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Potential value at interior node `i`.
    pub fn potential(&self, i: usize) -> f64 {
        self.coupling * self.grid.interior()[i].abs().powf(2.0 * self.gamma)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.apply(v)
    }

    /// Rayleigh quotient in the trapezoid inner product.
    pub fn rayleigh(&self, v: &[f64]) -> f64 {
        let av = self.apply(v);
        self.grid.dot(&av, v) / self.grid.dot(v, v)
    }

    /// Relative residual `||A v - lambda v|| / ||v||`.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let av = self.apply(v);
        let r: Vec<f64> = av.iter().zip(v).map(|(a, b)| a - lambda * b).collect();
        self.grid.norm(&r) / self.grid.norm(v)
    }
}

/// Ground (or excited) eigenvalue with a normalized eigenvector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenPair {
    pub n: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// Values at the interior nodes; `||v|| = 1` in the trapezoid norm.
    pub v: Vec<f64>,
    pub residual: f64,
    /// Sturm bisection bracket containing `lambda`.
    pub bracket: (f64, f64),
}

const MAX_RESTARTS: usize = 6;
const MAX_INVERSE_STEPS: usize = 60;
const EXCITED_STEPS: usize = 12;

/// Smallest eigenvalue by bisection to relative width `tol`, eigenvector by
/// inverse iteration shifted just below the bracket.
pub fn ground_eigenpair(op: &ModeOperator, tol: f64) -> Result<EigenPair> {
    let (lo, hi) = op.matrix.eigen_bracket(0, tol);
    let lambda = 0.5 * (lo + hi);
    let grid = &op.grid;
    let mut gap = (4.0 * (hi - lo)).max(1e-13 * lambda.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..MAX_RESTARTS {
        let sigma = lo - gap;
        let diag: Vec<f64> = op.matrix.diag.iter().map(|d| d - sigma).collect();
        let factor = TridiagFactor::new(&diag, &op.matrix.off);
        if !(factor.min_pivot() > 0.0) {
            gap *= 16.0;
            continue;
        }
        let mut v = vec![1.0; op.dim()];
        normalize(grid, &mut v);
        let mut converged = false;
        for _ in 0..MAX_INVERSE_STEPS {
            let mut w = v.clone();
            factor.solve_in_place(&mut w);
            normalize(grid, &mut w);
            // entrywise relative change: the exponentially small tail
            // converges only after the bulk has
            let change = w
                .iter()
                .zip(&v)
                .filter(|(a, _)| a.abs() > 1e-290)
                .map(|(a, b)| ((a - b) / a).abs())
                .fold(0.0, f64::max);
            v = w;
            if change < 1e-12 {
                converged = true;
                break;
            }
        }
        if !converged {
            gap *= 16.0;
            continue;
        }
        if v[grid.center()] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        if let Some(i) = v.iter().position(|&x| !(x > 0.0)) {
            return Err(GrushinError::Spectral(format!(
                "ground eigenvector not strictly positive at node {i} (n={}, gamma={})",
                op.n, op.gamma
            )));
        }
        let residual = op.residual(lambda, &v);
        return Ok(EigenPair { n: op.n, gamma: op.gamma, lambda, v, residual, bracket: (lo, hi) });
    }
    Err(GrushinError::Spectral(format!(
        "inverse iteration failed after {MAX_RESTARTS} restarts (n={}, gamma={})",
        op.n, op.gamma
    )))
}

fn normalize(grid: &Grid1D, v: &mut [f64]) {
    let s = grid.norm(v);
    v.iter_mut().for_each(|x| *x /= s);
}

/// The `k` smallest eigenpairs, orthonormal in the trapezoid inner product.
pub fn first_k_eigenpairs(op: &ModeOperator, k: usize, tol: f64) -> Result<Vec<EigenPair>> {
    if k == 0 || k >= op.dim() {
        return Err(GrushinError::Spectral(format!("need 0 < k < {}, got {k}", op.dim())));
    }
    let grid = &op.grid;
    let mut out: Vec<EigenPair> = Vec::with_capacity(k);
    for j in 0..k {
        if j == 0 {
            out.push(ground_eigenpair(op, tol)?);
            continue;
        }
        let (lo, hi) = op.matrix.eigen_bracket(j, tol);
        let lambda = 0.5 * (lo + hi);
        let sigma = lo - (4.0 * (hi - lo)).max(1e-13 * lambda.abs());
        // deterministic start with components on every mode
        let mut v: Vec<f64> = (0..op.dim()).map(|i| 1.0 + 0.1 * ((i * 7919) % 97) as f64 / 97.0).collect();
        for _ in 0..EXCITED_STEPS {
            let mut w = op
                .matrix
                .solve_shifted(sigma, &v)
                .ok_or_else(|| GrushinError::Spectral(format!("singular shifted solve for eigenpair {j}")))?;
            orthogonalize(grid, &mut w, &out);
            normalize(grid, &mut w);
            v = w;
        }
        let mut worst = max_overlap(grid, &v, &out);
        if worst > 1e-8 {
            orthogonalize(grid, &mut v, &out);
            normalize(grid, &mut v);
            worst = max_overlap(grid, &v, &out);
            if worst > 1e-8 {
                return Err(GrushinError::Spectral(format!(
                    "eigenvector {j} lost orthogonality ({worst:.2e}) after re-orthogonalization"
                )));
            }
        }
        // sign: positive slope at the left wall
        if v[0] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        if lambda <= out[j - 1].lambda {
            return Err(GrushinError::Spectral(format!("eigenvalues not strictly increasing at index {j}")));
        }
        let residual = op.residual(lambda, &v);
        out.push(EigenPair { n: op.n, gamma: op.gamma, lambda, v, residual, bracket: (lo, hi) });
    }
    Ok(out)
}

fn orthogonalize(grid: &Grid1D, w: &mut [f64], basis: &[EigenPair]) {
    for _ in 0..2 {
        for p in basis {
            let c = grid.dot(w, &p.v);
            w.iter_mut().zip(&p.v).for_each(|(a, b)| *a -= c * b);
        }
    }
}

fn max_overlap(grid: &Grid1D, v: &[f64], basis: &[EigenPair]) -> f64 {
    basis.iter().map(|p| grid.dot(v, &p.v).abs()).fold(0.0, f64::max)
}

/// Natural logarithm of the normalized ground state at every interior node,
/// from the eigenvalue alone.
///
/// The eigen-equation is run as a three-term recurrence inward from the
/// right wall (the growing direction inside the forbidden region), then
/// mirrored by evenness. This stays finite where the tail of `v` underflows.
pub fn log_ground_profile(op: &ModeOperator, lambda: f64) -> Result<Vec<f64>> {
    let nx = op.dim();
    let c = op.grid.center();
    let h2 = op.grid.h() * op.grid.h();
    let mut logv = vec![0.0; nx];
    // ratio r_i = v_{i-1} / v_i
    let mut r = h2 * (op.matrix.diag[nx - 1] - lambda);
    logv[nx - 1] = 0.0;
    let mut i = nx - 1;
    while i > c {
        if !(r > 0.0) {
            return Err(GrushinError::Spectral(format!(
                "log profile: non-positive ratio at node {i} (n={}, gamma={})",
                op.n, op.gamma
            )));
        }
        logv[i - 1] = logv[i] + r.ln();
        i -= 1;
        r = h2 * (op.matrix.diag[i] - lambda) - 1.0 / r;
    }
    for j in 0..c {
        logv[j] = logv[op.grid.mirror(j)];
    }
    let log_mass = op.grid.h().ln() + log_sum_exp(logv.iter().map(|l| 2.0 * l));
    logv.iter_mut().for_each(|l| *l -= 0.5 * log_mass);
    Ok(logv)
}

/// Power-law fit of the ground eigenvalue against `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFit {
    pub gamma: f64,
    pub samples: Vec<(usize, f64)>,
    pub exponent_hat: f64,
    /// `min lambda / n^{2/(1+gamma)}` over the samples.
    pub c_lower_hat: f64,
    /// `max lambda / n^{2/(1+gamma)}` over the samples.
    pub c_upper_hat: f64,
}

/// Width of the ground state, `(n pi)^{-1/(1+gamma)}`.
pub fn ground_width(n: usize, gamma: f64) -> f64 {
    (n as f64 * PI).powf(-1.0 / (1.0 + gamma))
}

/// Smallest odd `nx` putting [`NODES_PER_WIDTH`] nodes across the ground state.
pub fn required_nx(n: usize, gamma: f64) -> usize {
    let cells = (2.0 * NODES_PER_WIDTH / ground_width(n, gamma)).ceil() as usize;
    let nx = cells.saturating_sub(1).max(3);
    if nx % 2 == 0 {
        nx + 1
    } else {
        nx
    }
}

pub fn check_resolution(n: usize, gamma: f64, grid: &Grid1D) -> Result<()> {
    if ground_width(n, gamma) / grid.h() < NODES_PER_WIDTH {
        return Err(GrushinError::UnderResolved { n, gamma, nx: grid.nx(), required_nx: required_nx(n, gamma) });
    }
    Ok(())
}

/// Bisection tolerance used by the sweeps.
pub const SWEEP_TOL: f64 = 1e-13;

/// Ground eigenvalues over `n_list` and the fitted exponent of `lambda ~ n^p`.
pub fn eigen_scaling_sweep(gamma: f64, n_list: &[usize], grid: &Grid1D) -> Result<ScalingFit> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GrushinError::Spectral("n_list must be increasing with at least two entries".into()));
    }
    check_resolution(*n_list.last().unwrap(), gamma, grid)?;
    let samples: Vec<(usize, f64)> = n_list
        .par_iter()
        .map(|&n| {
            let op = assemble_mode_operator(n, gamma, grid);
            let (lo, hi) = op.matrix.eigen_bracket(0, SWEEP_TOL);
            (n, 0.5 * (lo + hi))
        })
        .collect();
    let lx: Vec<f64> = samples.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ly: Vec<f64> = samples.iter().map(|&(_, l)| l.ln()).collect();
    let (exponent_hat, _) = linear_fit(&lx, &ly);
    let p = 2.0 / (1.0 + gamma);
    let ratios: Vec<f64> = samples.iter().map(|&(n, l)| l / (n as f64).powf(p)).collect();
    Ok(ScalingFit {
        gamma,
        samples,
        exponent_hat,
        c_lower_hat: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        c_upper_hat: ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, richardson_pair};

    #[test]
    fn potential_entries() {
        let g = make_grid(3).unwrap();
        let op = assemble_mode_operator(1, 1.0, &g);
        assert!((op.potential(2) - PI * PI * 0.25).abs() < 1e-12);
        assert_eq!(op.potential(1), 0.0);
        let op2 = assemble_mode_operator(2, 2.0, &g);
        assert!((op2.potential(0) - 4.0 * PI * PI * 0.0625).abs() < 1e-12);
        assert!((op2.potential(0) - 2.467_401_1).abs() < 1e-6);
    }

    #[test]
    fn operator_structure() {
        let g = make_grid(21).unwrap();
        let op = assemble_mode_operator(3, 0.7, &g);
        let h2 = g.h() * g.h();
        assert!(op.matrix.off.iter().all(|&e| e == -1.0 / h2));
        for i in 0..op.dim() {
            assert!(op.matrix.diag[i] >= 2.0 / h2);
            assert_eq!(op.matrix.diag[i], op.matrix.diag[g.mirror(i)]);
        }
    }

    #[test]
    fn laplacian_ground_state_richardson() {
        let coarse = ground_eigenpair(&ModeOperator::laplacian(&make_grid(199).unwrap()), 1e-15).unwrap();
        let fine = ground_eigenpair(&ModeOperator::laplacian(&make_grid(399).unwrap()), 1e-15).unwrap();
        let l = richardson_pair(coarse.lambda, fine.lambda, 2).unwrap();
        let exact = PI * PI / 4.0;
        assert!(((l - exact) / exact).abs() < 1e-8, "{l}");
    }

    #[test]
    fn first_k_of_laplacian() {
        let pairs = |nx| first_k_eigenpairs(&ModeOperator::laplacian(&make_grid(nx).unwrap()), 3, 1e-15).unwrap();
        let (c, f) = (pairs(199), pairs(399));
        for j in 0..3 {
            let l = richardson_pair(c[j].lambda, f[j].lambda, 2).unwrap();
            let exact = ((j + 1) as f64 * PI / 2.0).powi(2);
            assert!(((l - exact) / exact).abs() < 1e-6, "j={j}: {l}");
        }
        let g = make_grid(399).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = g.dot(&f[i].v, &f[j].v);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn excited_state_strictly_above() {
        let g = make_grid(801).unwrap();
        let op = assemble_mode_operator(16, 1.0, &g);
        let p = first_k_eigenpairs(&op, 2, 1e-14).unwrap();
        assert!(p[1].lambda > p[0].lambda);
    }

    #[test]
    fn resolution_refusal_names_required_nx() {
        let g = make_grid(101).unwrap();
        let err = eigen_scaling_sweep(0.5, &[16, 256], &g).unwrap_err();
        match err {
            GrushinError::UnderResolved { required_nx, .. } => {
                assert!(required_nx > 101);
                let g2 = make_grid(required_nx).unwrap();
                check_resolution(256, 0.5, &g2).unwrap();
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log_profile_matches_inverse_iteration() {
        let g = make_grid(1201).unwrap();
        for (n, gamma) in [(8, 1.0), (32, 2.0), (16, 0.5)] {
            let op = assemble_mode_operator(n, gamma, &g);
            let p = ground_eigenpair(&op, 1e-15).unwrap();
            let lv = log_ground_profile(&op, p.lambda).unwrap();
            for i in (0..g.nx()).step_by(37) {
                if p.v[i] > 1e-200 {
                    assert!((lv[i] - p.v[i].ln()).abs() < 1e-6, "n={n} i={i}: {} vs {}", lv[i], p.v[i].ln());
                }
            }
        }
    }
}
