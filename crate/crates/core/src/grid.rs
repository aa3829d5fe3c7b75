//! Problem configuration, uniform grids on (-1,1), quadrature and small
//! numeric helpers shared by every other module.
//!
//! Interior vectors (one entry per interior node) are the working currency
//! of the solvers. Because the Dirichlet traces vanish, the trapezoid rule on
//! such a vector reduces to `h * sum(v_i^2)`; [`Grid1D::dot`] is the matching
//! inner product and every operator in the crate is symmetric with respect
//! to it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrushinError, Result};

/// The identity of an experiment: degeneracy exponent, control strip,
/// Carleman strip, horizon and discretization sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub a_prime: f64,
    pub b_prime: f64,
    /// Time horizon `T`.
    pub horizon: f64,
    pub nx: usize,
    pub nt: usize,
    pub n_max: usize,
}

impl ProblemConfig {
    /// Builds a config with the default Carleman strip
    /// `a' = (2a+b)/3`, `b' = (a+2b)/3` and validates it.
    pub fn new(gamma: f64, a: f64, b: f64, horizon: f64, nx: usize, nt: usize, n_max: usize) -> Result<Self> {
        let cfg = ProblemConfig {
            gamma,
            a,
            b,
            a_prime: (2.0 * a + b) / 3.0,
            b_prime: (a + 2.0 * b) / 3.0,
            horizon,
            nx,
            nt,
            n_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(GrushinError::Config(msg));
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return fail("require gamma > 0".into());
        }
        if !(self.a > 0.0) {
            return fail("require a > 0".into());
        }
        if !(self.a < self.b) {
            return fail("require a < b".into());
        }
        if !(self.b < 1.0) {
            return fail("require b < 1".into());
        }
        if !(self.a < self.a_prime) {
            return fail("require a < a_prime".into());
        }
        if !(self.a_prime < self.b_prime) {
            return fail("require a_prime < b_prime".into());
        }
        if !(self.b_prime < self.b) {
            return fail("require b_prime < b".into());
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return fail("require T > 0".into());
        }
        if self.nx < 3 {
            return fail("require nx >= 3".into());
        }
        if self.nx % 2 == 0 {
            return fail("require nx odd (grid must place a node at x=0)".into());
        }
        if self.nt < 1 {
            return fail("require nt >= 1".into());
        }
        if self.n_max < 1 {
            return fail("require n_max >= 1".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D> {
        make_grid(self.nx)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.nt)
    }

    /// Same experiment with a different exponent.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        ProblemConfig { gamma, ..self.clone() }
    }

    pub fn with_horizon(&self, horizon: f64, nt: usize) -> Self {
        ProblemConfig { horizon, nt, ..self.clone() }
    }
}

/// Uniform grid on [-1,1] with `nx` interior nodes; `nx` is odd so that
/// x = 0 is a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    nodes: Vec<f64>,
    h: f64,
}

/// Uniform symmetric grid with `nx` interior nodes plus both endpoints.
pub fn make_grid(nx: usize) -> Result<Grid1D> {
    if nx < 3 {
        return Err(GrushinError::Grid(format!("need at least 3 interior nodes, got {nx}")));
    }
    if nx % 2 == 0 {
        return Err(GrushinError::Grid("grid must place a node at x=0".into()));
    }
    let cells = nx + 1;
    let h = 2.0 / cells as f64;
    let half = cells / 2;
    // Built from integer offsets about the centre so that symmetry and the
    // node at zero are exact in floating point.
    let nodes = (0..=cells)
        .map(|i| {
            let k = i as i64 - half as i64;
            if k == -(half as i64) {
                -1.0
            } else if k == half as i64 {
                1.0
            } else {
                k as f64 * h
            }
        })
        .collect();
    Ok(Grid1D { nodes, h })
}

impl Grid1D {
    /// All nodes including the endpoints.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn interior(&self) -> &[f64] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of interior nodes.
    pub fn nx(&self) -> usize {
        self.nodes.len() - 2
    }

    /// Interior index of the node x = 0.
    pub fn center(&self) -> usize {
        self.nx() / 2
    }

    /// Mirror image of an interior index about x = 0.
    pub fn mirror(&self, i: usize) -> usize {
        self.nx() - 1 - i
    }

    /// Trapezoid inner product of two interior vectors (zero Dirichlet traces).
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.dot(v, v).sqrt()
    }

    /// Interior mask of the closed strip [lo, hi]; nodes exactly on an end
    /// are included.
    pub fn strip_mask(&self, lo: f64, hi: f64) -> Vec<bool> {
        let tol = 1e-12 * self.h;
        self.interior().iter().map(|&x| x >= lo - tol && x <= hi + tol).collect()
    }

    /// Integral over [lo, hi] of the piecewise-linear interpolant of an
    /// interior vector extended by zero at the endpoints.
    pub fn integrate_interval(&self, values: &[f64], lo: f64, hi: f64) -> f64 {
        debug_assert_eq!(values.len(), self.nx());
        self.interval_weights(lo, hi).iter().map(|&(i, w)| w * values[i]).sum()
    }

    /// Quadrature weights `(interior index, weight)` reproducing
    /// [`Grid1D::integrate_interval`].
    pub fn interval_weights(&self, lo: f64, hi: f64) -> Vec<(usize, f64)> {
        let lo = lo.max(-1.0);
        let hi = hi.min(1.0);
        let mut w = vec![0.0; self.nodes.len()];
        if hi > lo {
            for i in 0..self.nodes.len() - 1 {
                let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
                let l = lo.max(x0);
                let r = hi.min(x1);
                if r <= l {
                    continue;
                }
                // exact integral of the linear interpolant over [l, r]
                let (sl, sr) = ((l - x0) / (x1 - x0), (r - x0) / (x1 - x0));
                let len = r - l;
                let mid = 0.5 * (sl + sr);
                w[i] += len * (1.0 - mid);
                w[i + 1] += len * mid;
            }
        }
        let last = self.nodes.len() - 1;
        w.iter()
            .enumerate()
            .filter(|&(i, &v)| i != 0 && i != last && v != 0.0)
            .map(|(i, &v)| (i - 1, v))
            .collect()
    }

    /// Index of the interior node closest to `x`.
    pub fn nearest_interior(&self, x: f64) -> usize {
        let i = ((x + 1.0) / self.h).round() as isize - 1;
        i.clamp(0, self.nx() as isize - 1) as usize
    }
}

/// Trapezoid approximation of the L2(-1,1) norm of a vector given on every
/// node of `grid` (endpoints included).
pub fn l2_norm(values: &[f64], grid: &Grid1D) -> Result<f64> {
    if values.len() != grid.nodes.len() {
        return Err(GrushinError::SizeMismatch {
            module: "core",
            expected: grid.nodes.len(),
            got: values.len(),
        });
    }
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().map(|v| v * v).sum();
    let ends = 0.5 * (values[0] * values[0] + values[n - 1] * values[n - 1]);
    Ok((grid.h * (inner + ends)).sqrt())
}

/// One Richardson step for a scheme of the given order when the fine value
/// used half the mesh width of the coarse one.
pub fn richardson_pair(coarse_value: f64, fine_value: f64, order: u32) -> Result<f64> {
    if order == 0 {
        return Err(GrushinError::Grid("richardson order must be positive".into()));
    }
    let f = 2f64.powi(order as i32);
    Ok((f * fine_value - coarse_value) / (f - 1.0))
}

/// Uniform time grid; `dt` is derived so that `steps * dt == T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub steps: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(GrushinError::Grid(format!(
                "time grid needs T > 0 and steps >= 1 (T={horizon}, steps={steps})"
            )));
        }
        Ok(TimeGrid { steps, dt: horizon / steps as f64, horizon })
    }

    /// Time of snapshot `k` (k = 0..=steps).
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    /// Trapezoid weight of snapshot `k` (dt, halved at both ends).
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }
}

/// Hat function `(1 - k|x|)^+` sampled on every node of the grid.
pub fn hat_function(grid: &Grid1D, k: f64) -> Vec<f64> {
    grid.nodes().iter().map(|&x| (1.0 - k * x.abs()).max(0.0)).collect()
}

/// Ordinary least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `log(sum(exp(v)))` without overflow.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Uniform values in `[-1, 1]` from a ChaCha stream keyed by `(seed, stream)`.
/// Identical arguments give bit-identical output on every platform.
pub fn seeded_vector(len: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_interior_nodes() {
        let g = make_grid(3).unwrap();
        assert_eq!(g.nodes(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.h(), 0.5);
    }

    #[test]
    fn five_interior_nodes() {
        let g = make_grid(5).unwrap();
        assert!((g.h() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.interior()[2], 0.0);
    }

    #[test]
    fn even_nx_rejected() {
        let err = make_grid(4).unwrap_err();
        assert!(err.to_string().contains("grid must place a node at x=0"));
        assert!(make_grid(1).is_err());
    }

    #[test]
    fn grid_is_symmetric() {
        let g = make_grid(401).unwrap();
        let n = g.nodes().len();
        for i in 0..n {
            assert_eq!(g.nodes()[i], -g.nodes()[n - 1 - i]);
        }
    }

    #[test]
    fn norm_of_constant_and_zero() {
        let g = make_grid(11).unwrap();
        let ones = vec![1.0; g.nodes().len()];
        assert!((l2_norm(&ones, &g).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let zeros = vec![0.0; g.nodes().len()];
        assert_eq!(l2_norm(&zeros, &g).unwrap(), 0.0);
    }

    #[test]
    fn norm_of_identity_function() {
        let g = make_grid(401).unwrap();
        let v: Vec<f64> = g.nodes().to_vec();
        assert!((l2_norm(&v, &g).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn norm_size_mismatch() {
        let g = make_grid(5).unwrap();
        assert!(matches!(l2_norm(&[1.0, 2.0], &g), Err(GrushinError::SizeMismatch { .. })));
    }

    #[test]
    fn hat_function_mass() {
        // 1/k a multiple of h: the hat is piecewise linear on the grid and its
        // square piecewise quadratic, so trapezoid is O(h^2).
        let g = make_grid(799).unwrap();
        for k in [2.0, 4.0, 5.0] {
            let phi = hat_function(&g, k);
            let m = l2_norm(&phi, &g).unwrap().powi(2);
            let exact = 2.0 / (3.0 * k);
            assert!((m - exact).abs() < 2.0 * g.h() * g.h() * k, "k={k}: {m} vs {exact}");
        }
    }

    #[test]
    fn richardson_examples() {
        assert_eq!(richardson_pair(1.0, 1.0, 2).unwrap(), 1.0);
        assert!((richardson_pair(2.4, 2.45, 2).unwrap() - 2.466_666_666_666_667).abs() < 1e-12);
        assert!(richardson_pair(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn time_grid_endpoint_exact() {
        let tg = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(tg.time(7), 0.3);
        assert!((tg.dt * 7.0 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn config_rules() {
        let ok = ProblemConfig::new(1.0, 0.3, 0.8, 1.0, 2001, 2000, 256).unwrap();
        assert!(ok.a < ok.a_prime && ok.a_prime < ok.b_prime && ok.b_prime < ok.b);
        let e = ProblemConfig::new(1.0, 0.8, 0.3, 1.0, 11, 10, 4).unwrap_err();
        assert!(e.to_string().contains("require a < b"));
        let e = ProblemConfig::new(0.0, 0.3, 0.8, 1.0, 11, 10, 4).unwrap_err();
        assert!(e.to_string().contains("require gamma > 0"));
        assert!(ProblemConfig::new(1.0, 0.3, 0.8, 1.0, 10, 10, 4).is_err());
    }

    #[test]
    fn interval_integral_of_linear_interpolant() {
        let g = make_grid(9).unwrap();
        let ones = vec![1.0; g.nx()];
        // exact on [-0.8, 0.8] (all interior), partial cells at both ends
        assert!((g.integrate_interval(&ones, -0.8, 0.8) - 1.6).abs() < 1e-14);
        assert!((g.integrate_interval(&ones, 0.13, 0.57) - 0.44).abs() < 1e-14);
    }
}
