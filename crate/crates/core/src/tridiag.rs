//! Symmetric tridiagonal kernels: Sturm counts, bisection brackets, a
//! prefactored solver for diagonally dominant systems and a pivoted solver
//! for shifted (possibly indefinite) systems.

/// Symmetric tridiagonal matrix stored as its diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        debug_assert_eq!(off.len() + 1, diag.len());
        SymTridiag { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `sigma` (Sturm sequence via the
    /// LDL^T pivots of `T - sigma I`).
    pub fn count_below(&self, sigma: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - sigma;
        for i in 0..self.dim() {
            if i > 0 {
                q = self.diag[i] - sigma - self.off[i - 1] * self.off[i - 1] / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Bracket `[lo, hi]` around the `k`-th smallest eigenvalue (0-based),
    /// bisected until `hi - lo <= rel_tol * max(|lo|,|hi|)` or the interval
    /// can no longer be split in floating point.
    pub fn eigen_bracket(&self, k: usize, rel_tol: f64) -> (f64, f64) {
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-12 * (hi.abs().max(lo.abs()) + 1.0);
        lo -= pad;
        hi += pad;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if hi - lo <= rel_tol * lo.abs().max(hi.abs()) {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, hi)
    }

    /// Solves `(T - sigma I) x = rhs` by Gaussian elimination with partial
    /// pivoting. Returns `None` on an exactly singular pivot.
    pub fn solve_shifted(&self, sigma: f64, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        // Row i of the factor holds (d, du, du2) after pivoting.
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - sigma).collect();
        let mut dl: Vec<f64> = self.off.clone();
        let mut du: Vec<f64> = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut piv = vec![false; n.saturating_sub(1)];
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return None;
                }
                let m = dl[i] / d[i];
                dl[i] = m;
                d[i + 1] -= m * du[i];
            } else {
                piv[i] = true;
                let m = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = m;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - m * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -m * du[i + 1];
                }
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            return None;
        }
        for i in 0..n.saturating_sub(1) {
            if piv[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= dl[i] * b[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= du[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= du2[i] * x[i + 2];
            }
            x[i] = s / d[i];
        }
        Some(x)
    }
}

/// LU factors of a diagonally dominant tridiagonal matrix (no pivoting),
/// reused across many right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagFactor {
    /// Multipliers of the forward sweep.
    lower: Vec<f64>,
    /// Pivots.
    pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagFactor {
    /// Factors `diag + off` (symmetric) with the Thomas algorithm.
    pub fn new(diag: &[f64], off: &[f64]) -> Self {
        let n = diag.len();
        let mut pivot = vec![0.0; n];
        let mut lower = vec![0.0; n.saturating_sub(1)];
        pivot[0] = diag[0];
        for i in 1..n {
            lower[i - 1] = off[i - 1] / pivot[i - 1];
            pivot[i] = diag[i] - lower[i - 1] * off[i - 1];
        }
        TridiagFactor { lower, pivot, upper: off.to_vec() }
    }

    pub fn min_pivot(&self) -> f64 {
        self.pivot.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Solves in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 1..n {
            b[i] -= self.lower[i - 1] * b[i - 1];
        }
        b[n - 1] /= self.pivot[n - 1];
        for i in (0..n - 1).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1]) / self.pivot[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn sturm_count_matches_known_spectrum() {
        // eigenvalues 2 - 2cos(j pi/(n+1))
        let t = laplacian(9);
        let eig: Vec<f64> = (1..=9).map(|j| 2.0 - 2.0 * (j as f64 * std::f64::consts::PI / 10.0).cos()).collect();
        for (k, &l) in eig.iter().enumerate() {
            assert_eq!(t.count_below(l - 1e-9), k);
            assert_eq!(t.count_below(l + 1e-9), k + 1);
            let (lo, hi) = t.eigen_bracket(k, 1e-15);
            assert!(lo - 1e-14 <= l && l <= hi + 1e-14, "{k}: {lo} {hi} {l}");
        }
    }

    #[test]
    fn pivoted_solve_recovers_solution() {
        let t = SymTridiag::new(vec![0.1, -3.0, 2.0, 0.5, 1.0], vec![1.0, 2.0, -1.0, 4.0]);
        let x = vec![1.0, -2.0, 0.5, 3.0, -1.0];
        for sigma in [0.0, 0.37, -1.2] {
            let shifted = SymTridiag::new(t.diag.iter().map(|d| d - sigma).collect(), t.off.clone());
            let b = shifted.apply(&x);
            let y = t.solve_shifted(sigma, &b).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn thomas_factor_solves() {
        let t = SymTridiag::new(vec![4.0, 5.0, 6.0, 4.5], vec![-1.0, -2.0, 0.5]);
        let f = TridiagFactor::new(&t.diag, &t.off);
        let x = vec![0.3, -1.0, 2.0, 0.25];
        let mut b = t.apply(&x);
        f.solve_in_place(&mut b);
        for (a, c) in x.iter().zip(&b) {
            assert!((a - c).abs() < 1e-14);
        }
    }
}
