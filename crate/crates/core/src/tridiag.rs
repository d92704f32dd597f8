//! Tridiagonal linear algebra: a factor-once Thomas solver and a
//! Sturm-sequence eigensolver for symmetric tridiagonal matrices.

/// LU factorization of a tridiagonal matrix without pivoting.
///
/// Only valid for diagonally dominant or symmetric positive definite
/// matrices, which is all the IMEX stepper ever builds.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    // modified super-diagonal c'_i
    upper: Vec<f64>,
    // reciprocal pivots
    inv_pivot: Vec<f64>,
}

impl TridiagonalLu {
    /// `lower[i]` couples row `i + 1` to column `i`, `upper[i]` couples row
    /// `i` to column `i + 1`. Returns `None` on a zero or non-finite pivot.
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Option<Self> {
        let n = diag.len();
        debug_assert!(lower.len() + 1 == n && upper.len() + 1 == n);
        let mut inv_pivot = vec![0.0; n];
        let mut c = vec![0.0; n.saturating_sub(1)];
        let mut pivot = diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = diag[i] - lower[i - 1] * c[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < n {
                c[i] = upper[i] * inv_pivot[i];
            }
        }
        Some(Self {
            lower: lower.to_vec(),
            upper: c,
            inv_pivot,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Solves in place: `rhs` becomes the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

/// Symmetric tridiagonal matrix given by its diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length must be n - 1");
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
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
        y
    }

    /// Gershgorin interval containing every eigenvalue.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
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

    pub fn max_abs_entry(&self) -> f64 {
        self.diag.iter().chain(&self.off).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.len();
        let tiny = f64::MIN_POSITIVE.sqrt() * (1.0 + self.max_abs_entry());
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..n {
            if i > 0 {
                let b = self.off[i - 1];
                q = self.diag[i] - x - b * b / q;
            }
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection to roughly
    /// machine precision.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len());
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        lo -= 1e-12 * scale;
        hi += 1e-12 * scale;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for an accurate eigenvalue estimate by inverse
    /// iteration. Returns the unit-norm vector and the residual
    /// `‖T v - λ v‖`.
    pub fn eigenvector(&self, lambda: f64) -> (Vec<f64>, f64) {
        let n = self.len();
        let shift = lambda + 1e3 * f64::EPSILON * self.max_abs_entry().max(1.0);
        let lower: Vec<f64> = self.off.clone();
        let diag: Vec<f64> = self.diag.iter().map(|d| d - shift).collect();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i as f64) * 0.7).sin()).collect();
        let mut residual = f64::INFINITY;
        // shifted system is nonsingular but can be indefinite, so solve with
        // partial pivoting through a dense-band fallback when needed
        for _ in 0..6 {
            v = solve_tridiagonal_pivoted(&lower, &diag, &self.off, &v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let tv = self.mul_vec(&v);
            residual = tv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
        }
        (v, residual)
    }
}

/// Gaussian elimination with partial pivoting for a general tridiagonal
/// system (second super-diagonal fill-in is tracked explicitly).
pub fn solve_tridiagonal_pivoted(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut u1 = upper.to_vec();
    u1.push(0.0);
    let mut u2 = vec![0.0; n];
    let mut l = lower.to_vec();
    let mut b = rhs.to_vec();
    for i in 0..n.saturating_sub(1) {
        if l[i].abs() > d[i].abs() {
            // swap rows i and i + 1
            std::mem::swap(&mut d[i], &mut l[i]);
            let row_i1_u1 = if i + 1 < n { d[i + 1] } else { 0.0 };
            let row_i1_u2 = if i + 1 < n - 1 { u1[i + 1] } else { 0.0 };
            // row i: (d[i], u1[i], u2[i]); row i+1: (l[i], d[i+1], u1[i+1])
            let (a1, a2) = (u1[i], u2[i]);
            u1[i] = row_i1_u1;
            u2[i] = row_i1_u2;
            d[i + 1] = a1;
            if i + 1 < n - 1 {
                u1[i + 1] = a2;
            }
            b.swap(i, i + 1);
        }
        if d[i] == 0.0 {
            d[i] = f64::EPSILON;
        }
        let m = l[i] / d[i];
        d[i + 1] -= m * u1[i];
        if i + 1 < n - 1 {
            u1[i + 1] -= m * u2[i];
        }
        b[i + 1] -= m * b[i];
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = f64::EPSILON;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / d[i];
    }
    x
}
