//! Complex tridiagonal systems (Thomas algorithm).
//!
//! Convention: `lower[i] = A[i+1][i]`, `upper[i] = A[i][i+1]`, both of length `n - 1`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// LU factors of a tridiagonal matrix, kept for repeated solves.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<Complex64>,
    /// `lower[i] / pivot[i+1]`, keeping one multiply on the forward-sweep chain.
    lower_scaled: Vec<Complex64>,
    upper_mod: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
}

impl TridiagonalLu {
    pub fn factor(lower: &[Complex64], diag: &[Complex64], upper: &[Complex64]) -> Result<Self> {
        let n = diag.len();
        assert!(n > 0, "empty tridiagonal system");
        assert_eq!(lower.len() + 1, n);
        assert_eq!(upper.len() + 1, n);

        let scale = diag.iter().map(|d| d.norm()).fold(0.0_f64, f64::max).max(1e-300);
        let tiny = scale * 1e-14;

        let mut upper_mod = vec![Complex64::new(0.0, 0.0); n.saturating_sub(1)];
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];

        let mut pivot = diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = diag[i] - lower[i - 1] * upper_mod[i - 1];
            }
            if !(pivot.norm() > tiny) {
                return Err(Error::SingularImplicitFactor { row: i });
            }
            inv_pivot[i] = pivot.inv();
            if i + 1 < n {
                upper_mod[i] = upper[i] * inv_pivot[i];
            }
        }
        let lower_scaled = lower.iter().zip(&inv_pivot[1..]).map(|(l, p)| l * p).collect();
        Ok(Self {
            lower: lower.to_vec(),
            lower_scaled,
            upper_mod,
            inv_pivot,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.upper_mod[i] * next;
        }
    }
}

impl TridiagonalLu {
    /// `x <- A^{-1} T x` for the symmetric tridiagonal `T = (t_diag, t_off)`,
    /// fusing the product into the forward sweep. Returns the new `|x|^2`.
    pub fn solve_applied(&self, t_diag: &[Complex64], t_off: &[Complex64], x: &mut [Complex64], work: &mut [Complex64]) -> f64 {
        let n = self.len();
        assert!(t_diag.len() == n && t_off.len() + 1 == n && x.len() == n && work.len() == n);
        if n == 1 {
            x[0] = t_diag[0] * x[0] * self.inv_pivot[0];
            return x[0].norm_sqr();
        }
        let lower = &self.lower_scaled[..n - 1];
        let upper = &self.upper_mod[..n - 1];
        let inv = &self.inv_pivot[..n];

        let mut prev = (t_diag[0] * x[0] + t_off[0] * x[1]) * inv[0];
        work[0] = prev;
        for i in 1..n - 1 {
            let r = t_off[i - 1] * x[i - 1] + t_diag[i] * x[i] + t_off[i] * x[i + 1];
            prev = r * inv[i] - lower[i - 1] * prev;
            work[i] = prev;
        }
        let r = t_off[n - 2] * x[n - 2] + t_diag[n - 1] * x[n - 1];
        let mut next = r * inv[n - 1] - lower[n - 2] * prev;
        x[n - 1] = next;
        let mut norm = next.norm_sqr();
        for i in (0..n - 1).rev() {
            next = work[i] - upper[i] * next;
            x[i] = next;
            norm += next.norm_sqr();
        }
        norm
    }
}

/// `out = A x` for a tridiagonal `A`.
pub fn tridiagonal_apply(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    x: &[Complex64],
    out: &mut [Complex64],
) {
    let n = diag.len();
    assert_eq!(x.len(), n);
    assert_eq!(out.len(), n);
    for i in 0..n {
        let mut acc = diag[i] * x[i];
        if i > 0 {
            acc += lower[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            acc += upper[i] * x[i + 1];
        }
        out[i] = acc;
    }
}
