use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PhysicalConstants;
use crate::propagator::Propagator;

type CMat = DMatrix<Complex64>;

pub const MAX_DENSE_DIM: usize = 512;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Dense operators in the orthonormal coordinates `chi = sqrt(w) psi`, where
/// the trapezoidal inner product becomes the Euclidean one.
#[derive(Debug, Clone)]
pub struct DenseOperators {
    h: CMat,
    /// Cayley step without the global offset phase; `W_dt = phase * w0`.
    w0: CMat,
    phase: Complex64,
    b: CMat,
    dt: f64,
    constants: PhysicalConstants,
    kappa: f64,
    n_absorbing: usize,
}

/// Dense `H`, `W_dt` and `B` of a propagator.
pub fn build_dense(prop: &Propagator) -> Result<DenseOperators> {
    let ham = prop.hamiltonian();
    let n = ham.dim();
    if n > MAX_DENSE_DIM {
        return Err(Error::DimensionTooLarge { n, max: MAX_DENSE_DIM });
    }
    let constants = ham.constants();
    let offset = ham.energy_offset();
    let diag = ham.diagonal();
    let off = ham.off_diagonal();

    let mut s = CMat::zeros(n, n);
    for j in 0..n {
        s[(j, j)] = diag[j];
        if j + 1 < n {
            s[(j, j + 1)] = Complex64::new(off[j], 0.0);
            s[(j + 1, j)] = Complex64::new(off[j], 0.0);
        }
    }
    let a = I * (prop.dt() / (2.0 * constants.hbar));
    let identity = CMat::identity(n, n);
    let plus = &identity + &s * a;
    let minus = &identity - &s * a;
    let w0 = plus.lu().solve(&minus).ok_or(Error::SingularImplicitFactor { row: 0 })?;
    let phase = Complex64::from_polar(1.0, -offset * prop.dt() / constants.hbar);

    let mut b = CMat::zeros(n, n);
    let mut n_absorbing = 0;
    for node in ham.absorbing_nodes() {
        b[(node.active, node.active)] = Complex64::new(1.0 / node.weight, 0.0);
        n_absorbing += 1;
    }
    let h = s + identity * Complex64::new(offset, 0.0);
    Ok(DenseOperators {
        h,
        w0,
        phase,
        b,
        dt: prop.dt(),
        constants,
        kappa: ham.detector().kappa,
        n_absorbing,
    })
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn spectral_norm(m: &CMat) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

fn power(base: &CMat, mut k: usize) -> CMat {
    let n = base.nrows();
    let mut result = CMat::identity(n, n);
    let mut sq = base.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &sq;
        }
        k >>= 1;
        if k > 0 {
            sq = &sq * &sq;
        }
    }
    result
}

impl DenseOperators {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &CMat {
        &self.h
    }

    pub fn b(&self) -> &CMat {
        &self.b
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn w_dt(&self) -> CMat {
        &self.w0 * self.phase
    }

    /// `W_{k dt}`.
    pub fn w_power(&self, k: usize) -> CMat {
        power(&self.w0, k) * self.phase.powu(k as u32)
    }

    /// `hbar kappa / m`.
    pub fn rate(&self) -> f64 {
        self.constants.hbar * self.kappa / self.constants.mass
    }

    /// `max |-(i/hbar)(H* - H) - (hbar kappa/m) B|` relative to `max |H|`.
    pub fn skew_identity_residual(&self) -> f64 {
        let skew = (self.h.adjoint() - &self.h) * (-I / self.constants.hbar);
        let diff = skew - &self.b * Complex64::new(self.rate(), 0.0);
        max_abs(&diff) / max_abs(&self.h).max(f64::MIN_POSITIVE)
    }

    /// Numerical rank of `B` (singular values above `1e-12` of the largest).
    pub fn boundary_rank(&self) -> usize {
        let sv = self.b.singular_values();
        let top = sv.iter().copied().fold(0.0, f64::max);
        sv.iter().filter(|&&s| top > 0.0 && s > 1e-12 * top).count()
    }

    pub fn absorbing_boundaries(&self) -> usize {
        self.n_absorbing
    }

    /// `max |H - H*|` relative to `max |H|`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.h - self.h.adjoint())) / max_abs(&self.h).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub steps: Vec<usize>,
    /// Spectral norm of `W_{k dt}` for each entry of `steps`.
    pub norms: Vec<f64>,
    pub max_norm: f64,
    /// `max |W_{(a+b) dt} - W_{a dt} W_{b dt}|` over consecutive pairs of `steps`.
    pub semigroup_defect: f64,
    /// Norms non-increasing in `t` up to `1e-12`.
    pub monotone: bool,
}

/// Spectral norms of `W_t` for `t = k dt`, `k` in `steps`.
pub fn semigroup_contraction_check(ops: &DenseOperators, steps: &[usize]) -> ContractionReport {
    let mut sorted = steps.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let powers: Vec<CMat> = sorted.iter().map(|&k| ops.w_power(k)).collect();
    let norms: Vec<f64> = powers.iter().map(spectral_norm).collect();
    let mut semigroup_defect = 0.0_f64;
    for (i, pair) in sorted.windows(2).enumerate() {
        let combined = ops.w_power(pair[0] + pair[1]);
        let product = &powers[i] * &powers[i + 1];
        semigroup_defect = semigroup_defect.max(max_abs(&(combined - product)));
    }
    let monotone = norms.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    ContractionReport {
        max_norm: norms.iter().copied().fold(0.0, f64::max),
        steps: sorted,
        norms,
        semigroup_defect,
        monotone,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovmReport {
    pub steps: usize,
    pub t: f64,
    /// `|| sum_k dt (hbar kappa/m) M_k* B M_k + W_T* W_T - I ||` with `M_k` the
    /// step-midpoint propagator `(W_k + W_{k+1})/2`.
    pub residual: f64,
    /// `|| W_T* W_T ||`, the undetected part `F({inf})` as `T` grows.
    pub undetected_norm: f64,
    /// `|| sum_k F(step k) ||`.
    pub detected_norm: f64,
}

/// Completeness of the detection POVM on `[0, K dt]`, accumulated by doubling.
pub fn povm_completeness(ops: &DenseOperators, steps: usize) -> PovmReport {
    let n = ops.dim();
    let identity = CMat::identity(n, n);
    let mid = (&identity + &ops.w0) * Complex64::new(0.5, 0.0);
    let q = mid.adjoint() * &ops.b * &mid * Complex64::new(ops.dt * ops.rate(), 0.0);

    // (W^m, sum_{k<m} W^k* Q W^k) for m = 1, 2, 4, ...; the phase cancels
    let mut block_w = ops.w0.clone();
    let mut block_a = q;
    let mut acc_w = identity.clone();
    let mut acc_a = CMat::zeros(n, n);
    let mut k = steps;
    while k > 0 {
        if k & 1 == 1 {
            // append a block after the accumulated span
            acc_a = &acc_a + acc_w.adjoint() * &block_a * &acc_w;
            acc_w = &block_w * &acc_w;
        }
        k >>= 1;
        if k > 0 {
            block_a = &block_a + block_w.adjoint() * &block_a * &block_w;
            block_w = &block_w * &block_w;
        }
    }
    let remaining = acc_w.adjoint() * &acc_w;
    let residual = spectral_norm(&(&acc_a + &remaining - identity));
    PovmReport {
        steps,
        t: steps as f64 * ops.dt,
        residual,
        undetected_norm: spectral_norm(&remaining),
        detected_norm: spectral_norm(&acc_a),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Eigenvalues of `H`, sorted by real part.
    pub eigenvalues: Vec<Complex64>,
    pub max_im: f64,
    /// Slowest decay rate of `|W_t psi|^2`: `-2 max Im E / hbar`.
    pub gamma_min: f64,
    /// Frobenius norm of `[H + H*, H - H*]`; nonzero means `H` is not normal.
    pub commutator_norm: f64,
}

pub fn spectrum_check(ops: &DenseOperators) -> Result<SpectrumReport> {
    let n = ops.dim();
    let schur = nalgebra::Schur::try_new(ops.h.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or(Error::EigenSolverFailed)?;
    let (_, t) = schur.unpack();
    let mut eigenvalues: Vec<Complex64> = (0..n).map(|j| t[(j, j)]).collect();
    if eigenvalues.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::EigenSolverFailed);
    }
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re));
    let max_im = eigenvalues.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
    let sym = &ops.h + ops.h.adjoint();
    let skew = &ops.h - ops.h.adjoint();
    let commutator = &sym * &skew - &skew * &sym;
    Ok(SpectrumReport {
        gamma_min: -2.0 * max_im / ops.constants.hbar,
        max_im,
        commutator_norm: commutator.norm(),
        eigenvalues,
    })
}
