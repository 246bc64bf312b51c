//! Wave functions on a grid and the library of initial states.
//!
//! Every factory returns a state with unit trapezoidal norm that vanishes
//! identically in a neighbourhood of the boundary.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Grid, PhysicalConstants};

/// Gaussians are multiplied by a smooth cutoff that starts at this many
/// standard deviations and reaches zero at [`GAUSSIAN_SUPPORT_SIGMAS`].
pub const GAUSSIAN_TAPER_START_SIGMAS: f64 = 5.0;
pub const GAUSSIAN_SUPPORT_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub kappa: f64,
}

impl DetectorSpec {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::invalid("kappa", format!("must be positive, got {kappa}")));
        }
        Ok(Self { kappa })
    }

    /// `kappa = 0`: a perfectly reflecting (Neumann) boundary. Diagnostic only;
    /// it detects nothing.
    pub fn reflecting() -> Self {
        Self { kappa: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    values: Vec<Complex64>,
    grid: Arc<Grid>,
    constants: PhysicalConstants,
}

impl WaveFunction {
    /// Wraps raw nodal values without normalizing them.
    pub fn from_values(
        grid: Arc<Grid>,
        constants: PhysicalConstants,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite {
                what: "wave function",
                index,
            });
        }
        Ok(Self {
            values,
            grid,
            constants,
        })
    }

    pub(crate) fn from_parts_unchecked(
        grid: Arc<Grid>,
        constants: PhysicalConstants,
        values: Vec<Complex64>,
    ) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            values,
            grid,
            constants,
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn constants(&self) -> PhysicalConstants {
        self.constants
    }

    pub fn norm_sq(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| self.grid.weight(k) * v.norm_sqr())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            grid: self.grid.clone(),
            constants: self.constants,
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::invalid("wave function", "zero norm"));
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    /// Index range `[first, last]` of nonzero nodes, `None` for the zero state.
    pub fn support_indices(&self) -> Option<(usize, usize)> {
        let first = self.values.iter().position(|v| *v != Complex64::new(0.0, 0.0))?;
        let last = self.values.iter().rposition(|v| *v != Complex64::new(0.0, 0.0))?;
        Some((first, last))
    }

    pub fn same_grid(&self, other: &WaveFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }
}

/// Trapezoidal `L^2` inner product, conjugate-linear in `f`.
pub fn inner_product(f: &WaveFunction, g: &WaveFunction) -> Result<Complex64> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    Ok(f
        .values
        .iter()
        .zip(&g.values)
        .enumerate()
        .map(|(k, (a, b))| a.conj() * b * grid.weight(k))
        .sum())
}

/// `C^inf` step: 1 for `t <= 0`, 0 for `t >= 1`.
pub(crate) fn smooth_cutoff(t: f64) -> f64 {
    fn f(t: f64) -> f64 {
        if t > 0.0 {
            (-1.0 / t).exp()
        } else {
            0.0
        }
    }
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = f(1.0 - t);
        a / (a + f(t))
    }
}

fn check_window(grid: &Grid, lo: f64, hi: f64) -> Result<()> {
    let extent = grid.extent();
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi >= extent {
        return Err(Error::SupportTouchesBoundary { lo, hi });
    }
    Ok(())
}

fn finish(grid: &Arc<Grid>, constants: PhysicalConstants, mut values: Vec<Complex64>) -> Result<WaveFunction> {
    let n = values.len();
    values[0] = Complex64::new(0.0, 0.0);
    values[n - 1] = Complex64::new(0.0, 0.0);
    let psi = WaveFunction::from_values(grid.clone(), constants, values)?;
    if psi.norm_sq() == 0.0 {
        return Err(Error::invalid("state", "no grid node inside the support; refine the grid"));
    }
    psi.normalized()
}

/// Gaussian packet `exp(-(x-x0)^2 / 4 sigma^2) exp(i p0 x / hbar)` with a smooth
/// cutoff between 5 and 6 standard deviations, so the support is exactly
/// `[x0 - 6 sigma, x0 + 6 sigma]`.
pub fn make_gaussian(
    grid: &Arc<Grid>,
    constants: PhysicalConstants,
    x0: f64,
    p0: f64,
    sigma_x: f64,
) -> Result<WaveFunction> {
    constants.validate()?;
    if !(sigma_x.is_finite() && sigma_x > 0.0) {
        return Err(Error::invalid("sigma_x", format!("must be positive, got {sigma_x}")));
    }
    if !p0.is_finite() {
        return Err(Error::invalid("p0", "must be finite"));
    }
    let half = GAUSSIAN_SUPPORT_SIGMAS * sigma_x;
    check_window(grid, x0 - half, x0 + half)?;
    let taper_width = GAUSSIAN_SUPPORT_SIGMAS - GAUSSIAN_TAPER_START_SIGMAS;
    let values = grid
        .nodes()
        .iter()
        .map(|&x| {
            let u = (x - x0).abs() / sigma_x;
            if u >= GAUSSIAN_SUPPORT_SIGMAS {
                return Complex64::new(0.0, 0.0);
            }
            let envelope = (-(u * u) / 4.0).exp()
                * smooth_cutoff((u - GAUSSIAN_TAPER_START_SIGMAS) / taper_width);
            Complex64::from_polar(envelope, p0 * x / constants.hbar)
        })
        .collect();
    finish(grid, constants, values)
}

/// Compactly supported smooth bump `exp(-1/(1-s^2)) exp(i p0 x / hbar)` with
/// `s = (x - center)/half_width`.
pub fn make_bump(
    grid: &Arc<Grid>,
    constants: PhysicalConstants,
    center: f64,
    half_width: f64,
    p0: f64,
) -> Result<WaveFunction> {
    constants.validate()?;
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::invalid("half_width", format!("must be positive, got {half_width}")));
    }
    if !p0.is_finite() {
        return Err(Error::invalid("p0", "must be finite"));
    }
    check_window(grid, center - half_width, center + half_width)?;
    let values = grid
        .nodes()
        .iter()
        .map(|&x| {
            let s = (x - center) / half_width;
            if s.abs() >= 1.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar((-1.0 / (1.0 - s * s)).exp(), p0 * x / constants.hbar)
            }
        })
        .collect();
    finish(grid, constants, values)
}

/// `sqrt(2/L) sin(n pi x / L)` sampled on the grid.
pub fn dirichlet_mode(grid: &Grid, n: usize) -> Vec<f64> {
    let l = grid.extent();
    let a = (2.0 / l).sqrt();
    grid.nodes()
        .iter()
        .map(|&x| a * (n as f64 * std::f64::consts::PI * x / l).sin())
        .collect()
}

/// Superposition `sum_n c_n sqrt(2/L) sin(n pi x / L)`, `n = 1, 2, ...`, of
/// Dirichlet eigenmodes on an interval.
pub fn make_mode_superposition(
    grid: &Arc<Grid>,
    constants: PhysicalConstants,
    coefficients: &[Complex64],
) -> Result<WaveFunction> {
    constants.validate()?;
    if !matches!(grid.geometry(), Geometry::Interval { .. }) {
        return Err(Error::WrongGeometry {
            expected: "interval",
            found: grid.geometry().name().to_string(),
        });
    }
    if coefficients.is_empty() {
        return Err(Error::invalid("coefficients", "empty"));
    }
    if coefficients.len() > grid.n_interior() {
        return Err(Error::invalid(
            "coefficients",
            format!(
                "{} modes cannot be resolved by {} interior nodes",
                coefficients.len(),
                grid.n_interior()
            ),
        ));
    }
    let norm_sq: f64 = coefficients.iter().map(|c| c.norm_sqr()).sum();
    if !((norm_sq - 1.0).abs() <= 1e-10) {
        return Err(Error::NotNormalized { norm_sq });
    }
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (i, c) in coefficients.iter().enumerate() {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (v, m) in values.iter_mut().zip(dirichlet_mode(grid, i + 1)) {
            *v += c * m;
        }
    }
    finish(grid, constants, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    fn unit_interval(n: usize) -> Arc<Grid> {
        Arc::new(build_grid(Geometry::interval(1.0), n).unwrap())
    }

    #[test]
    fn gaussian_is_normalized_and_vanishes_at_ends() {
        let g = unit_interval(999);
        let psi = make_gaussian(&g, PhysicalConstants::default(), 0.5, 0.0, 0.05).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        assert_eq!(psi.values()[0], Complex64::new(0.0, 0.0));
        assert_eq!(*psi.values().last().unwrap(), Complex64::new(0.0, 0.0));
        let (lo, hi) = psi.support_indices().unwrap();
        assert!(g.nodes()[lo] > 0.5 - 0.3 && g.nodes()[hi] < 0.5 + 0.3);
    }

    #[test]
    fn gaussian_touching_boundary_rejected() {
        let g = unit_interval(999);
        let err = make_gaussian(&g, PhysicalConstants::default(), 0.05, 0.0, 0.05).unwrap_err();
        assert!(matches!(err, Error::SupportTouchesBoundary { .. }));
    }

    #[test]
    fn bump_is_compactly_supported() {
        let g = unit_interval(999);
        let psi = make_bump(&g, PhysicalConstants::default(), 0.5, 0.2, 0.0).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        for (x, v) in g.nodes().iter().zip(psi.values()) {
            if ((x - 0.5) / 0.2).abs() >= 1.0 {
                assert_eq!(*v, Complex64::new(0.0, 0.0));
            }
        }
        // every finite difference of a state that is identically zero near the
        // edges vanishes there
        let v = psi.values();
        let (lo, hi) = psi.support_indices().unwrap();
        assert!(lo > 4 && hi + 5 < v.len());
    }

    #[test]
    fn bump_too_wide_rejected() {
        let g = unit_interval(999);
        assert!(make_bump(&g, PhysicalConstants::default(), 0.5, 0.6, 0.0).is_err());
    }

    #[test]
    fn mode_superposition_checks_normalization() {
        let g = unit_interval(99);
        let c = [Complex64::new(0.6, 0.0), Complex64::new(0.9, 0.0)];
        let err = make_mode_superposition(&g, PhysicalConstants::default(), &c).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }

    #[test]
    fn mode_superposition_requires_interval() {
        let g = Arc::new(build_grid(Geometry::Ball { radius: 1.0 }, 99).unwrap());
        let c = [Complex64::new(1.0, 0.0)];
        assert!(matches!(
            make_mode_superposition(&g, PhysicalConstants::default(), &c),
            Err(Error::WrongGeometry { .. })
        ));
    }

    #[test]
    fn sine_modes_are_orthonormal_on_the_grid() {
        let g = unit_interval(127);
        let k = PhysicalConstants::default();
        let one = [Complex64::new(1.0, 0.0)];
        let two = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let m1 = make_mode_superposition(&g, k, &one).unwrap();
        let m2 = make_mode_superposition(&g, k, &two).unwrap();
        assert!(inner_product(&m1, &m2).unwrap().norm() < 1e-10);
        assert!((inner_product(&m1, &m1).unwrap() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_first_argument() {
        let g = unit_interval(199);
        let psi = make_bump(&g, PhysicalConstants::default(), 0.4, 0.2, 3.0).unwrap();
        let ipsi = psi.scaled(Complex64::new(0.0, 1.0));
        let z = inner_product(&ipsi, &psi).unwrap();
        assert!((z - Complex64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = make_bump(&unit_interval(99), PhysicalConstants::default(), 0.5, 0.2, 0.0).unwrap();
        let b = make_bump(&unit_interval(101), PhysicalConstants::default(), 0.5, 0.2, 0.0).unwrap();
        assert_eq!(inner_product(&a, &b).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn cutoff_is_monotone_step() {
        assert_eq!(smooth_cutoff(-0.1), 1.0);
        assert_eq!(smooth_cutoff(1.0), 0.0);
        assert!((smooth_cutoff(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = smooth_cutoff(i as f64 / 100.0);
            assert!(v <= prev);
            prev = v;
        }
    }
}
