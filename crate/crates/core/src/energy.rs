//! Energy spread of an initial state by three independent routes.
//!
//! * free spectral: zero-extend the state to the whole line (odd extension of
//!   `u(r)` for the ball), Fourier transform, and take moments of
//!   `E = hbar^2 k^2 / 2m` against `|psi_hat(k)|^2`;
//! * operator moments: `<psi|H|psi>` and `<psi|H^2|psi> - <psi|H|psi>^2` with the
//!   three-point stencil of `-(hbar^2/2m) d^2/dx^2 + V`;
//! * Dirichlet expansion: sine-mode coefficients on the interval with the
//!   closed-form eigenvalues `n^2 pi^2 hbar^2 / 2 m L^2`.
//!
//! For states supported away from the boundary all three agree up to
//! discretization error.
//!
//! The one-dimensional energy density is the change of variables
//! `E = hbar^2 k^2 / 2m` applied to `|psi_hat(k)|^2` on the `k` line, which
//! folds `k` and `-k` onto the same energy:
//!
//! ```text
//! rho(E) dE = (|psi_hat(k)|^2 + |psi_hat(-k)|^2) dk,   dk/dE = (1/hbar) sqrt(m / 2E)
//! ```
//!
//! For the ball `rho(E) = sqrt(2 m^3 E) / hbar^3 * 4 pi |psi_hat(k)|^2` with the
//! three-dimensional transform of the spherically symmetric state.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::detection::format_float;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Grid};
use crate::state::WaveFunction;

pub const MIN_PADDING: usize = 8;
/// Nodes next to each boundary that must be exactly zero for the zero
/// extension to be a smooth function.
const SUPPORT_MARGIN: usize = 2;
const MAX_IMAGINARY_DEFECT: f64 = 1e-10;
const MAX_DIRICHLET_DEFECT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyRoute {
    FreeSpectral,
    OperatorMoments,
    DirichletExpansion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyStats {
    pub mean_e: f64,
    pub var_e: f64,
    pub sigma_e: f64,
    pub route: EnergyRoute,
    /// Route-specific defect: relative imaginary part of `<H>` for the operator
    /// route, `1 - sum |c_n|^2` for the Dirichlet route, zero otherwise.
    pub defect: f64,
}

impl EnergyStats {
    fn new(mean_e: f64, var_e: f64, route: EnergyRoute, defect: f64) -> Self {
        let var_e = var_e.max(0.0);
        Self {
            mean_e,
            var_e,
            sigma_e: var_e.sqrt(),
            route,
            defect,
        }
    }
}

fn require_interior_support(psi: &WaveFunction) -> Result<(usize, usize)> {
    let grid = psi.grid();
    let n = grid.len();
    let (lo, hi) = psi
        .support_indices()
        .ok_or_else(|| Error::invalid("state", "zero wave function"))?;
    if lo < SUPPORT_MARGIN || hi + SUPPORT_MARGIN >= n {
        return Err(Error::SupportTouchesBoundary {
            lo: grid.nodes()[lo],
            hi: grid.nodes()[hi],
        });
    }
    Ok((lo, hi))
}

/// Samples of the state on the whole line: zero extension for 1D geometries,
/// odd extension of `u` for the ball. Returns `(array, signed positions)`.
fn extended_samples(psi: &WaveFunction, padding: usize) -> (Vec<Complex64>, Vec<f64>) {
    let grid = psi.grid();
    let h = grid.dx();
    let v = psi.values();
    let n = v.len();
    match grid.geometry() {
        Geometry::Ball { .. } => {
            let m = padding * 2 * n;
            let mut a = vec![Complex64::new(0.0, 0.0); m];
            let mut x = vec![0.0; m];
            for k in 0..n {
                a[k] = v[k];
                x[k] = k as f64 * h;
                if k > 0 {
                    a[m - k] = -v[k];
                    x[m - k] = -(k as f64) * h;
                }
            }
            (a, x)
        }
        _ => {
            let m = padding * n;
            let mut a = vec![Complex64::new(0.0, 0.0); m];
            a[..n].copy_from_slice(v);
            let x = (0..m).map(|k| grid.nodes().get(k).copied().unwrap_or(k as f64 * h)).collect();
            (a, x)
        }
    }
}

fn fft_in_place(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

fn signed_wavenumber(j: usize, m: usize, h: f64) -> f64 {
    let f = if j < m.div_ceil(2) { j as f64 } else { j as f64 - m as f64 };
    2.0 * PI * f / (m as f64 * h)
}

/// Normalized spectral weights `|psi_hat(k_j)|^2` with their wavenumbers.
fn spectral_weights(psi: &WaveFunction, padding: usize) -> Vec<(f64, f64)> {
    let h = psi.grid().dx();
    let (mut a, _) = extended_samples(psi, padding);
    let m = a.len();
    fft_in_place(&mut a);
    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    a.iter()
        .enumerate()
        .map(|(j, z)| (signed_wavenumber(j, m, h), z.norm_sqr() / total))
        .collect()
}

/// Free-Hamiltonian energy moments from the Fourier transform of the
/// zero-extended state.
pub fn sigma_e_spectral(psi: &WaveFunction, padding_factor: usize) -> Result<EnergyStats> {
    if padding_factor < MIN_PADDING {
        return Err(Error::invalid(
            "padding_factor",
            format!("must be at least {MIN_PADDING}, got {padding_factor}"),
        ));
    }
    require_interior_support(psi)?;
    let c = psi.constants();
    let kin = c.kinetic();
    let weights = spectral_weights(psi, padding_factor);
    let mean: f64 = weights.iter().map(|(k, p)| p * kin * k * k).sum();
    let var: f64 = weights
        .iter()
        .map(|(k, p)| {
            let d = kin * k * k - mean;
            p * d * d
        })
        .sum();
    Ok(EnergyStats::new(mean, var, EnergyRoute::FreeSpectral, 0.0))
}

/// `(<p>, <p^2>)` from the spectral weights, `p = hbar k`.
pub fn momentum_moments(psi: &WaveFunction) -> Result<(f64, f64)> {
    require_interior_support(psi)?;
    let hbar = psi.constants().hbar;
    let weights = spectral_weights(psi, MIN_PADDING);
    let p1 = weights.iter().map(|(k, w)| w * hbar * k).sum();
    let p2 = weights.iter().map(|(k, w)| w * (hbar * k).powi(2)).sum();
    Ok((p1, p2))
}

/// `-(hbar^2/2m) psi'' + (V - v_offset) psi` on interior nodes with zero ends.
fn stencil_apply(grid: &Grid, kin: f64, values: &[Complex64], potential: Option<&[f64]>, v_offset: f64) -> Vec<Complex64> {
    let n = values.len();
    let h2 = grid.dx() * grid.dx();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..n - 1 {
        let lap = values[k - 1] - 2.0 * values[k] + values[k + 1];
        out[k] = -kin * lap / h2;
        if let Some(v) = potential {
            out[k] += values[k] * (v[k] - v_offset);
        }
    }
    out
}

/// Energy moments `<H>`, `<H^2> - <H>^2` from the three-point stencil with an
/// optional potential sampled on the grid.
pub fn sigma_e_operator(psi: &WaveFunction, potential: Option<&[f64]>) -> Result<EnergyStats> {
    let grid = psi.grid();
    let v = psi.values();
    let n = v.len();
    if let Some(pot) = potential {
        if pot.len() != n {
            return Err(Error::invalid("potential", "length does not match the grid"));
        }
        if let Some(index) = pot.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "potential", index });
        }
    }
    let zero = Complex64::new(0.0, 0.0);
    if v[0] != zero || v[n - 1] != zero {
        return Err(Error::BoundaryHypothesis("psi does not vanish at the boundary nodes".into()));
    }
    let c = psi.constants();
    let v_offset = potential
        .map(|p| p[1..n - 1].iter().copied().fold(f64::INFINITY, f64::min))
        .unwrap_or(0.0);
    let h_psi = stencil_apply(grid, c.kinetic(), v, potential, v_offset);

    // H psi must vanish at the boundary as well: extrapolate from the interior
    let scale = h_psi.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    let left = 2.0 * h_psi[1] - h_psi[2];
    let right = 2.0 * h_psi[n - 2] - h_psi[n - 3];
    if left.norm().max(right.norm()) > 1e-4 * scale {
        return Err(Error::BoundaryHypothesis("H psi does not vanish at the boundary".into()));
    }

    let w = |k: usize| grid.weight(k);
    let norm_sq: f64 = (0..n).map(|k| w(k) * v[k].norm_sqr()).sum();
    let expect: Complex64 = (0..n).map(|k| v[k].conj() * h_psi[k] * w(k)).sum::<Complex64>() / norm_sq;
    let mean = expect.re;
    let var: f64 = (0..n)
        .map(|k| w(k) * (h_psi[k] - v[k] * mean).norm_sqr())
        .sum::<f64>()
        / norm_sq;
    let defect = expect.im.abs() / mean.abs().max(f64::MIN_POSITIVE);
    if defect > MAX_IMAGINARY_DEFECT {
        return Err(Error::BoundaryHypothesis(format!("<H> has imaginary part {}", expect.im)));
    }
    Ok(EnergyStats::new(mean + v_offset, var, EnergyRoute::OperatorMoments, defect))
}

/// Sine-mode coefficients `c_n`, `n = 1..=n_modes`, of a state on an interval.
pub fn dirichlet_coefficients(psi: &WaveFunction, n_modes: usize) -> Result<Vec<Complex64>> {
    let grid = psi.grid();
    let length = match grid.geometry() {
        Geometry::Interval { length, .. } => *length,
        other => {
            return Err(Error::WrongGeometry {
                expected: "interval",
                found: other.name().to_string(),
            })
        }
    };
    let v = psi.values();
    let n = v.len();
    let zero = Complex64::new(0.0, 0.0);
    if v[0] != zero || v[n - 1] != zero {
        return Err(Error::BoundaryHypothesis("psi does not vanish at the boundary nodes".into()));
    }
    let cells = n - 1;
    if n_modes == 0 || n_modes >= cells {
        return Err(Error::invalid(
            "n_modes",
            format!("must be in 1..{} for this grid", cells - 1),
        ));
    }
    // odd extension of length 2 (N + 1): G_n = -2i sum_k psi_k sin(n pi k / (N+1))
    let mut g = vec![zero; 2 * cells];
    for k in 1..cells {
        g[k] = v[k];
        g[2 * cells - k] = -v[k];
    }
    fft_in_place(&mut g);
    let a = (2.0 / length).sqrt() * grid.dx();
    Ok((1..=n_modes).map(|m| a * Complex64::new(0.0, 0.5) * g[m]).collect())
}

/// Energy moments of the Dirichlet Hamiltonian on an interval.
pub fn sigma_e_dirichlet(psi: &WaveFunction, n_modes: usize) -> Result<EnergyStats> {
    let coeffs = dirichlet_coefficients(psi, n_modes)?;
    let c = psi.constants();
    let length = psi.grid().extent();
    let e1 = PI * PI * c.hbar * c.hbar / (2.0 * c.mass * length * length);
    let weight: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
    let defect = 1.0 - weight / psi.norm_sq();
    if defect.abs() > MAX_DIRICHLET_DEFECT {
        return Err(Error::TruncationDefect {
            defect,
            limit: MAX_DIRICHLET_DEFECT,
        });
    }
    let energy = |i: usize| e1 * ((i + 1) * (i + 1)) as f64;
    let mean = coeffs.iter().enumerate().map(|(i, z)| z.norm_sqr() * energy(i)).sum::<f64>() / weight;
    let var = coeffs
        .iter()
        .enumerate()
        .map(|(i, z)| z.norm_sqr() * (energy(i) - mean).powi(2))
        .sum::<f64>()
        / weight;
    Ok(EnergyStats::new(mean, var, EnergyRoute::DirichletExpansion, defect))
}

/// Density of the free-energy distribution, sampled at
/// `E_j = hbar^2 k_j^2 / 2m` with `k_j = (j + 1/2) dk` (uniform in `sqrt(E)`,
/// half-cell offset from the integrable `E^{-1/2}` endpoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyDensity {
    pub energies: Vec<f64>,
    pub rho: Vec<f64>,
    /// Quadrature weights `dE_j`; `sum rho_j dE_j` integrates the density.
    pub weights: Vec<f64>,
    /// `|1 - sum rho dE|`.
    pub normalization_defect: f64,
}

impl EnergyDensity {
    fn from_samples(energies: Vec<f64>, rho: Vec<f64>, weights: Vec<f64>) -> Self {
        let total: f64 = rho.iter().zip(&weights).map(|(r, w)| r * w).sum();
        Self {
            energies,
            rho,
            weights,
            normalization_defect: (1.0 - total).abs(),
        }
    }

    pub fn total(&self) -> f64 {
        self.rho.iter().zip(&self.weights).map(|(r, w)| r * w).sum()
    }

    /// `(mean, variance)` of the sampled density.
    pub fn moments(&self) -> (f64, f64) {
        let total = self.total();
        let mean = self
            .energies
            .iter()
            .zip(&self.rho)
            .zip(&self.weights)
            .map(|((e, r), w)| e * r * w)
            .sum::<f64>()
            / total;
        let var = self
            .energies
            .iter()
            .zip(&self.rho)
            .zip(&self.weights)
            .map(|((e, r), w)| (e - mean).powi(2) * r * w)
            .sum::<f64>()
            / total;
        (mean, var)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["E", "rho"])?;
        for (e, r) in self.energies.iter().zip(&self.rho) {
            w.write_record([format_float(*e), format_float(*r)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an `E,rho` table. Energies must be `E_j = a (j + 1/2)^2`, as
    /// written by [`energy_density`]; the quadrature weights are rebuilt from
    /// that spacing.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() != 2 || &header[0] != "E" || &header[1] != "rho" {
            return Err(Error::Parse(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut energies = Vec::new();
        let mut rho = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse("ragged row".into()));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            let e = parse(&rec[0])?;
            let p = parse(&rec[1])?;
            if !(e.is_finite() && e > 0.0 && p.is_finite() && p >= 0.0) {
                return Err(Error::Parse(format!("invalid sample ({e}, {p})")));
            }
            energies.push(e);
            rho.push(p);
        }
        if energies.is_empty() {
            return Err(Error::Parse("no data rows".into()));
        }
        // E_0 = a / 4
        let a = 4.0 * energies[0];
        for (j, e) in energies.iter().enumerate() {
            let expected = a * (j as f64 + 0.5).powi(2);
            if (e - expected).abs() > 1e-9 * expected {
                return Err(Error::Parse(format!("energy grid not quadratic at row {j}")));
            }
        }
        // dE = 2 a (j + 1/2) dj with unit index spacing
        let weights = (0..energies.len()).map(|j| 2.0 * a * (j as f64 + 0.5)).collect();
        Ok(Self::from_samples(energies, rho, weights))
    }
}

/// Energy density of the free (zero-extended) state.
pub fn energy_density(psi: &WaveFunction) -> Result<EnergyDensity> {
    let grid = psi.grid();
    let n = grid.len();
    let v = psi.values();
    let zero = Complex64::new(0.0, 0.0);
    if v[0] != zero || v[n - 1] != zero {
        return Err(Error::SupportTouchesBoundary {
            lo: grid.nodes()[0],
            hi: grid.extent(),
        });
    }
    let c = psi.constants();
    let h = grid.dx();
    let (mut a, x) = extended_samples(psi, MIN_PADDING);
    let m = a.len();
    let dk = 2.0 * PI / (m as f64 * h);
    // half-cell shift: F_j = sum psi(x) exp(-i (j + 1/2) dk x)
    for (z, &xk) in a.iter_mut().zip(&x) {
        *z *= Complex64::from_polar(1.0, -0.5 * dk * xk);
    }
    fft_in_place(&mut a);
    let norm = h * h / (2.0 * PI);
    let is_ball = matches!(grid.geometry(), Geometry::Ball { .. });
    let half = m / 2;
    let mut energies = Vec::with_capacity(half);
    let mut rho = Vec::with_capacity(half);
    let mut weights = Vec::with_capacity(half);
    for j in 0..half {
        let k = (j as f64 + 0.5) * dk;
        let e = c.hbar * c.hbar * k * k / (2.0 * c.mass);
        let plus = a[j].norm_sqr() * norm;
        let minus = a[m - 1 - j].norm_sqr() * norm;
        let r = if is_ball {
            // odd extension: |u_hat(k)|^2 = 4 pi k^2 |psi_hat_3d(k)|^2
            let psi_hat_3d_sq = 0.5 * (plus + minus) / (4.0 * PI * k * k);
            (2.0 * c.mass.powi(3) * e).sqrt() / c.hbar.powi(3) * 4.0 * PI * psi_hat_3d_sq
        } else {
            (c.mass / (2.0 * e)).sqrt() / c.hbar * (plus + minus)
        };
        energies.push(e);
        rho.push(r);
        weights.push(c.hbar * c.hbar * k * dk / c.mass);
    }
    Ok(EnergyDensity::from_samples(energies, rho, weights))
}
