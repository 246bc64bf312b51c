use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::detection::DetectionRecord;
use crate::error::{Error, Result};
use crate::propagator::{evolve_with, EvolveOptions, Propagator};
use crate::state::WaveFunction;

/// Largest admissible fraction of `|phi|^2` in the last 5% of the time window,
/// and of undetected norm^2 at the end of a bounded run.
pub const MAX_TAIL_FRACTION: f64 = 1e-6;
const TIME_PADDING: usize = 2;

/// `phi(t, b) = sqrt(hbar kappa / m) psi_t(b)` on absorbing boundary points,
/// sampled at step midpoints `t_{k+1/2}`. Zero for `t < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DilationField {
    phi: Vec<Vec<Complex64>>,
    /// `i hbar d/dt phi` in the discrete form exact for the Crank-Nicolson step.
    h_phi: Vec<Vec<Complex64>>,
    boundaries: Vec<String>,
    dt: f64,
    hbar: f64,
    /// Scalar part of the generator, carried by a global phase per step.
    energy_offset: f64,
    norm_sq: f64,
    initial_norm_sq: f64,
    residual_norm_sq: f64,
}

impl DilationField {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn boundaries(&self) -> &[String] {
        &self.boundaries
    }

    pub fn values(&self, boundary: usize) -> &[Complex64] {
        &self.phi[boundary]
    }

    pub fn time(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt
    }

    /// `sum_b sum_k |phi|^2 dt`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn initial_norm_sq(&self) -> f64 {
        self.initial_norm_sq
    }

    pub fn residual_norm_sq(&self) -> f64 {
        self.residual_norm_sq
    }

    /// `sum_b |phi(t_k, b)|^2`.
    pub fn density(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.phi.iter().map(|col| col[k].norm_sqr()).sum())
            .collect()
    }
}

struct Sampled {
    phi: Vec<Vec<Complex64>>,
    h_phi: Vec<Vec<Complex64>>,
    record: DetectionRecord,
    final_state: WaveFunction,
}

fn sample(prop: &Propagator, psi0: &WaveFunction, options: &EvolveOptions) -> Result<Sampled> {
    let ham = prop.hamiltonian();
    let c = ham.constants();
    let root_rate = (c.hbar * ham.detector().kappa / c.mass).sqrt();
    let nb = ham.absorbing_nodes().count();
    let offset = ham.energy_offset();
    let to_energy = Complex64::new(0.0, c.hbar / prop.dt());
    let mut phi = vec![Vec::new(); nb];
    let mut h_phi = vec![Vec::new(); nb];
    let evolution = evolve_with(prop, psi0, options, |_, s| {
        for (b, (a, d)) in s.amplitudes.iter().zip(&s.step_difference).enumerate() {
            phi[b].push(a * root_rate);
            h_phi[b].push((to_energy * d + a * offset) * root_rate);
        }
    })?;
    Ok(Sampled {
        phi,
        h_phi,
        record: evolution.record,
        final_state: evolution.final_state,
    })
}

/// Samples `J psi0` along a propagation run. For bounded geometries the run
/// must leave at most [`MAX_TAIL_FRACTION`] of the initial norm^2 undetected.
pub fn build_dilation_field(
    prop: &Propagator,
    psi0: &WaveFunction,
    options: &EvolveOptions,
) -> Result<(DilationField, DetectionRecord)> {
    let s = sample(prop, psi0, options)?;
    let record = s.record;
    let residual = record.residual_norm_sq();
    let initial = record.initial_norm_sq();
    if record.is_bounded() && residual > MAX_TAIL_FRACTION * initial {
        return Err(Error::ResidualTooLarge {
            residual,
            limit: MAX_TAIL_FRACTION * initial,
        });
    }
    let dt = prop.dt();
    let norm_sq = s.phi.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() * dt;
    let field = DilationField {
        phi: s.phi,
        h_phi: s.h_phi,
        boundaries: record.boundaries().to_vec(),
        dt,
        hbar: prop.hamiltonian().constants().hbar,
        energy_offset: prop.hamiltonian().energy_offset(),
        norm_sq,
        initial_norm_sq: initial,
        residual_norm_sq: residual,
    };
    Ok((field, record))
}

/// `|| J(W_s psi0) - S_s J psi0 ||` over `[0, t_max - s]`, where `S_s` is the
/// left shift by `s = shift_steps dt`.
pub fn intertwine_check(prop: &Propagator, psi0: &WaveFunction, shift_steps: usize, t_max: f64) -> Result<f64> {
    let dt = prop.dt();
    let total = (t_max / dt).round() as usize;
    if shift_steps >= total {
        return Err(Error::WindowTooShort(format!(
            "shift of {shift_steps} steps needs more than the {total} steps in t_max"
        )));
    }
    let full = sample(prop, psi0, &EvolveOptions::until(total as f64 * dt))?;
    let moved = sample(prop, psi0, &EvolveOptions::until(shift_steps as f64 * dt))?.final_state;
    let rest = sample(prop, &moved, &EvolveOptions::until((total - shift_steps) as f64 * dt))?;
    let mut sum = 0.0;
    for (a, b) in rest.phi.iter().zip(&full.phi) {
        for (k, x) in a.iter().enumerate() {
            sum += (x - b[k + shift_steps]).norm_sqr();
        }
    }
    Ok((sum * dt).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilationStats {
    /// `||phi||^2`.
    pub p: f64,
    pub mean_t_tilde: f64,
    pub sigma_t_tilde: f64,
    pub mean_h_tilde: f64,
    /// Spread of `H~ = i hbar d/dt` on `phi / ||phi||`, with the time derivative
    /// taken in the form exact for the stepping scheme.
    pub sigma_h_tilde: f64,
    /// Same spread from the time-direction DFT with `E = -hbar omega`. Lower
    /// than `sigma_h_tilde` by the phase dispersion of the time step.
    pub sigma_h_tilde_spectral: f64,
    pub kennard_product: f64,
    /// `min_E0 ||(H~ + E0) phi||^2`.
    pub shifted_energy_floor: f64,
    pub tail_fraction: f64,
}

fn signed_frequency(j: usize, m: usize) -> f64 {
    if j < m.div_ceil(2) {
        j as f64
    } else {
        j as f64 - m as f64
    }
}

/// Time and energy spreads of the dilated state in the shift-covariant picture.
pub fn dilation_stats(field: &DilationField) -> Result<DilationStats> {
    let n = field.len();
    if n < 16 {
        return Err(Error::WindowTooShort(format!("{n} time samples")));
    }
    let dt = field.dt;
    let hbar = field.hbar;
    let density = field.density();
    let total: f64 = density.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoDetections);
    }
    let tail_start = n - (n / 20).max(1);
    let tail_fraction = density[tail_start..].iter().sum::<f64>() / total;
    if tail_fraction > MAX_TAIL_FRACTION {
        return Err(Error::TailNotDecayed {
            fraction: tail_fraction,
            limit: MAX_TAIL_FRACTION,
        });
    }
    let p = total * dt;

    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (k, d) in density.iter().enumerate() {
        let t = field.time(k);
        m1 += d * t;
        m2 += d * t * t;
    }
    let mean_t = m1 / total;
    let var_t = (m2 / total - mean_t * mean_t).max(0.0);

    let (mut g1, mut g2) = (0.0, 0.0);
    for (col, hcol) in field.phi.iter().zip(&field.h_phi) {
        for (x, hx) in col.iter().zip(hcol) {
            g1 += (x.conj() * hx).re;
            g2 += hx.norm_sqr();
        }
    }
    let mean_h = g1 * dt / p;
    let var_h = (g2 * dt / p - mean_h * mean_h).max(0.0);

    // cross-check: a component exp(i omega t) has energy -hbar omega
    let m = TIME_PADDING * n;
    let fft = FftPlanner::new().plan_fft_forward(m);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for col in &field.phi {
        buf[..n].copy_from_slice(col);
        buf[n..].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        fft.process(&mut buf);
        for (j, z) in buf.iter().enumerate() {
            let e = -hbar * 2.0 * PI * signed_frequency(j, m) / (m as f64 * dt);
            let w = z.norm_sqr();
            s0 += w;
            s1 += w * e;
            s2 += w * e * e;
        }
    }
    let mean_spec = s1 / s0;
    let var_spec = (s2 / s0 - mean_spec * mean_spec).max(0.0);

    let sigma_t = var_t.sqrt();
    let sigma_h = var_h.sqrt();
    Ok(DilationStats {
        p,
        mean_t_tilde: mean_t,
        sigma_t_tilde: sigma_t,
        mean_h_tilde: mean_h,
        sigma_h_tilde: sigma_h,
        sigma_h_tilde_spectral: var_spec.sqrt(),
        kennard_product: sigma_t * sigma_h,
        shifted_energy_floor: p * var_h,
        tail_fraction,
    })
}
