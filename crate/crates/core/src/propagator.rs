//! Non-self-adjoint discrete Hamiltonian with the absorbing Robin boundary
//! condition `n . grad psi = i kappa psi`, and Crank-Nicolson propagation.
//!
//! Internally states are stored in the orthonormal coordinates
//! `chi_k = sqrt(w_k) psi_k` (`w_k` the trapezoidal weights). In these
//! coordinates the Hamiltonian is complex symmetric with real off-diagonal,
//! its anti-Hermitian part is diagonal and supported on the absorbing
//! boundary nodes only, and the Crank-Nicolson map is a Cayley transform of a
//! dissipative matrix, hence a contraction in the plain Euclidean norm.
//!
//! Ghost-node elimination of the centred Robin condition: at an absorbing
//! end `b` with inner neighbour `b'`, `psi_ghost = psi_b' + 2 i kappa dx psi_b`.
//! For the ball the reduced function obeys `u'(R) = (1/R + i kappa) u(R)`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::detection::DetectionRecord;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, Geometry, Grid, PhysicalConstants, Side};
use crate::state::{DetectorSpec, WaveFunction};
use crate::tridiag::TridiagonalLu;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BoundaryNode {
    pub side: Side,
    /// Index into the active (unknown) vector.
    pub active: usize,
    /// Index into the grid.
    pub node: usize,
    /// Trapezoidal weight of the node.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteHamiltonian {
    grid: Arc<Grid>,
    constants: PhysicalConstants,
    detector: DetectorSpec,
    potential: Option<Vec<f64>>,
    energy_offset: f64,
    first: usize,
    diag: Vec<Complex64>,
    offdiag: Vec<f64>,
    sqrt_w: Vec<f64>,
    boundary: Vec<BoundaryNode>,
}

/// Assembles `H` for the grid's geometry. `potential`, if given, is sampled on
/// every grid node. Its minimum over the active nodes is split off as a scalar
/// energy offset that only contributes a global phase to the evolution.
pub fn assemble_hamiltonian(
    grid: &Arc<Grid>,
    constants: PhysicalConstants,
    detector: DetectorSpec,
    potential: Option<&[f64]>,
) -> Result<DiscreteHamiltonian> {
    constants.validate()?;
    if !(detector.kappa.is_finite() && detector.kappa >= 0.0) {
        return Err(Error::invalid("kappa", "must be finite and non-negative"));
    }
    if let Some(v) = potential {
        if v.len() != grid.len() {
            return Err(Error::invalid(
                "potential",
                format!("{} samples for {} grid nodes", v.len(), grid.len()),
            ));
        }
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "potential",
                index,
            });
        }
    }

    let geometry = *grid.geometry();
    let n_nodes = grid.len();
    let first = match geometry.boundary_kind(Side::Left) {
        BoundaryKind::Absorbing => 0,
        BoundaryKind::DirichletWall => 1,
    };
    let last = match geometry.boundary_kind(Side::Right) {
        BoundaryKind::Absorbing => n_nodes - 1,
        BoundaryKind::DirichletWall => n_nodes - 2,
    };
    let n = last - first + 1;

    let h = grid.dx();
    let c = constants.kinetic();
    let kappa = detector.kappa;
    let stiff = c / (h * h);

    let energy_offset = potential
        .map(|v| v[first..=last].iter().copied().fold(f64::INFINITY, f64::min))
        .unwrap_or(0.0);
    let v_at = |node: usize| potential.map(|v| v[node] - energy_offset).unwrap_or(0.0);

    let mut diag = Vec::with_capacity(n);
    let mut sqrt_w = Vec::with_capacity(n);
    let mut boundary = Vec::new();
    for node in first..=last {
        let w = grid.weight(node);
        sqrt_w.push(w.sqrt());
        let is_end = node == 0 || node == n_nodes - 1;
        let d = if is_end {
            let side = if node == 0 { Side::Left } else { Side::Right };
            boundary.push(BoundaryNode {
                side,
                active: node - first,
                node,
                weight: w,
            });
            // ghost-node Robin row
            let curvature = match geometry {
                Geometry::Ball { radius } => h / radius,
                _ => 0.0,
            };
            Complex64::new(stiff * (2.0 - 2.0 * curvature), -2.0 * stiff * kappa * h)
        } else {
            Complex64::new(2.0 * stiff, 0.0)
        };
        diag.push(d + v_at(node));
    }

    // symmetrized off-diagonal: -c/h^2 between interior nodes, -sqrt(2) c/h^2
    // next to a half-weight end node
    let offdiag = (first..last)
        .map(|node| {
            let touches_end = node == 0 || node + 1 == n_nodes - 1;
            if touches_end {
                -std::f64::consts::SQRT_2 * stiff
            } else {
                -stiff
            }
        })
        .collect();

    Ok(DiscreteHamiltonian {
        grid: grid.clone(),
        constants,
        detector,
        potential: potential.map(|v| v.to_vec()),
        energy_offset,
        first,
        diag,
        offdiag,
        sqrt_w,
        boundary,
    })
}

impl DiscreteHamiltonian {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn constants(&self) -> PhysicalConstants {
        self.constants
    }

    pub fn detector(&self) -> DetectorSpec {
        self.detector
    }

    pub fn potential(&self) -> Option<&[f64]> {
        self.potential.as_deref()
    }

    /// Scalar part of the potential removed from the matrix.
    pub fn energy_offset(&self) -> f64 {
        self.energy_offset
    }

    /// Number of unknowns (grid nodes minus hard-wall nodes).
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Diagonal of the symmetrized matrix, offset excluded.
    pub fn diagonal(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.offdiag
    }

    pub(crate) fn absorbing_nodes(&self) -> impl Iterator<Item = &BoundaryNode> {
        let geometry = *self.grid.geometry();
        self.boundary
            .iter()
            .filter(move |b| geometry.boundary_kind(b.side) == BoundaryKind::Absorbing)
    }

    pub(crate) fn to_scaled(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.sqrt_w
            .iter()
            .enumerate()
            .map(|(j, s)| values[self.first + j] * s)
            .collect()
    }

    pub(crate) fn unscale(&self, chi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.grid.len()];
        for (j, (x, s)) in chi.iter().zip(&self.sqrt_w).enumerate() {
            out[self.first + j] = x / s;
        }
        out
    }

    /// `S chi` in orthonormal coordinates, offset excluded.
    pub(crate) fn apply_scaled(&self, chi: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim();
        for j in 0..n {
            let mut acc = self.diag[j] * chi[j];
            if j > 0 {
                acc += chi[j - 1] * self.offdiag[j - 1];
            }
            if j + 1 < n {
                acc += chi[j + 1] * self.offdiag[j];
            }
            out[j] = acc;
        }
    }

    /// `H psi` on grid values, including the energy offset. Hard-wall nodes map to zero.
    pub fn apply(&self, psi: &WaveFunction) -> Result<Vec<Complex64>> {
        if psi.grid() != &*self.grid {
            return Err(Error::GridMismatch);
        }
        let chi = self.to_scaled(psi.values());
        let mut out = vec![ZERO; chi.len()];
        self.apply_scaled(&chi, &mut out);
        for (o, x) in out.iter_mut().zip(&chi) {
            *o += x * self.energy_offset;
        }
        Ok(self.unscale(&out))
    }

    /// Relative residual of `-(i/hbar)(H* - H) = (hbar kappa / m) B`, with `B`
    /// the boundary concentration `psi -> sum_b |b><b|` in the trapezoidal
    /// inner product. Zero up to rounding for this discretization.
    pub fn skew_identity_residual(&self) -> f64 {
        let hbar = self.constants.hbar;
        let rate = hbar * self.detector.kappa / self.constants.mass;
        let scale = self
            .diag
            .iter()
            .map(|d| d.norm())
            .chain(self.offdiag.iter().map(|o| o.abs()))
            .fold(0.0_f64, f64::max);
        // in orthonormal coordinates H* - H = diag(-2i Im S_jj); off-diagonal
        // skew parts vanish identically because the matrix is symmetric with
        // real off-diagonal
        let mut max_dev = 0.0_f64;
        for (j, d) in self.diag.iter().enumerate() {
            let lhs = -2.0 * d.im / hbar;
            let rhs = self
                .absorbing_nodes()
                .find(|b| b.active == j)
                .map(|b| rate / b.weight)
                .unwrap_or(0.0);
            max_dev = max_dev.max((lhs - rhs).abs());
        }
        max_dev / scale.max(f64::MIN_POSITIVE)
    }

    /// `Im <psi, H psi>`; never positive for this operator.
    pub fn dissipation(&self, psi: &WaveFunction) -> Result<f64> {
        let h_psi = self.apply(psi)?;
        let grid = psi.grid();
        Ok(psi
            .values()
            .iter()
            .zip(&h_psi)
            .enumerate()
            .map(|(k, (a, b))| (a.conj() * b).im * grid.weight(k))
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxSample {
    pub t: f64,
    /// Outward current `n . j` at each absorbing boundary element.
    pub prob1: Vec<f64>,
    /// `(hbar kappa / m) |psi|^2` at each absorbing boundary element.
    pub prob2: Vec<f64>,
    /// Boundary amplitudes `psi_b` (reduced `u(R)` for the ball).
    pub amplitudes: Vec<Complex64>,
    /// Change of the boundary amplitude over the step, global offset phase
    /// excluded. Crank-Nicolson gives `S psi_mid = i hbar (psi_{k+1} - psi_k) / dt`
    /// for the offset-free generator `S`. Zero outside a propagation run.
    pub step_difference: Vec<Complex64>,
    pub norm_sq: f64,
}

/// Both boundary densities of the detection rule for `psi`.
pub fn boundary_flux_densities(psi: &WaveFunction, detector: DetectorSpec) -> FluxSample {
    let grid = psi.grid();
    let sides = grid.geometry().absorbing_sides();
    let c = psi.constants();
    let v = psi.values();
    let h = grid.dx();
    let mut prob1 = Vec::with_capacity(sides.len());
    let mut prob2 = Vec::with_capacity(sides.len());
    let mut amplitudes = Vec::with_capacity(sides.len());
    for side in sides {
        let (amp, flux) = match side {
            Side::Left => (v[0], one_sided_current(v[0], v[1], v[2], -1.0, h)),
            Side::Right => {
                let e = v.len() - 1;
                (v[e], one_sided_current(v[e], v[e - 1], v[e - 2], 1.0, h))
            }
        };
        prob1.push(c.hbar / c.mass * flux);
        prob2.push(c.hbar * detector.kappa / c.mass * amp.norm_sqr());
        amplitudes.push(amp);
    }
    FluxSample {
        t: 0.0,
        prob1,
        prob2,
        step_difference: vec![ZERO; amplitudes.len()],
        amplitudes,
        norm_sq: psi.norm_sq(),
    }
}

/// `Im[conj(psi_b) n . grad psi]` with the second-order one-sided gradient;
/// `outward` is the sign of the normal along the grid direction.
fn one_sided_current(b: Complex64, b1: Complex64, b2: Complex64, outward: f64, h: f64) -> f64 {
    // derivative along increasing x at the end node, pointing into the domain
    // for the left end and out of it for the right end
    let grad = if outward < 0.0 {
        (-3.0 * b + 4.0 * b1 - b2) / (2.0 * h)
    } else {
        (3.0 * b - 4.0 * b1 + b2) / (2.0 * h)
    };
    outward * (b.conj() * grad).im
}

/// Crank-Nicolson propagator `(I + i dt H / 2 hbar)^{-1} (I - i dt H / 2 hbar)`
/// with the tridiagonal implicit factor prefactored.
#[derive(Debug, Clone)]
pub struct Propagator {
    hamiltonian: DiscreteHamiltonian,
    dt: f64,
    implicit: TridiagonalLu,
    explicit_diag: Vec<Complex64>,
    explicit_off: Vec<Complex64>,
    phase: Complex64,
}

impl Propagator {
    pub fn new(hamiltonian: DiscreteHamiltonian, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        let a = I * (dt / (2.0 * hamiltonian.constants.hbar));
        let off: Vec<Complex64> = hamiltonian.offdiag.iter().map(|&o| a * o).collect();
        let implicit_diag: Vec<Complex64> =
            hamiltonian.diag.iter().map(|&d| Complex64::new(1.0, 0.0) + a * d).collect();
        let implicit = TridiagonalLu::factor(&off, &implicit_diag, &off)?;
        let explicit_diag = hamiltonian.diag.iter().map(|&d| Complex64::new(1.0, 0.0) - a * d).collect();
        let explicit_off = off.iter().map(|o| -o).collect();
        let phase = Complex64::from_polar(1.0, -hamiltonian.energy_offset * dt / hamiltonian.constants.hbar);
        Ok(Self {
            hamiltonian,
            dt,
            implicit,
            explicit_diag,
            explicit_off,
            phase,
        })
    }

    pub fn hamiltonian(&self) -> &DiscreteHamiltonian {
        &self.hamiltonian
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.hamiltonian.grid
    }

    /// One step in orthonormal coordinates; `scratch` has the same length as `chi`.
    /// Leaves the global phase from the energy offset out. Returns the new `|chi|^2`.
    fn step_scaled_no_phase(&self, chi: &mut [Complex64], scratch: &mut [Complex64]) -> f64 {
        self.implicit
            .solve_applied(&self.explicit_diag, &self.explicit_off, chi, scratch)
    }

    pub(crate) fn step_scaled(&self, chi: &mut [Complex64], scratch: &mut [Complex64]) {
        self.step_scaled_no_phase(chi, scratch);
        if self.phase != Complex64::new(1.0, 0.0) {
            chi.iter_mut().for_each(|x| *x *= self.phase);
        }
    }

    fn check_grid(&self, psi: &WaveFunction) -> Result<()> {
        if psi.grid() != &**self.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// One Crank-Nicolson step.
pub fn cn_step(prop: &Propagator, psi: &WaveFunction) -> Result<WaveFunction> {
    prop.check_grid(psi)?;
    let h = &prop.hamiltonian;
    let mut chi = h.to_scaled(psi.values());
    let mut scratch = vec![ZERO; chi.len()];
    prop.step_scaled(&mut chi, &mut scratch);
    Ok(WaveFunction::from_parts_unchecked(
        psi.grid_arc().clone(),
        psi.constants(),
        h.unscale(&chi),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub t_max: f64,
    /// Stop as soon as the remaining norm^2 drops below this value.
    pub residual_target: Option<f64>,
    /// Recorded on the resulting [`DetectionRecord`].
    pub validity_window: Option<f64>,
}

impl EvolveOptions {
    pub fn until(t_max: f64) -> Self {
        Self {
            t_max,
            residual_target: None,
            validity_window: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub record: DetectionRecord,
    pub final_state: WaveFunction,
}

/// Evolves `psi0` from 0 to `t_max` (rounded to whole steps), calling
/// `observer` with the boundary sample at each step midpoint.
pub fn evolve<F>(prop: &Propagator, psi0: &WaveFunction, t_max: f64, observer: F) -> Result<DetectionRecord>
where
    F: FnMut(usize, &FluxSample),
{
    evolve_with(prop, psi0, &EvolveOptions::until(t_max), observer).map(|e| e.record)
}

pub fn evolve_with<F>(
    prop: &Propagator,
    psi0: &WaveFunction,
    options: &EvolveOptions,
    mut observer: F,
) -> Result<Evolution>
where
    F: FnMut(usize, &FluxSample),
{
    prop.check_grid(psi0)?;
    if !(options.t_max.is_finite() && options.t_max >= 0.0) {
        return Err(Error::invalid("t_max", format!("must be non-negative, got {}", options.t_max)));
    }
    let ham = &prop.hamiltonian;
    let grid = ham.grid.clone();
    let geometry = *grid.geometry();
    let constants = ham.constants;
    let dt = prop.dt;
    let n_steps = (options.t_max / dt).round() as usize;

    let absorbing: Vec<BoundaryNode> = ham.absorbing_nodes().copied().collect();
    let labels = absorbing
        .iter()
        .map(|b| geometry.side_label(b.side).to_string())
        .collect();
    let rate = constants.hbar * ham.detector.kappa / constants.mass;
    let h = grid.dx();

    // active indices of the end node and its two inner neighbours
    let stencils: Vec<[usize; 3]> = absorbing
        .iter()
        .map(|b| match b.side {
            Side::Left => [b.active, b.active + 1, b.active + 2],
            Side::Right => [b.active, b.active - 1, b.active - 2],
        })
        .collect();

    let mut chi = ham.to_scaled(psi0.values());
    let mut scratch = vec![ZERO; chi.len()];
    let mut norm_sq: f64 = chi.iter().map(|x| x.norm_sqr()).sum();
    let initial_norm_sq = norm_sq;

    let mut record = DetectionRecord::empty(dt, labels, geometry.is_bounded(), initial_norm_sq);
    record.validity_window = options.validity_window;
    record.reserve(n_steps.min(1 << 22));

    let mut before = vec![[ZERO; 3]; absorbing.len()];
    let mut sample = FluxSample {
        t: 0.0,
        prob1: vec![0.0; absorbing.len()],
        prob2: vec![0.0; absorbing.len()],
        amplitudes: vec![ZERO; absorbing.len()],
        step_difference: vec![ZERO; absorbing.len()],
        norm_sq,
    };

    for k in 0..n_steps {
        if let Some(target) = options.residual_target {
            if norm_sq < target {
                break;
            }
        }
        for (slot, idx) in before.iter_mut().zip(&stencils) {
            for (s, &i) in slot.iter_mut().zip(idx) {
                *s = chi[i];
            }
        }
        let new_norm_sq = prop.step_scaled_no_phase(&mut chi, &mut scratch);
        for (b, ((slot, idx), node)) in before.iter().zip(&stencils).zip(&absorbing).enumerate() {
            // midpoint values in grid coordinates
            let mid = |j: usize| {
                let i = idx[j];
                0.5 * (slot[j] + chi[i]) / ham.sqrt_w[i]
            };
            let (m0, m1, m2) = (mid(0), mid(1), mid(2));
            let outward = if node.side == Side::Left { -1.0 } else { 1.0 };
            sample.amplitudes[b] = m0;
            sample.step_difference[b] = (chi[idx[0]] - slot[0]) / ham.sqrt_w[idx[0]];
            sample.prob2[b] = rate * m0.norm_sqr();
            sample.prob1[b] = constants.hbar / constants.mass * one_sided_current(m0, m1, m2, outward, h);
        }
        if prop.phase != Complex64::new(1.0, 0.0) {
            chi.iter_mut().for_each(|x| *x *= prop.phase);
        }
        sample.t = (k as f64 + 0.5) * dt;
        sample.norm_sq = new_norm_sq;
        record.push_step((norm_sq - new_norm_sq) / dt, &sample.prob1, &sample.prob2, new_norm_sq);
        observer(k, &sample);
        norm_sq = new_norm_sq;
    }

    let final_state = WaveFunction::from_parts_unchecked(grid, constants, ham.unscale(&chi));
    Ok(Evolution { record, final_state })
}
