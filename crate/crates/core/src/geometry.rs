//! Simulation geometries, physical constants and uniform grids.
//!
//! All geometries reduce to a one-dimensional uniform grid on `[0, extent]`.
//! For the ball the grid carries the reduced radial function `u(r) = r psi(r)`,
//! whose regularity condition `u(0) = 0` behaves like a hard wall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of interior nodes.
pub const MIN_INTERIOR_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        let c = Self { hbar, mass };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::invalid("hbar", format!("must be positive, got {}", self.hbar)));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid("mass", format!("must be positive, got {}", self.mass)));
        }
        Ok(())
    }

    /// Kinetic prefactor `hbar^2 / 2m`.
    pub fn kinetic(&self) -> f64 {
        self.hbar * self.hbar / (2.0 * self.mass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Absorbing,
    DirichletWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Interval {
        length: f64,
        left: BoundaryKind,
        right: BoundaryKind,
    },
    /// Half-line `x > 0` with the detector at the origin, truncated by a hard
    /// wall at `x_truncate`.
    HalfLine { x_truncate: f64 },
    /// Ball of radius `radius`, spherically symmetric states only.
    Ball { radius: f64 },
}

impl Geometry {
    pub fn interval(length: f64) -> Self {
        Geometry::Interval {
            length,
            left: BoundaryKind::Absorbing,
            right: BoundaryKind::Absorbing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (name, value) = match *self {
            Geometry::Interval { length, .. } => ("length", length),
            Geometry::HalfLine { x_truncate } => ("x_truncate", x_truncate),
            Geometry::Ball { radius } => ("radius", radius),
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::invalid(name, format!("must be positive, got {value}")));
        }
        if let Geometry::Interval { left, right, .. } = *self {
            if left != BoundaryKind::Absorbing && right != BoundaryKind::Absorbing {
                return Err(Error::invalid(
                    "geometry",
                    "interval needs at least one absorbing boundary",
                ));
            }
        }
        Ok(())
    }

    /// Length of the computational domain.
    pub fn extent(&self) -> f64 {
        match *self {
            Geometry::Interval { length, .. } => length,
            Geometry::HalfLine { x_truncate } => x_truncate,
            Geometry::Ball { radius } => radius,
        }
    }

    pub fn boundary_kind(&self, side: Side) -> BoundaryKind {
        match (*self, side) {
            (Geometry::Interval { left, .. }, Side::Left) => left,
            (Geometry::Interval { right, .. }, Side::Right) => right,
            (Geometry::HalfLine { .. }, Side::Left) => BoundaryKind::Absorbing,
            (Geometry::HalfLine { .. }, Side::Right) => BoundaryKind::DirichletWall,
            (Geometry::Ball { .. }, Side::Left) => BoundaryKind::DirichletWall,
            (Geometry::Ball { .. }, Side::Right) => BoundaryKind::Absorbing,
        }
    }

    /// Absorbing boundary elements, left to right.
    pub fn absorbing_sides(&self) -> Vec<Side> {
        [Side::Left, Side::Right]
            .into_iter()
            .filter(|&s| self.boundary_kind(s) == BoundaryKind::Absorbing)
            .collect()
    }

    /// Detection is certain (`p = 1`) for bounded regions.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, Geometry::HalfLine { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Interval { .. } => "interval",
            Geometry::HalfLine { .. } => "half_line",
            Geometry::Ball { .. } => "ball",
        }
    }

    /// Column label for a boundary element.
    pub fn side_label(&self, side: Side) -> &'static str {
        match (self, side) {
            (Geometry::Ball { .. }, Side::Right) => "sphere",
            (Geometry::Ball { .. }, Side::Left) => "origin",
            (_, Side::Left) => "left",
            (_, Side::Right) => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_interior: usize,
    dx: f64,
    nodes: Vec<f64>,
    geometry: Geometry,
}

/// Uniform grid on `[0, extent]` with `n_interior + 2` nodes including both ends.
pub fn build_grid(geometry: Geometry, n_interior: usize) -> Result<Grid> {
    geometry.validate()?;
    if n_interior < MIN_INTERIOR_NODES {
        return Err(Error::InsufficientResolution {
            n_interior,
            min: MIN_INTERIOR_NODES,
        });
    }
    let extent = geometry.extent();
    let dx = extent / (n_interior + 1) as f64;
    let mut nodes: Vec<f64> = (0..n_interior + 2).map(|k| k as f64 * dx).collect();
    // pin the far end exactly on the boundary
    *nodes.last_mut().unwrap() = extent;
    Ok(Grid {
        n_interior,
        dx,
        nodes,
        geometry,
    })
}

impl Grid {
    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// Total node count including both boundary nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn extent(&self) -> f64 {
        self.geometry.extent()
    }

    pub fn node_index(&self, side: Side) -> usize {
        match side {
            Side::Left => 0,
            Side::Right => self.nodes.len() - 1,
        }
    }

    /// Trapezoidal quadrature weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.nodes.len() {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// Grid with half the spacing over the same geometry.
    pub fn refined(&self) -> Result<Grid> {
        build_grid(self.geometry, 2 * (self.n_interior + 1) - 1)
    }
}
