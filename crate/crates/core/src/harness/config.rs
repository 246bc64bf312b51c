use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, ResultExt};
use crate::geometry::{build_grid, Geometry, Grid, PhysicalConstants, MIN_INTERIOR_NODES};
use crate::propagator::{assemble_hamiltonian, Propagator};
use crate::state::{make_bump, make_gaussian, make_mode_superposition, DetectorSpec, WaveFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Gaussian { x0: f64, p0: f64, sigma_x: f64 },
    Bump { center: f64, half_width: f64, p0: f64 },
    /// Dirichlet-mode coefficients `[re, im]`, lowest mode first. Parsed so
    /// that experiments can reject it with a reason: the modes are not in the
    /// domain of the absorbing-boundary Hamiltonian.
    Modes { coefficients: Vec<[f64; 2]> },
}

impl StateSpec {
    pub fn build(&self, grid: &Arc<Grid>, constants: PhysicalConstants) -> Result<WaveFunction> {
        match self {
            StateSpec::Gaussian { x0, p0, sigma_x } => make_gaussian(grid, constants, *x0, *p0, *sigma_x),
            StateSpec::Bump { center, half_width, p0 } => make_bump(grid, constants, *center, *half_width, *p0),
            StateSpec::Modes { coefficients } => {
                let c: Vec<Complex64> = coefficients.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
                make_mode_superposition(grid, constants, &c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    None,
    Constant { value: f64 },
    /// `height exp(1 - 1/(1 - s^2))` for `|s| < 1`, `s = (x - center)/half_width`;
    /// smooth, bounded, peak value `height`.
    Bump { center: f64, half_width: f64, height: f64 },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |name, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be finite"))
            }
        };
        match *self {
            PotentialSpec::None => Ok(()),
            PotentialSpec::Constant { value } => finite("potential.value", value),
            PotentialSpec::Bump { center, half_width, height } => {
                finite("potential.center", center)?;
                finite("potential.height", height)?;
                if !(half_width.is_finite() && half_width > 0.0) {
                    return Err(Error::invalid("potential.half_width", "must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Samples on every grid node; `None` for the free case.
    pub fn sample(&self, grid: &Grid) -> Option<Vec<f64>> {
        match *self {
            PotentialSpec::None => None,
            PotentialSpec::Constant { value } => Some(vec![value; grid.len()]),
            PotentialSpec::Bump { center, half_width, height } => Some(
                grid.nodes()
                    .iter()
                    .map(|&x| {
                        let s = (x - center) / half_width;
                        if s.abs() >= 1.0 {
                            0.0
                        } else {
                            height * (1.0 - 1.0 / (1.0 - s * s)).exp()
                        }
                    })
                    .collect(),
            ),
        }
    }

    /// Value of a spatially constant potential (zero for none), `None` otherwise.
    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            PotentialSpec::None => Some(0.0),
            PotentialSpec::Constant { value } => Some(value),
            PotentialSpec::Bump { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `|1 - ||psi_T||^2 - sum w dt|`.
    pub norm_balance: f64,
    /// Relative L2-in-time difference of the two boundary-density routes.
    pub flux_routes: f64,
    /// Pairwise relative difference of `sigma_E` between routes.
    pub energy_routes: f64,
    /// Largest acceptable convergence estimate.
    pub delta_num: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm_balance: 1e-12,
            flux_routes: 1e-3,
            energy_routes: 1e-3,
            delta_num: 0.01,
        }
    }
}

/// Box for the product search; each entry is `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub x0: [f64; 2],
    pub p0: [f64; 2],
    pub sigma_x: [f64; 2],
    pub kappa: [f64; 2],
}

impl SearchBox {
    pub fn bounds(&self) -> [[f64; 2]; 4] {
        [self.x0, self.p0, self.sigma_x, self.kappa]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in ["search.x0", "search.p0", "search.sigma_x", "search.kappa"]
            .into_iter()
            .zip(self.bounds())
        {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(name, format!("need finite lo <= hi, got [{lo}, {hi}]")));
            }
        }
        if !(self.sigma_x[0] > 0.0 && self.kappa[0] > 0.0) {
            return Err(Error::invalid("search", "sigma_x and kappa ranges must be positive"));
        }
        Ok(())
    }
}

fn default_residual_target() -> f64 {
    1e-8
}

fn yes() -> bool {
    true
}

/// One experiment. `n_interior` counts unknown nodes, so `dx = L/(n_interior + 1)`;
/// `dt` defaults to `dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub n_interior: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub constants: PhysicalConstants,
    pub kappa: f64,
    pub state: StateSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub t_max: f64,
    /// Bounded runs stop once the undetected norm^2 falls below this.
    #[serde(default = "default_residual_target")]
    pub residual_target: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Run the paired half-dx, half-dt simulation that yields `delta_num`.
    #[serde(default = "yes")]
    pub convergence_check: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchBox>,
}

/// Everything needed to propagate one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: Arc<Grid>,
    pub psi: WaveFunction,
    pub potential: Option<Vec<f64>>,
    pub propagator: Propagator,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Checks every parameter, including that the initial state vanishes on
    /// and near the boundary, without propagating anything.
    pub fn validate(&self) -> Result<()> {
        self.prepare(false).map(|_| ())
    }

    fn check_scalars(&self) -> Result<()> {
        self.geometry.validate()?;
        self.constants.validate()?;
        if self.n_interior < MIN_INTERIOR_NODES {
            return Err(Error::InsufficientResolution {
                n_interior: self.n_interior,
                min: MIN_INTERIOR_NODES,
            });
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
            }
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::invalid("kappa", "must be positive; a reflecting boundary never detects"));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::invalid("t_max", format!("must be positive, got {}", self.t_max)));
        }
        if !(self.residual_target > 0.0 && self.residual_target < 1.0) {
            return Err(Error::invalid("residual_target", "must lie in (0, 1)"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.norm_balance", t.norm_balance),
            ("tolerances.flux_routes", t.flux_routes),
            ("tolerances.energy_routes", t.energy_routes),
            ("tolerances.delta_num", t.delta_num),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if let StateSpec::Modes { .. } = self.state {
            return Err(Error::BoundaryHypothesis(
                "Dirichlet modes extend to the boundary and have a nonzero normal derivative there; \
                 initial states must vanish near the boundary so that psi and H psi vanish on it"
                    .into(),
            ));
        }
        self.potential.validate()?;
        if let Some(b) = &self.search {
            b.validate()?;
        }
        Ok(())
    }

    /// Builds grid, state, potential and propagator; `refined` halves both
    /// `dx` and `dt`.
    pub fn prepare(&self, refined: bool) -> Result<Prepared> {
        self.check_scalars()?;
        let mut grid = build_grid(self.geometry, self.n_interior)?;
        let mut dt = self.dt.unwrap_or(grid.dx());
        if refined {
            grid = grid.refined()?;
            dt /= 2.0;
        }
        let grid = Arc::new(grid);
        let psi = self.state.build(&grid, self.constants).context("initial state")?;
        let potential = self.potential.sample(&grid);
        let ham = assemble_hamiltonian(&grid, self.constants, DetectorSpec::new(self.kappa)?, potential.as_deref())?;
        let propagator = Propagator::new(ham, dt)?;
        Ok(Prepared {
            grid,
            psi,
            potential,
            propagator,
        })
    }
}
