use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detection::{
    conditional_time_moments, detection_probability, uncertainty_product_report, DetectionRecord, ProductReport,
    TailTreatment,
};
use crate::energy::{
    energy_density, momentum_moments, sigma_e_dirichlet, sigma_e_operator, sigma_e_spectral, EnergyDensity,
    EnergyStats, MIN_PADDING,
};
use crate::error::{Error, Result, ResultExt};
use crate::geometry::Geometry;
use crate::propagator::{evolve_with, EvolveOptions};

use super::config::{ExperimentConfig, PotentialSpec, Prepared};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Passes when `value < tolerance`.
    Below,
    /// Passes when `value >= tolerance`.
    AtLeast,
}

/// One row of a residual table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            relation: Relation::Below,
            pass: value < tolerance,
        }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            relation: Relation::AtLeast,
            pass: value >= tolerance,
        }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Figures from the paired half-dx, half-dt run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedSummary {
    pub n_interior: usize,
    pub dt: f64,
    pub p_hat: f64,
    pub sigma_t: f64,
    pub sigma_e: f64,
    pub product: f64,
    pub norm_balance_defect: f64,
    pub flux_route_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub config_hash: String,
    pub geometry: String,
    pub n_interior: usize,
    pub dt: f64,
    pub steps: usize,
    /// Horizon of the truncated half-line; `None` for bounded domains.
    pub validity_window: Option<f64>,
    /// Norm^2 still in the domain at the end of the record.
    pub undetected: f64,
    pub mean_t: f64,
    pub tail: TailTreatment,
    /// Energy moments by every applicable route; the first is primary.
    pub energy: Vec<EnergyStats>,
    /// `sigma_T`, primary `sigma_E`, `p_hat`, product, bound, margin.
    pub uncertainty: ProductReport,
    pub delta_num: Option<f64>,
    pub refined: Option<RefinedSummary>,
    pub norm_balance_defect: f64,
    pub flux_route_discrepancy: f64,
    pub checks: Vec<Check>,
}

impl UncertaintyReport {
    pub fn all_pass(&self) -> bool {
        all_pass(&self.checks)
    }

    pub fn product(&self) -> f64 {
        self.uncertainty.product
    }

    pub fn bound(&self) -> f64 {
        self.uncertainty.bound
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A report together with the raw curves it was computed from.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: UncertaintyReport,
    pub record: DetectionRecord,
    pub density: Option<EnergyDensity>,
    /// Wall-clock time of the production run and of the refined run; kept
    /// out of the report so that reports stay reproducible.
    pub seconds: (f64, Option<f64>),
}

struct SingleRun {
    record: DetectionRecord,
    energy: Vec<EnergyStats>,
    density: Option<EnergyDensity>,
    product: ProductReport,
    mean_t: f64,
    tail: TailTreatment,
    undetected: f64,
}

/// `2 (x_truncate - support_right) / v_max` with `v_max = (|<p>| + 5 sigma_p)/m`:
/// the earliest time anything could return from the far wall.
pub fn validity_window(prepared: &Prepared) -> Result<Option<f64>> {
    let Geometry::HalfLine { x_truncate } = *prepared.grid.geometry() else {
        return Ok(None);
    };
    let psi = &prepared.psi;
    let (_, hi) = psi.support_indices().ok_or(Error::NoDetections)?;
    let right = prepared.grid.nodes()[hi];
    let (p1, p2) = momentum_moments(psi)?;
    let sigma_p = (p2 - p1 * p1).max(0.0).sqrt();
    let v_max = (p1.abs() + 5.0 * sigma_p) / psi.constants().mass;
    Ok(Some(2.0 * (x_truncate - right) / v_max))
}

fn energy_routes(config: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<EnergyStats>> {
    let psi = &prepared.psi;
    let mut routes = vec![sigma_e_operator(psi, prepared.potential.as_deref()).context("operator energy route")?];
    if let Some(shift) = config.potential.constant_value() {
        let shifted = |mut s: EnergyStats| {
            s.mean_e += shift;
            s
        };
        routes.push(shifted(sigma_e_spectral(psi, MIN_PADDING).context("spectral energy route")?));
        if matches!(config.geometry, Geometry::Interval { .. }) {
            let n = prepared.grid.n_interior();
            routes.push(shifted(sigma_e_dirichlet(psi, n).context("Dirichlet energy route")?));
        }
    }
    Ok(routes)
}

fn run_once(config: &ExperimentConfig, prepared: &Prepared, window: Option<f64>) -> Result<SingleRun> {
    let t_max = window.map_or(config.t_max, |w| w.min(config.t_max));
    let options = EvolveOptions {
        t_max,
        residual_target: prepared.grid.geometry().is_bounded().then_some(config.residual_target),
        validity_window: window,
    };
    let record = evolve_with(&prepared.propagator, &prepared.psi, &options, |_, _| {})
        .context("propagation")?
        .record;
    let stats = conditional_time_moments(&record).context("detection-time moments")?;
    let undetected = detection_probability(&record, None)?.undetected_estimate;
    let energy = energy_routes(config, prepared)?;
    let density = if config.potential == PotentialSpec::None {
        Some(energy_density(&prepared.psi).context("energy density")?)
    } else {
        None
    };
    let product = uncertainty_product_report(&stats, energy[0].sigma_e, config.constants);
    Ok(SingleRun {
        record,
        energy,
        density,
        product,
        mean_t: stats.mean_t,
        tail: stats.tail,
        undetected,
    })
}

fn max_pairwise_relative(values: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
        }
    }
    worst
}

/// State, propagation, detection statistics, energy by every applicable
/// route, and the uncertainty product, plus the paired refined run when
/// `convergence_check` is set. Deterministic for a fixed config.
pub fn run_experiment_full(config: &ExperimentConfig) -> Result<Experiment> {
    let clock = Instant::now();
    let base = config.prepare(false)?;
    let window = validity_window(&base)?;
    let run = run_once(config, &base, window)?;
    let base_seconds = clock.elapsed().as_secs_f64();
    let tol = config.tolerances;

    let clock = Instant::now();
    let refined = if config.convergence_check {
        let fine = config.prepare(true).context("refined run")?;
        let r = run_once(config, &fine, window).context("refined run")?;
        Some(RefinedSummary {
            n_interior: fine.grid.n_interior(),
            dt: fine.propagator.dt(),
            p_hat: r.product.p_hat,
            sigma_t: r.product.sigma_t,
            sigma_e: r.product.sigma_e,
            product: r.product.product,
            norm_balance_defect: r.record.norm_balance_defect(),
            flux_route_discrepancy: r.record.flux_route_discrepancy(),
        })
    } else {
        None
    };
    let refined_seconds = refined.is_some().then(|| clock.elapsed().as_secs_f64());
    let delta_num = refined.map(|r| (run.product.product - r.product).abs() / r.product.abs());

    let norm_balance_defect = run.record.norm_balance_defect();
    let flux = run.record.flux_route_discrepancy();
    let mut checks = vec![
        Check::below("norm_balance", norm_balance_defect.abs(), tol.norm_balance),
        Check::below("flux_routes", flux, tol.flux_routes),
    ];
    if let Some(r) = &refined {
        checks.push(Check::below("norm_balance_refined", r.norm_balance_defect.abs(), tol.norm_balance));
    }
    if run.energy.len() > 1 {
        let sigmas: Vec<f64> = run.energy.iter().map(|s| s.sigma_e).collect();
        checks.push(Check::below("energy_routes", max_pairwise_relative(&sigmas), tol.energy_routes));
    }
    if let Some(d) = delta_num {
        checks.push(Check::below("delta_num", d, tol.delta_num));
    }
    let scaled_bound = run.product.bound * (1.0 - delta_num.unwrap_or(0.0));
    checks.push(Check::at_least("uncertainty_bound", run.product.product, scaled_bound));

    let report = UncertaintyReport {
        config_hash: config.hash(),
        geometry: config.geometry.name().to_string(),
        n_interior: base.grid.n_interior(),
        dt: base.propagator.dt(),
        steps: run.record.len(),
        validity_window: window,
        undetected: run.undetected,
        mean_t: run.mean_t,
        tail: run.tail,
        energy: run.energy,
        uncertainty: run.product,
        delta_num,
        refined,
        norm_balance_defect,
        flux_route_discrepancy: flux,
        checks,
    };
    Ok(Experiment {
        report,
        record: run.record,
        density: run.density,
        seconds: (base_seconds, refined_seconds),
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<UncertaintyReport> {
    run_experiment_full(config).map(|e| e.report)
}
