use serde::{Deserialize, Serialize};

use crate::detection::detection_probability;
use crate::energy::sigma_e_operator;
use crate::error::{Result, ResultExt};
use crate::oplab::{
    build_dense, build_dilation_field, dilation_stats, intertwine_check, povm_completeness,
    semigroup_contraction_check, spectrum_check, ContractionReport, DilationStats, PovmReport, SpectrumReport,
};
use crate::propagator::EvolveOptions;

use super::config::ExperimentConfig;
use super::run::{all_pass, Check};

/// Skew-part identity residual treated as exact.
pub const MACHINE_RESIDUAL: f64 = 1e-12;
pub const CONTRACTION_SLACK: f64 = 1e-10;
pub const POVM_TOLERANCE: f64 = 1e-6;
pub const MAX_IMAGINARY_PART: f64 = 1e-10;
/// Largest `||W_T||^2` accepted as "never detected has vanished".
pub const UNDETECTED_TOLERANCE: f64 = 1e-8;
pub const DILATION_NORM_TOLERANCE: f64 = 1e-6;
pub const INTERTWINE_TOLERANCE: f64 = 1e-8;
pub const GENERATOR_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub config_hash: String,
    pub dim: usize,
    pub skew_identity_residual: f64,
    pub boundary_rank: usize,
    pub absorbing_boundaries: usize,
    pub contraction: ContractionReport,
    /// Completeness at the horizon `t_max`.
    pub povm: PovmReport,
    pub max_imaginary_part: f64,
    pub gamma_min: f64,
    pub checks: Vec<Check>,
}

impl OperatorReport {
    pub fn all_pass(&self) -> bool {
        all_pass(&self.checks)
    }
}

fn horizon_steps(config: &ExperimentConfig, dt: f64) -> usize {
    ((config.t_max / dt).round() as usize).max(1)
}

/// Dense-matrix identities of the configured scheme: skew part concentrated
/// on the boundary, contraction semigroup, POVM completeness up to `t_max`,
/// dissipative spectrum and, on bounded domains, vanishing of the never-detected
/// part at `t_max`.
pub fn operator_check(config: &ExperimentConfig) -> Result<OperatorReport> {
    let prepared = config.prepare(false)?;
    let ops = build_dense(&prepared.propagator)?;
    let k = horizon_steps(config, ops.dt());
    let mut steps: Vec<usize> = std::iter::successors(Some(1usize), |s| s.checked_mul(4))
        .take_while(|&s| s < k)
        .collect();
    steps.insert(0, 0);
    steps.push(k);
    let contraction = semigroup_contraction_check(&ops, &steps);
    let povm = povm_completeness(&ops, k);
    let spectrum = spectrum_check(&ops)?;
    let skew = ops.skew_identity_residual();

    let mut checks = vec![
        Check::below("skew_identity", skew, MACHINE_RESIDUAL),
        Check::at_least(
            "boundary_rank",
            ops.boundary_rank() as f64,
            ops.absorbing_boundaries() as f64,
        ),
        Check::below("contraction", contraction.max_norm - 1.0, CONTRACTION_SLACK),
        Check::below("semigroup", contraction.semigroup_defect, CONTRACTION_SLACK),
        Check::below("povm_completeness", povm.residual, POVM_TOLERANCE),
        Check::below("max_imaginary_part", spectrum.max_im, MAX_IMAGINARY_PART),
    ];
    if config.geometry.is_bounded() {
        checks.push(Check::below("never_detected", povm.undetected_norm, UNDETECTED_TOLERANCE));
    }
    Ok(OperatorReport {
        config_hash: config.hash(),
        dim: ops.dim(),
        skew_identity_residual: skew,
        boundary_rank: ops.boundary_rank(),
        absorbing_boundaries: ops.absorbing_boundaries(),
        contraction,
        povm,
        max_imaginary_part: spectrum.max_im,
        gamma_min: spectrum.gamma_min,
        checks,
    })
}

/// Eigenvalues of the dense generator.
pub fn spectrum(config: &ExperimentConfig) -> Result<SpectrumReport> {
    let prepared = config.prepare(false)?;
    spectrum_check(&build_dense(&prepared.propagator)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationReport {
    pub config_hash: String,
    pub p_hat: f64,
    pub stats: DilationStats,
    pub sigma_e: f64,
    pub generator_defect: f64,
    pub intertwine_defect: f64,
    pub intertwine_shift_steps: usize,
    /// Relative change of the Kennard product under half dx, half dt.
    pub delta_num: Option<f64>,
    pub checks: Vec<Check>,
}

impl DilationReport {
    pub fn all_pass(&self) -> bool {
        all_pass(&self.checks)
    }
}

fn dilate(config: &ExperimentConfig, refined: bool) -> Result<(DilationStats, f64, f64, f64, usize)> {
    let p = config.prepare(refined)?;
    let bounded = p.grid.geometry().is_bounded();
    let options = EvolveOptions {
        t_max: config.t_max,
        residual_target: bounded.then_some(config.residual_target),
        validity_window: None,
    };
    let (field, record) = build_dilation_field(&p.propagator, &p.psi, &options)?;
    let stats = dilation_stats(&field)?;
    let p_hat = detection_probability(&record, None)?.p_hat;
    let sigma_e = sigma_e_operator(&p.psi, p.potential.as_deref())?.sigma_e;
    // a tenth of the record, over a unit window or the record itself if shorter
    let total = ((config.t_max.min(1.0) / p.propagator.dt()).round() as usize).min(record.len());
    let shift = (total / 10).max(1);
    let defect = intertwine_check(&p.propagator, &p.psi, shift, total as f64 * p.propagator.dt())?;
    Ok((stats, p_hat, sigma_e, defect, shift))
}

/// Isometry, intertwining and Kennard relation of the dilated state.
pub fn dilation_check(config: &ExperimentConfig) -> Result<DilationReport> {
    let (stats, p_hat, sigma_e, intertwine, shift) = dilate(config, false).context("dilation")?;
    let delta_num = if config.convergence_check {
        let (fine, ..) = dilate(config, true).context("refined dilation")?;
        Some((stats.kennard_product - fine.kennard_product).abs() / fine.kennard_product)
    } else {
        None
    };
    let generator_defect = (stats.sigma_h_tilde - sigma_e).abs() / sigma_e;
    let half = config.constants.hbar / 2.0;
    let mut checks = vec![
        Check::below("dilation_norm", (stats.p - p_hat).abs(), DILATION_NORM_TOLERANCE),
        Check::below("intertwining", intertwine, INTERTWINE_TOLERANCE),
        Check::below("generator_spread", generator_defect, GENERATOR_TOLERANCE),
        Check::at_least("kennard", stats.kennard_product, half * (1.0 - delta_num.unwrap_or(0.0))),
    ];
    if let Some(d) = delta_num {
        checks.push(Check::below("delta_num", d, config.tolerances.delta_num));
    }
    Ok(DilationReport {
        config_hash: config.hash(),
        p_hat,
        stats,
        sigma_e,
        generator_defect,
        intertwine_defect: intertwine,
        intertwine_shift_steps: shift,
        delta_num,
        checks,
    })
}
