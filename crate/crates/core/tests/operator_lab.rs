use std::sync::Arc;

use abrule::detection::conditional_time_moments;
use abrule::energy::sigma_e_operator;
use abrule::geometry::{build_grid, Geometry, PhysicalConstants};
use abrule::oplab::{
    build_dense, build_dilation_field, dilation_stats, intertwine_check, povm_completeness,
    semigroup_contraction_check, spectrum_check, DenseOperators,
};
use abrule::propagator::{assemble_hamiltonian, EvolveOptions, Propagator};
use abrule::state::{make_bump, DetectorSpec};
use num_complex::Complex64;

fn propagator(geometry: Geometry, n: usize, kappa: f64, dt: f64) -> Propagator {
    let g = Arc::new(build_grid(geometry, n).unwrap());
    let h = assemble_hamiltonian(&g, PhysicalConstants::default(), DetectorSpec { kappa }, None).unwrap();
    Propagator::new(h, dt).unwrap()
}

fn lab(kappa: f64, dt: f64) -> DenseOperators {
    build_dense(&propagator(Geometry::interval(1.0), 127, kappa, dt)).unwrap()
}

#[test]
fn contraction_semigroup() {
    let o = lab(1.0, 1e-3);
    let steps = [0, 1, 2, 3, 5, 10, 50, 100, 1000, 10000];
    let c = semigroup_contraction_check(&o, &steps);
    assert!((c.norms[0] - 1.0).abs() < 1e-14);
    assert!(c.max_norm <= 1.0 + 1e-10);
    assert!(c.monotone);
    assert!(c.semigroup_defect < 1e-10, "{}", c.semigroup_defect);
    // submultiplicativity ||W_{t+s}|| <= ||W_t|| ||W_s|| on the sampled pairs
    for (i, &a) in c.steps.iter().enumerate() {
        for (j, &b) in c.steps.iter().enumerate() {
            if let Some(k) = c.steps.iter().position(|&x| x == a + b) {
                assert!(c.norms[k] <= c.norms[i] * c.norms[j] + 1e-12);
            }
        }
    }
}

#[test]
fn povm_completeness_on_every_horizon() {
    let o = lab(1.0, 1e-4);
    for k in [1, 7, 100, 10_000] {
        let r = povm_completeness(&o, k);
        assert!(r.residual < 1e-6, "K={k}: {}", r.residual);
    }
    for geometry in [Geometry::HalfLine { x_truncate: 1.0 }, Geometry::Ball { radius: 1.0 }] {
        let o = build_dense(&propagator(geometry, 127, 2.0, 1e-4)).unwrap();
        assert!(povm_completeness(&o, 5000).residual < 1e-6);
    }
}

#[test]
fn undetected_part_vanishes_at_the_predicted_rate() {
    let o = lab(1.0, 1e-4);
    let spectrum = spectrum_check(&o).unwrap();
    // slowest per-step contraction of the Cayley map over the spectrum
    let a = Complex64::new(0.0, o.dt() / 2.0);
    let rho = spectrum
        .eigenvalues
        .iter()
        .map(|&l| ((1.0 - a * l) / (1.0 + a * l)).norm())
        .fold(0.0, f64::max);
    let (k1, k2) = (200_000, 400_000);
    let u1 = povm_completeness(&o, k1).undetected_norm;
    let u2 = povm_completeness(&o, k2).undetected_norm;
    let observed = (u2 / u1).ln() / (k2 - k1) as f64;
    let predicted = 2.0 * rho.ln();
    assert!((observed / predicted - 1.0).abs() < 0.02, "{observed} vs {predicted}");
    let far = povm_completeness(&o, 1_000_000);
    assert!(far.undetected_norm < 1e-8);
}

#[test]
fn spectrum_is_dissipative_and_non_normal() {
    let s = spectrum_check(&lab(1.0, 1e-3)).unwrap();
    assert!(s.max_im < 0.0);
    assert!(s.eigenvalues.iter().all(|z| z.im < 0.0));
    assert!(s.gamma_min > 0.0);
    assert!(s.commutator_norm > 1.0);

    let s = spectrum_check(&lab(0.0, 1e-3)).unwrap();
    assert!(s.eigenvalues.iter().all(|z| z.im.abs() <= 1e-10));
}

#[test]
fn dilation_is_an_isometry_for_certain_detection() {
    let g = Arc::new(build_grid(Geometry::interval(1.0), 1023).unwrap());
    let c = PhysicalConstants::default();
    let psi = make_bump(&g, c, 0.5, 0.2, 0.0).unwrap();
    let h = assemble_hamiltonian(&g, c, DetectorSpec { kappa: 10.0 }, None).unwrap();
    let prop = Propagator::new(h, g.dx()).unwrap();
    let options = EvolveOptions {
        t_max: 200.0,
        residual_target: Some(1e-13),
        validity_window: None,
    };
    let (field, record) = build_dilation_field(&prop, &psi, &options).unwrap();
    assert!((field.norm_sq() - record.detected_mass()).abs() < 1e-10);
    assert!((field.norm_sq() - 1.0).abs() < 1e-6);
    for (d, w) in field.density().iter().zip(record.density()) {
        // w is a difference of norms over dt, so its rounding is eps / dt
        assert!((d - w).abs() <= 1e-10);
    }
    // the state vanishes on the boundary, so phi starts at zero
    assert!(field.values(0)[0].norm() < 1e-5);

    let stats = dilation_stats(&field).unwrap();
    let detection = conditional_time_moments(&record).unwrap();
    // same distribution; the detection side may add an extrapolated tail for
    // the slowly absorbed high-energy remainder
    let raw_var = detection.var_t - detection.tail_correction;
    assert!((stats.sigma_t_tilde.powi(2) - raw_var).abs() < 1e-8);
    assert!(detection.tail_correction.abs() < 1e-3 * detection.var_t);
    let sigma_e = sigma_e_operator(&psi, None).unwrap().sigma_e;
    assert!((stats.sigma_h_tilde - sigma_e).abs() / sigma_e < 0.01);
    assert!(stats.kennard_product >= 0.5);
    // dispersion of the time step lowers the naive frequency estimate
    assert!(stats.sigma_h_tilde_spectral < stats.sigma_h_tilde);
}

#[test]
fn intertwining_with_the_shift() {
    let g = Arc::new(build_grid(Geometry::interval(1.0), 511).unwrap());
    let c = PhysicalConstants::default();
    let psi = make_bump(&g, c, 0.4, 0.2, 5.0).unwrap();
    for kappa in [0.5, 5.0] {
        let h = assemble_hamiltonian(&g, c, DetectorSpec { kappa }, None).unwrap();
        let prop = Propagator::new(h, g.dx()).unwrap();
        assert_eq!(intertwine_check(&prop, &psi, 0, 1.0).unwrap(), 0.0);
        assert!(intertwine_check(&prop, &psi, 10, 1.0).unwrap() < 1e-8);
        assert!(intertwine_check(&prop, &psi, 600, 1.0).is_err());
    }
}
