use std::sync::Arc;

use abrule::detection::{conditional_time_moments, detection_probability};
use abrule::energy::{energy_density, sigma_e_operator};
use abrule::geometry::{build_grid, BoundaryKind, Geometry, Grid, PhysicalConstants};
use abrule::oplab::{build_dense, build_dilation_field, semigroup_contraction_check};
use abrule::propagator::{assemble_hamiltonian, cn_step, evolve, evolve_with, EvolveOptions, Propagator};
use abrule::state::{make_bump, make_gaussian, DetectorSpec, WaveFunction};
use num_complex::Complex64;
use proptest::prelude::*;

const C: PhysicalConstants = PhysicalConstants { hbar: 1.0, mass: 1.0 };

fn geometry() -> impl Strategy<Value = Geometry> {
    prop_oneof![
        Just(Geometry::interval(1.0)),
        Just(Geometry::Interval {
            length: 1.0,
            left: BoundaryKind::DirichletWall,
            right: BoundaryKind::Absorbing,
        }),
        Just(Geometry::HalfLine { x_truncate: 1.0 }),
        Just(Geometry::Ball { radius: 1.0 }),
    ]
}

/// Gaussian or bump well inside `[0, 1]`.
#[derive(Debug, Clone, Copy)]
enum Packet {
    Gaussian { x0: f64, p0: f64, sigma_x: f64 },
    Bump { center: f64, half_width: f64, p0: f64 },
}

impl Packet {
    fn build(self, grid: &Arc<Grid>) -> WaveFunction {
        match self {
            Packet::Gaussian { x0, p0, sigma_x } => make_gaussian(grid, C, x0, p0, sigma_x).unwrap(),
            Packet::Bump { center, half_width, p0 } => make_bump(grid, C, center, half_width, p0).unwrap(),
        }
    }
}

fn packet() -> impl Strategy<Value = Packet> {
    prop_oneof![
        (0.35..0.65f64, -20.0..20.0f64, 0.02..0.05f64).prop_map(|(x0, p0, sigma_x)| Packet::Gaussian { x0, p0, sigma_x }),
        (0.4..0.6f64, 0.1..0.3f64, -20.0..20.0f64)
            .prop_map(|(center, half_width, p0)| Packet::Bump { center, half_width, p0 }),
    ]
}

fn bump_potential(grid: &Grid, height: f64) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&x| {
            let s = (x - 0.3) / 0.2;
            if s.abs() < 1.0 {
                height * (1.0 - 1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        })
        .collect()
}

fn random_state(grid: &Arc<Grid>, parts: &[(f64, f64)]) -> WaveFunction {
    let values = (0..grid.len()).map(|i| {
        let (re, im) = parts[i % parts.len()];
        Complex64::new(re, im * (1.0 + i as f64).sin())
    });
    WaveFunction::from_values(grid.clone(), C, values.collect()).unwrap().normalized().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grids_are_uniform_and_hit_the_boundary(g in geometry(), n in 16usize..4096) {
        let grid = build_grid(g, n).unwrap();
        let x = grid.nodes();
        prop_assert_eq!(x.len(), n + 2);
        prop_assert_eq!(x[0], 0.0);
        prop_assert_eq!(x[n + 1], grid.extent());
        for w in x.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!(((w[1] - w[0]) - grid.dx()).abs() < 1e-12 * grid.extent());
        }
    }

    #[test]
    fn factory_states_are_normalized_and_vanish_on_the_boundary(
        g in geometry(),
        n in 64usize..1024,
        p in packet(),
    ) {
        let grid = Arc::new(build_grid(g, n).unwrap());
        let psi = p.build(&grid);
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        prop_assert_eq!(psi.values()[0], Complex64::new(0.0, 0.0));
        prop_assert_eq!(psi.values()[n + 1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn hamiltonian_is_dissipative(
        g in geometry(),
        kappa in 0.01..100.0f64,
        height in -50.0..50.0f64,
        parts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..8),
    ) {
        let grid = Arc::new(build_grid(g, 63).unwrap());
        let v = bump_potential(&grid, height);
        let h = assemble_hamiltonian(&grid, C, DetectorSpec { kappa }, Some(&v)).unwrap();
        let psi = random_state(&grid, &parts);
        let scale = h.apply(&psi).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(h.dissipation(&psi).unwrap() <= 1e-12 * scale);
    }

    #[test]
    fn single_steps_contract(
        g in geometry(),
        kappa in 0.01..100.0f64,
        dt_factor in 0.01..10.0f64,
        parts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..8),
    ) {
        let grid = Arc::new(build_grid(g, 127).unwrap());
        let h = assemble_hamiltonian(&grid, C, DetectorSpec { kappa }, None).unwrap();
        let prop = Propagator::new(h, dt_factor * grid.dx()).unwrap();
        let psi = random_state(&grid, &parts);
        let next = cn_step(&prop, &psi).unwrap();
        prop_assert!(next.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn runs_balance_norm_and_decay_monotonically(
        g in geometry(),
        kappa in 0.1..20.0f64,
        height in 0.0..50.0f64,
        p in packet(),
    ) {
        let grid = Arc::new(build_grid(g, 255).unwrap());
        let v = bump_potential(&grid, height);
        let h = assemble_hamiltonian(&grid, C, DetectorSpec { kappa }, Some(&v)).unwrap();
        let prop = Propagator::new(h, grid.dx()).unwrap();
        let psi = p.build(&grid);
        let mut samples_ok = true;
        let options = EvolveOptions::until(2.0);
        let run = evolve_with(&prop, &psi, &options, |_, s| {
            samples_ok &= s.prob2.iter().all(|&d| d >= 0.0) && (0.0..=1.0 + 1e-12).contains(&s.norm_sq);
        })
        .unwrap();
        let r = run.record;
        prop_assert!(samples_ok);
        prop_assert!(r.norm_balance_defect().abs() < 1e-12);
        prop_assert!(r.density().iter().all(|&w| w >= -1e-12));
        let mut prev = r.initial_norm_sq();
        for &n in r.norm_sq() {
            prop_assert!(n <= prev * (1.0 + 1e-12));
            prev = n;
        }
        prop_assert!((run.final_state.norm_sq() - r.residual_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn constant_potential_leaves_detection_record_unchanged(
        kappa in 0.1..20.0f64,
        c in -100.0..100.0f64,
        p in packet(),
    ) {
        let grid = Arc::new(build_grid(Geometry::interval(1.0), 255).unwrap());
        let psi = p.build(&grid);
        let record = |v: Option<Vec<f64>>| {
            let h = assemble_hamiltonian(&grid, C, DetectorSpec { kappa }, v.as_deref()).unwrap();
            evolve(&Propagator::new(h, grid.dx()).unwrap(), &psi, 1.0, |_, _| {}).unwrap()
        };
        let free = record(None);
        let shifted = record(Some(vec![c; grid.len()]));
        let scale = free.density().iter().copied().fold(0.0, f64::max);
        for (a, b) in free.density().iter().zip(shifted.density()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        for (a, b) in free.norm_sq().iter().zip(shifted.norm_sq()) {
            prop_assert!((a - b).abs() <= 1e-13);
        }
    }

    #[test]
    fn detection_statistics_are_well_formed(
        g in geometry(),
        kappa in 0.5..20.0f64,
        p in packet(),
    ) {
        let grid = Arc::new(build_grid(g, 127).unwrap());
        let h = assemble_hamiltonian(&grid, C, DetectorSpec { kappa }, None).unwrap();
        let prop = Propagator::new(h, grid.dx()).unwrap();
        let record = evolve(&prop, &p.build(&grid), 3.0, |_, _| {}).unwrap();
        let mut prev = 0.0;
        for k in 1..=30 {
            let p_hat = detection_probability(&record, Some(0.1 * k as f64)).unwrap().p_hat;
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p_hat));
            prop_assert!(p_hat >= prev - 1e-15);
            prev = p_hat;
        }
        if let Ok(s) = conditional_time_moments(&record) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s.p_hat));
            prop_assert!(s.var_t >= 0.0);
            prop_assert_eq!(s.sigma_t, s.var_t.sqrt());
        }
    }

    #[test]
    fn energy_density_is_a_probability_density(g in geometry(), p in packet()) {
        let grid = Arc::new(build_grid(g, 1023).unwrap());
        let rho = energy_density(&p.build(&grid)).unwrap();
        prop_assert!(rho.rho.iter().all(|&r| r >= 0.0));
        prop_assert!(rho.energies.iter().all(|&e| e > 0.0));
        prop_assert!(rho.normalization_defect < 1e-4);
    }

    #[test]
    fn constant_potential_shifts_mean_energy_only(
        g in geometry(),
        height in -50.0..50.0f64,
        c in -100.0..100.0f64,
        p in packet(),
    ) {
        let grid = Arc::new(build_grid(g, 511).unwrap());
        let psi = p.build(&grid);
        let v = bump_potential(&grid, height);
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = sigma_e_operator(&psi, Some(&v)).unwrap();
        let b = sigma_e_operator(&psi, Some(&shifted)).unwrap();
        let scale = a.mean_e.abs() + c.abs() + a.sigma_e;
        prop_assert!((b.mean_e - a.mean_e - c).abs() < 1e-11 * scale);
        prop_assert!((b.var_e - a.var_e).abs() < 1e-9 * a.var_e.max(scale * scale * 1e-6));
    }

    #[test]
    fn dense_propagator_and_dilation_contract(
        g in geometry(),
        kappa in 0.5..50.0f64,
        dt_factor in 0.1..10.0f64,
        center in 0.45..0.55f64,
        p0 in -10.0..10.0f64,
    ) {
        let grid = Arc::new(build_grid(g, 63).unwrap());
        let h = assemble_hamiltonian(&grid, C, DetectorSpec { kappa }, None).unwrap();
        let prop = Propagator::new(h, dt_factor * grid.dx()).unwrap();
        let ops = build_dense(&prop).unwrap();
        let report = semigroup_contraction_check(&ops, &[1, 7, 64]);
        prop_assert!(report.max_norm <= 1.0 + 1e-10);
        prop_assert!(report.monotone);

        // the field needs a negligible undetected part; unresolved grid modes
        // decay too slowly for that, so it uses a resolved packet at dt = dx
        let grid = Arc::new(build_grid(g, 255).unwrap());
        let h = assemble_hamiltonian(&grid, C, DetectorSpec { kappa: kappa.clamp(1.0, 20.0) }, None).unwrap();
        let prop = Propagator::new(h, grid.dx()).unwrap();
        let options = EvolveOptions {
            t_max: 2000.0,
            residual_target: Some(1e-9),
            validity_window: None,
        };
        let psi = make_bump(&grid, C, center, 0.3, p0).unwrap();
        let (field, _) = build_dilation_field(&prop, &psi, &options).unwrap();
        prop_assert!(field.norm_sq() <= 1.0 + 1e-12);
    }
}
