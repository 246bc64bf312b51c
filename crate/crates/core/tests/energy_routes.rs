use std::f64::consts::PI;
use std::sync::Arc;

use abrule::energy::{energy_density, sigma_e_dirichlet, sigma_e_operator, sigma_e_spectral};
use abrule::geometry::{build_grid, Geometry, Grid, PhysicalConstants};
use abrule::state::{make_bump, make_gaussian, make_mode_superposition, WaveFunction};
use num_complex::Complex64;

fn interval(n: usize) -> Arc<Grid> {
    Arc::new(build_grid(Geometry::interval(1.0), n).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Closed-form energy variance of a Gaussian packet: `E = p^2/2m` with
/// `p ~ N(p0, sigma_p^2)`, so `Var(p^2) = 2 sigma_p^4 + 4 p0^2 sigma_p^2`.
fn gaussian_sigma_e(hbar: f64, mass: f64, p0: f64, sigma_x: f64) -> f64 {
    let sp = hbar / (2.0 * sigma_x);
    ((2.0 * sp.powi(4) + 4.0 * p0 * p0 * sp * sp) / (4.0 * mass * mass)).sqrt()
}

fn two_mode(grid: &Arc<Grid>) -> WaveFunction {
    let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    make_mode_superposition(grid, PhysicalConstants::default(), &[a, a]).unwrap()
}

#[test]
fn gaussian_spectral_spread_matches_closed_form() {
    let g = interval(2047);
    let c = PhysicalConstants::default();
    let psi = make_gaussian(&g, c, 0.5, 0.0, 0.05).unwrap();
    let expected = gaussian_sigma_e(1.0, 1.0, 0.0, 0.05);
    assert!((expected - 100.0 / 2f64.sqrt()).abs() < 1e-12);
    let s = sigma_e_spectral(&psi, 8).unwrap();
    assert!(rel(s.sigma_e, expected) < 1e-4, "{} vs {expected}", s.sigma_e);

    let c2 = PhysicalConstants::new(0.7, 2.5).unwrap();
    let moving = make_gaussian(&g, c2, 0.45, 12.0, 0.04).unwrap();
    let s = sigma_e_spectral(&moving, 8).unwrap();
    assert!(rel(s.sigma_e, gaussian_sigma_e(0.7, 2.5, 12.0, 0.04)) < 1e-4);
}

#[test]
fn spectral_padding_converged() {
    let g = interval(1023);
    let psi = make_bump(&g, PhysicalConstants::default(), 0.4, 0.2, 6.0).unwrap();
    let a = sigma_e_spectral(&psi, 8).unwrap();
    let b = sigma_e_spectral(&psi, 16).unwrap();
    assert!(rel(a.sigma_e, b.sigma_e) < 1e-6);
}

#[test]
fn two_mode_superposition_reproduces_analytic_spread() {
    let g = interval(2047);
    let psi = two_mode(&g);
    let sigma = 3.0 * PI * PI / 4.0;
    let mean = 5.0 * PI * PI / 4.0;
    let dir = sigma_e_dirichlet(&psi, 64).unwrap();
    assert!(rel(dir.sigma_e, sigma) < 1e-10);
    assert!(rel(dir.mean_e, mean) < 1e-10);
    let op = sigma_e_operator(&psi, None).unwrap();
    assert!(rel(op.sigma_e, sigma) < 1e-4);
    assert!(rel(op.mean_e, mean) < 1e-4);
}

#[test]
fn mode_energies_converge_at_second_order() {
    let errs: Vec<f64> = [255, 511, 1023]
        .iter()
        .map(|&n| rel(sigma_e_operator(&two_mode(&interval(n)), None).unwrap().sigma_e, 3.0 * PI * PI / 4.0))
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn three_routes_agree_on_bump_states() {
    let c = PhysicalConstants::default();
    let mut prev = None;
    for n in [1023, 2047] {
        let g = interval(n);
        let psi = make_bump(&g, c, 0.5, 0.3, 8.0).unwrap();
        let s = sigma_e_spectral(&psi, 8).unwrap().sigma_e;
        let o = sigma_e_operator(&psi, None).unwrap().sigma_e;
        let d = sigma_e_dirichlet(&psi, 1024.min(n - 1)).unwrap().sigma_e;
        let worst = rel(s, o).max(rel(o, d)).max(rel(s, d));
        assert!(worst < 1e-3, "n={n}: {s} {o} {d}");
        if let Some(p) = prev {
            let ratio: f64 = p / worst;
            assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
        }
        prev = Some(worst);
    }
}

#[test]
fn ball_routes_agree() {
    let g = Arc::new(build_grid(Geometry::Ball { radius: 1.0 }, 2047).unwrap());
    let psi = make_gaussian(&g, PhysicalConstants::default(), 0.5, 0.0, 0.05).unwrap();
    let s = sigma_e_spectral(&psi, 8).unwrap();
    let o = sigma_e_operator(&psi, None).unwrap();
    assert!(rel(s.sigma_e, o.sigma_e) < 1e-3);
    let d = energy_density(&psi).unwrap();
    assert!(d.normalization_defect < 1e-4);
}

#[test]
fn energy_density_normalized_and_consistent_with_spectral_moments() {
    let c = PhysicalConstants::default();
    let g = interval(1023);
    let states = [
        make_gaussian(&g, c, 0.5, 0.0, 0.05).unwrap(),
        make_gaussian(&g, c, 0.3, -25.0, 0.03).unwrap(),
        make_bump(&g, c, 0.6, 0.25, 10.0).unwrap(),
    ];
    for psi in &states {
        let d = energy_density(psi).unwrap();
        assert!(d.normalization_defect < 1e-4);
        assert!(d.rho.iter().all(|&r| r >= 0.0));
        assert!(d.energies.iter().all(|&e| e > 0.0));
        let (mean, var) = d.moments();
        let s = sigma_e_spectral(psi, 8).unwrap();
        assert!(rel(mean, s.mean_e) < 1e-6, "{mean} {}", s.mean_e);
        assert!(rel(var, s.var_e) < 1e-6, "{var} {}", s.var_e);
    }
}

/// Closed-form density of a Gaussian packet, hbar = m = 1.
fn gaussian_rho(e: f64, k0: f64, sigma_x: f64) -> f64 {
    let sk = 1.0 / (2.0 * sigma_x);
    let g = |k: f64| (-(k - k0).powi(2) / (2.0 * sk * sk)).exp() / ((2.0 * PI).sqrt() * sk);
    let k = (2.0 * e).sqrt();
    (1.0 / (2.0 * e)).sqrt() * (g(k) + g(-k))
}

#[test]
fn gaussian_density_peak_matches_calculus_oracle() {
    let (k0, sx) = (40.0, 0.05);
    // stationary point of the closed form: bisection on a centred difference
    let drho = |e: f64| gaussian_rho(e * (1.0 + 1e-7), k0, sx) - gaussian_rho(e * (1.0 - 1e-7), k0, sx);
    let (mut lo, mut hi) = (400.0, 1200.0);
    assert!(drho(lo) > 0.0 && drho(hi) < 0.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if drho(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e_star = 0.5 * (lo + hi);

    let g = interval(2047);
    let psi = make_gaussian(&g, PhysicalConstants::default(), 0.5, k0, sx).unwrap();
    let d = energy_density(&psi).unwrap();
    let j = (0..d.rho.len()).filter(|&j| d.energies[j] > 100.0).max_by(|&a, &b| d.rho[a].total_cmp(&d.rho[b])).unwrap();
    // parabolic vertex in sqrt(E), where the samples are uniform
    let q = |i: usize| d.energies[i].sqrt();
    let (r0, r1, r2) = (d.rho[j - 1], d.rho[j], d.rho[j + 1]);
    let step = q(j + 1) - q(j);
    let vertex = q(j) + 0.5 * step * (r0 - r2) / (r0 - 2.0 * r1 + r2);
    assert!(rel(vertex * vertex, e_star) < 1e-3, "{} vs {e_star}", vertex * vertex);

    // the 5..6 sigma taper perturbs rho pointwise at the 1e-4 level
    for i in j - 5..=j + 5 {
        let o = gaussian_rho(d.energies[i], k0, sx);
        assert!(rel(d.rho[i], o) < 1e-3, "{i} {} {} {o}", d.energies[i], d.rho[i]);
    }
}

#[test]
fn constant_potential_shift_is_exact() {
    let g = interval(511);
    let psi = make_bump(&g, PhysicalConstants::default(), 0.5, 0.3, 3.0).unwrap();
    let base = sigma_e_operator(&psi, None).unwrap();
    let v = vec![42.0; g.len()];
    let s = sigma_e_operator(&psi, Some(&v)).unwrap();
    assert!((s.mean_e - base.mean_e - 42.0).abs() < 1e-10 * s.mean_e);
    assert!(rel(s.var_e, base.var_e) < 1e-12);
}
