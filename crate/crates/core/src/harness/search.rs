use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};

use super::config::{ExperimentConfig, SearchBox, StateSpec};
use super::run::run_experiment;

const DIM: usize = 4;
/// Evaluations per start before another start is added.
const EVALS_PER_START: usize = 50;
const MAX_STARTS: usize = 4;
const INITIAL_STEP: f64 = 0.25;
const F_TOL: f64 = 1e-6;
const X_TOL: f64 = 1e-4;

/// `(x0, p0, sigma_x, kappa)`.
pub type SearchPoint = [f64; DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub start: usize,
    pub params: SearchPoint,
    /// `None` when the point is infeasible (state touching the boundary,
    /// unreliable moments).
    pub product: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: SearchPoint,
    pub best_product: f64,
    pub best_bound: f64,
    pub best_config_hash: String,
    /// From the paired refined run at the best point.
    pub delta_num: f64,
    /// `best_product >= best_bound (1 - delta_num)`.
    pub floor_holds: bool,
    pub evaluations: usize,
    pub starts: usize,
    /// Some start ran out of budget before its simplex converged.
    pub budget_exhausted: bool,
    pub trajectory: Vec<Evaluation>,
}

fn configure(base: &ExperimentConfig, p: &SearchPoint) -> ExperimentConfig {
    let mut c = base.clone();
    c.state = StateSpec::Gaussian {
        x0: p[0],
        p0: p[1],
        sigma_x: p[2],
    };
    c.kappa = p[3];
    c.search = None;
    c
}

fn to_params(space: &[[f64; 2]; DIM], u: &[f64; DIM]) -> SearchPoint {
    std::array::from_fn(|i| {
        let [lo, hi] = space[i];
        lo + (hi - lo) * u[i].clamp(0.0, 1.0)
    })
}

struct Objective<'a> {
    base: &'a ExperimentConfig,
    space: [[f64; 2]; DIM],
    start: usize,
    budget: usize,
    trajectory: Vec<Evaluation>,
}

impl Objective<'_> {
    fn exhausted(&self) -> bool {
        self.trajectory.len() >= self.budget
    }

    /// Product relative to its bound; infinite where the point is infeasible.
    fn eval(&mut self, u: &[f64; DIM]) -> f64 {
        let params = to_params(&self.space, u);
        let report = run_experiment(&configure(self.base, &params)).ok();
        let (product, bound) = match &report {
            Some(r) if r.product().is_finite() => (Some(r.product()), Some(r.bound())),
            _ => (None, None),
        };
        self.trajectory.push(Evaluation {
            start: self.start,
            params,
            product,
            bound,
        });
        match (product, bound) {
            (Some(p), Some(b)) => p / b,
            _ => f64::INFINITY,
        }
    }
}

fn converged(simplex: &[[f64; DIM]], values: &[f64]) -> bool {
    let (lo, hi) = (values[0], values[DIM]);
    if !hi.is_finite() {
        return false;
    }
    let spread = simplex[1..]
        .iter()
        .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    hi - lo <= F_TOL * lo.abs() && spread <= X_TOL
}

fn clamp_unit(v: [f64; DIM]) -> [f64; DIM] {
    v.map(|x| x.clamp(0.0, 1.0))
}

/// Nelder-Mead on the unit cube with standard coefficients; returns whether
/// the simplex converged within the budget.
fn nelder_mead(f: &mut Objective, start: [f64; DIM]) -> bool {
    let mut simplex = vec![start];
    let mut values = vec![f.eval(&start)];
    for i in 0..DIM {
        if f.exhausted() {
            return false;
        }
        let mut v = start;
        v[i] = if v[i] + INITIAL_STEP <= 1.0 {
            v[i] + INITIAL_STEP
        } else {
            v[i] - INITIAL_STEP
        };
        values.push(f.eval(&v));
        simplex.push(v);
    }
    loop {
        let mut order: Vec<usize> = (0..=DIM).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i]).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if converged(&simplex, &values) {
            return true;
        }
        if f.exhausted() {
            return false;
        }
        let centroid: [f64; DIM] =
            std::array::from_fn(|j| simplex[..DIM].iter().map(|v| v[j]).sum::<f64>() / DIM as f64);
        let toward = |t: f64| clamp_unit(std::array::from_fn(|j| centroid[j] + t * (simplex[DIM][j] - centroid[j])));

        let xr = toward(-1.0);
        let fr = f.eval(&xr);
        if fr < values[0] {
            if f.exhausted() {
                simplex[DIM] = xr;
                values[DIM] = fr;
                continue;
            }
            let xe = toward(-2.0);
            let fe = f.eval(&xe);
            (simplex[DIM], values[DIM]) = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < values[DIM - 1] {
            simplex[DIM] = xr;
            values[DIM] = fr;
        } else {
            if f.exhausted() {
                continue;
            }
            let (xc, fc) = if fr < values[DIM] {
                let x = toward(-0.5);
                (x, f.eval(&x))
            } else {
                let x = toward(0.5);
                (x, f.eval(&x))
            };
            if fc < fr.min(values[DIM]) {
                simplex[DIM] = xc;
                values[DIM] = fc;
            } else {
                // shrink toward the best vertex
                for i in 1..=DIM {
                    if f.exhausted() {
                        break;
                    }
                    let v = std::array::from_fn(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]));
                    simplex[i] = v;
                    values[i] = f.eval(&v);
                }
            }
        }
    }
}

/// Derivative-free search for the smallest `sigma_T sigma_E` over Gaussian
/// packets in `space`. The first start is the box centre; further starts are
/// drawn from `seed`. Evaluations use `base` without the refined run; the best
/// point is then re-run with it to obtain `delta_num`.
pub fn minimize_product(base: &ExperimentConfig, space: &SearchBox, budget: usize, seed: u64) -> Result<SearchOutcome> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::invalid("budget", "must be at least 1"));
    }
    let mut quick = base.clone();
    quick.convergence_check = false;
    let n_starts = (budget / EVALS_PER_START).clamp(1, MAX_STARTS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<[f64; DIM]> = (0..n_starts)
        .map(|i| {
            if i == 0 {
                [0.5; DIM]
            } else {
                std::array::from_fn(|_| rng.random::<f64>())
            }
        })
        .collect();
    let share = |i: usize| budget / n_starts + usize::from(i < budget % n_starts);

    let runs: Vec<(Vec<Evaluation>, bool)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut f = Objective {
                base: &quick,
                space: space.bounds(),
                start: i,
                budget: share(i),
                trajectory: Vec::new(),
            };
            let done = nelder_mead(&mut f, x0);
            (f.trajectory, done)
        })
        .collect();

    let budget_exhausted = runs.iter().any(|(_, done)| !done);
    let trajectory: Vec<Evaluation> = runs.into_iter().flat_map(|(t, _)| t).collect();
    let best = trajectory
        .iter()
        .filter_map(|e| Some((e, e.product? / e.bound?)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(e, _)| e.clone())
        .ok_or_else(|| Error::invalid("search", "no feasible point in the search box"))?;

    let mut check = configure(base, &best.params);
    check.convergence_check = true;
    let report = run_experiment(&check).context("refined run at the best point")?;
    let delta_num = report.delta_num.unwrap_or(0.0);
    let (best_product, best_bound) = (best.product.unwrap_or(f64::NAN), best.bound.unwrap_or(f64::NAN));
    Ok(SearchOutcome {
        best: best.params,
        best_product,
        best_bound,
        best_config_hash: check.hash(),
        delta_num,
        floor_holds: best_product >= best_bound * (1.0 - delta_num),
        evaluations: trajectory.len(),
        starts: n_starts,
        budget_exhausted,
        trajectory,
    })
}
