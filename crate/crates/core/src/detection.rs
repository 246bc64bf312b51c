//! Detection-time distribution from a propagation record.
//!
//! The detection density of step `k` is the norm decrement
//! `w_k = (|psi_k|^2 - |psi_{k+1}|^2) / dt`, assigned to the step midpoint
//! `t_{k+1/2}`. By construction `sum_k w_k dt + |psi_K|^2 = |psi_0|^2`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PhysicalConstants;

/// Residual norm^2 below which the undetected remainder is ignored.
pub const EPS_TAIL: f64 = 1e-12;
/// Residual norm^2 above which no tail extrapolation is attempted.
pub const MAX_TAIL_RESIDUAL: f64 = 0.01;
/// `p_hat` closer to one than this is treated as certain detection.
pub const CERTAIN_DETECTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub(crate) dt: f64,
    pub(crate) density: Vec<f64>,
    pub(crate) boundaries: Vec<String>,
    pub(crate) prob1: Vec<Vec<f64>>,
    pub(crate) prob2: Vec<Vec<f64>>,
    pub(crate) norm_sq: Vec<f64>,
    pub(crate) initial_norm_sq: f64,
    pub(crate) bounded: bool,
    pub(crate) validity_window: Option<f64>,
}

impl DetectionRecord {
    pub(crate) fn empty(dt: f64, boundaries: Vec<String>, bounded: bool, initial_norm_sq: f64) -> Self {
        let nb = boundaries.len();
        Self {
            dt,
            density: Vec::new(),
            boundaries,
            prob1: vec![Vec::new(); nb],
            prob2: vec![Vec::new(); nb],
            norm_sq: Vec::new(),
            initial_norm_sq,
            bounded,
            validity_window: None,
        }
    }

    pub(crate) fn reserve(&mut self, n: usize) {
        self.density.reserve(n);
        self.norm_sq.reserve(n);
        for v in self.prob1.iter_mut().chain(self.prob2.iter_mut()) {
            v.reserve(n);
        }
    }

    pub(crate) fn push_step(&mut self, w: f64, prob1: &[f64], prob2: &[f64], norm_sq: f64) {
        self.density.push(w);
        for (col, v) in self.prob1.iter_mut().zip(prob1) {
            col.push(*v);
        }
        for (col, v) in self.prob2.iter_mut().zip(prob2) {
            col.push(*v);
        }
        self.norm_sq.push(norm_sq);
    }

    /// Record built from an externally supplied density on `[0, n dt]`, for
    /// testing the statistics against closed forms. The residual is what is
    /// left undetected at the end of the record.
    pub fn from_density(dt: f64, density: Vec<f64>, residual_norm_sq: f64, bounded: bool) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if let Some(index) = density.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite { what: "density", index });
        }
        if !(residual_norm_sq.is_finite() && residual_norm_sq >= 0.0) {
            return Err(Error::invalid("residual_norm_sq", "must be non-negative"));
        }
        let total: f64 = density.iter().sum::<f64>() * dt;
        let initial = total + residual_norm_sq;
        let mut remaining = initial;
        let norm_sq = density
            .iter()
            .map(|w| {
                remaining -= w * dt;
                remaining
            })
            .collect();
        Ok(Self {
            dt,
            density,
            boundaries: Vec::new(),
            prob1: Vec::new(),
            prob2: Vec::new(),
            norm_sq,
            initial_norm_sq: initial,
            bounded,
            validity_window: None,
        })
    }

    pub fn with_validity_window(mut self, window: Option<f64>) -> Self {
        self.validity_window = window;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    /// Midpoint time of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn boundaries(&self) -> &[String] {
        &self.boundaries
    }

    pub fn prob1(&self) -> &[Vec<f64>] {
        &self.prob1
    }

    pub fn prob2(&self) -> &[Vec<f64>] {
        &self.prob2
    }

    /// Norm^2 after each step.
    pub fn norm_sq(&self) -> &[f64] {
        &self.norm_sq
    }

    pub fn initial_norm_sq(&self) -> f64 {
        self.initial_norm_sq
    }

    pub fn t_end(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn validity_window(&self) -> Option<f64> {
        self.validity_window
    }

    pub fn residual_norm_sq(&self) -> f64 {
        self.norm_sq.last().copied().unwrap_or(self.initial_norm_sq)
    }

    /// `sum_k w_k dt` over the whole record.
    pub fn detected_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.dt
    }

    /// `|initial - residual - sum w dt|`.
    pub fn norm_balance_defect(&self) -> f64 {
        (self.initial_norm_sq - self.residual_norm_sq() - self.detected_mass()).abs()
    }

    /// Number of steps that lie inside the validity window.
    fn usable_steps(&self, horizon: Option<f64>) -> Result<usize> {
        let mut limit = self.t_end();
        if let Some(window) = self.validity_window {
            if let Some(h) = horizon {
                if h > window * (1.0 + 1e-12) {
                    return Err(Error::ValidityWindowExceeded { requested: h, window });
                }
            }
            limit = limit.min(window);
        }
        if let Some(h) = horizon {
            limit = limit.min(h);
        }
        Ok(((limit / self.dt) + 1e-9).floor().min(self.len() as f64) as usize)
    }

    /// Relative `L^2`-in-time difference between the current and the
    /// boundary-amplitude density, summed over boundary elements.
    pub fn flux_route_discrepancy(&self) -> f64 {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (p1, p2) in self.prob1.iter().zip(&self.prob2) {
            for (a, b) in p1.iter().zip(p2) {
                diff += (a - b) * (a - b);
                norm += b * b;
            }
        }
        if norm == 0.0 {
            0.0
        } else {
            (diff / norm).sqrt()
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "w_norm_decrement".to_string()];
        for b in &self.boundaries {
            header.push(format!("w_prob1_{b}"));
        }
        for b in &self.boundaries {
            header.push(format!("w_prob2_{b}"));
        }
        header.push("norm_sq".to_string());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for k in 0..self.len() {
            row.clear();
            row.push(format_float(self.time(k)));
            row.push(format_float(self.density[k]));
            for col in &self.prob1 {
                row.push(format_float(col[k]));
            }
            for col in &self.prob2 {
                row.push(format_float(col[k]));
            }
            row.push(format_float(self.norm_sq[k]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the table written by [`DetectionRecord::write_csv`]. The time
    /// column must hold the midpoints `(k + 1/2) dt` of a uniform step.
    pub fn read_csv<R: Read>(reader: R, bounded: bool) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 3 || cols[0] != "t" || cols[1] != "w_norm_decrement" || *cols.last().unwrap() != "norm_sq" {
            return Err(Error::Parse(format!("unexpected header {cols:?}")));
        }
        let middle = &cols[2..cols.len() - 1];
        if !middle.len().is_multiple_of(2) {
            return Err(Error::Parse("unpaired flux columns".into()));
        }
        let nb = middle.len() / 2;
        let mut boundaries = Vec::with_capacity(nb);
        for (i, name) in middle[..nb].iter().enumerate() {
            let label = name
                .strip_prefix("w_prob1_")
                .ok_or_else(|| Error::Parse(format!("bad column {name}")))?;
            if middle[nb + i] != format!("w_prob2_{label}") {
                return Err(Error::Parse(format!("bad column {}", middle[nb + i])));
            }
            boundaries.push(label.to_string());
        }

        let mut times = Vec::new();
        let mut density = Vec::new();
        let mut prob1 = vec![Vec::new(); nb];
        let mut prob2 = vec![Vec::new(); nb];
        let mut norm_sq = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != cols.len() {
                return Err(Error::Parse("ragged row".into()));
            }
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "csv field", index: i });
            }
            times.push(vals[0]);
            density.push(vals[1]);
            for b in 0..nb {
                prob1[b].push(vals[2 + b]);
                prob2[b].push(vals[2 + nb + b]);
            }
            norm_sq.push(vals[vals.len() - 1]);
        }
        if times.is_empty() {
            return Err(Error::Parse("no data rows".into()));
        }
        let dt = 2.0 * times[0];
        if !(dt > 0.0) {
            return Err(Error::Parse("first time stamp must be dt/2 > 0".into()));
        }
        for (k, t) in times.iter().enumerate() {
            let expected = (k as f64 + 0.5) * dt;
            if (t - expected).abs() > 1e-9 * expected.max(1.0) {
                return Err(Error::Parse(format!("non-uniform time column at row {k}")));
            }
        }
        let initial_norm_sq = norm_sq[0] + density[0] * dt;
        Ok(Self {
            dt,
            density,
            boundaries,
            prob1,
            prob2,
            norm_sq,
            initial_norm_sq,
            bounded,
            validity_window: None,
        })
    }
}

pub(crate) fn format_float(v: f64) -> String {
    // shortest round-trip representation, `.` decimal separator
    format!("{v:e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionProbability {
    pub p_hat: f64,
    /// Norm^2 not detected within the integration window.
    pub undetected_estimate: f64,
    pub horizon: f64,
}

/// `p_hat = sum w dt` over `[0, min(t_max, validity window, horizon)]`.
pub fn detection_probability(record: &DetectionRecord, horizon: Option<f64>) -> Result<DetectionProbability> {
    let n = record.usable_steps(horizon)?;
    let p_hat: f64 = record.density[..n].iter().sum::<f64>() * record.dt;
    let remaining = if n == 0 {
        record.initial_norm_sq
    } else {
        record.norm_sq[n - 1]
    };
    Ok(DetectionProbability {
        p_hat,
        undetected_estimate: remaining,
        horizon: n as f64 * record.dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TailTreatment {
    /// Residual negligible, moments taken from the record alone.
    None,
    /// Residual mass placed on an exponential tail `A exp(-gamma t)` beyond
    /// the end of the record.
    ExponentialFit { gamma: f64, mass: f64 },
    /// Moments conditional on detection within the record window.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub p_hat: f64,
    pub mean_t: f64,
    pub var_t: f64,
    /// Change of the variance due to the tail extrapolation.
    pub tail_correction: f64,
    pub tail: TailTreatment,
    pub sigma_t: f64,
}

/// Least-squares fit of `ln N(t) = ln A - gamma t` to the undetected norm^2
/// over its final decade. `N` is monotone, so beating between slowly decaying
/// modes does not break the fit the way it would on `w`.
fn fit_exponential_tail(dt: f64, norm_sq: &[f64]) -> Option<f64> {
    let n = norm_sq.len();
    if n < 16 {
        return None;
    }
    let last = norm_sq[n - 1];
    if !(last > 0.0) {
        return None;
    }
    let start = norm_sq.iter().position(|&x| x <= 10.0 * last).unwrap_or(0);
    let start = start.min(n - 8);
    let m = (n - start) as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (k, &x) in norm_sq.iter().enumerate().skip(start) {
        if !(x > 0.0) {
            return None;
        }
        let t = (k + 1) as f64 * dt;
        let y = x.ln();
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = m * stt - st * st;
    if denom <= 0.0 {
        return None;
    }
    let gamma = -(m * sty - st * sy) / denom;
    (gamma.is_finite() && gamma > 0.0).then_some(gamma)
}

/// Mean and variance of the detection time, conditional on detection.
///
/// Bounded geometries detect with certainty; a residual in
/// `(EPS_TAIL, MAX_TAIL_RESIDUAL)` is extrapolated by an exponential tail.
/// For unbounded geometries the moments are conditional on detection inside
/// the validity window.
pub fn conditional_time_moments(record: &DetectionRecord) -> Result<DetectionStats> {
    let n = record.usable_steps(None)?;
    let dt = record.dt;
    let times = record.times();
    let density = &record.density[..n];

    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (t, w) in times.iter().zip(density) {
        let mass = w * dt;
        m0 += mass;
        m1 += mass * t;
        m2 += mass * t * t;
    }
    if !(m0 > 0.0) {
        return Err(Error::NoDetections);
    }
    let residual = if n == 0 {
        record.initial_norm_sq
    } else {
        record.norm_sq[n - 1]
    };

    let (raw_mean, raw_var) = {
        let mean = m1 / m0;
        (mean, (m2 / m0 - mean * mean).max(0.0))
    };

    let tail = if !record.bounded {
        TailTreatment::Conditional
    } else if residual <= EPS_TAIL {
        TailTreatment::None
    } else if residual < MAX_TAIL_RESIDUAL {
        match fit_exponential_tail(dt, &record.norm_sq[..n]) {
            Some(gamma) => TailTreatment::ExponentialFit { gamma, mass: residual },
            None => return Err(Error::MomentsUnreliable { residual }),
        }
    } else {
        return Err(Error::MomentsUnreliable { residual });
    };

    let (p_hat, mean, var) = match tail {
        TailTreatment::ExponentialFit { gamma, mass } => {
            // tail mass distributed as t_end + Exp(gamma)
            let t_end = n as f64 * dt;
            let tail_mean = t_end + 1.0 / gamma;
            let tail_m2 = tail_mean * tail_mean + 1.0 / (gamma * gamma);
            let total = m0 + mass;
            let mean = (m1 + mass * tail_mean) / total;
            let var = ((m2 + mass * tail_m2) / total - mean * mean).max(0.0);
            (total, mean, var)
        }
        _ => (m0, raw_mean, raw_var),
    };

    Ok(DetectionStats {
        p_hat: p_hat.min(1.0),
        mean_t: mean,
        var_t: var,
        tail_correction: var - raw_var,
        tail,
        sigma_t: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Satisfied,
    /// `sigma_T` is infinite, so the inequality holds trivially.
    TriviallySatisfied,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub sigma_t: f64,
    pub sigma_e: f64,
    pub p_hat: f64,
    pub product: f64,
    /// `hbar/2`, or `sqrt(p_hat) hbar/2` when detection is not certain.
    pub bound: f64,
    pub margin: f64,
    /// `E[T | T < inf] sigma_E`; reported only, no bound is asserted.
    pub mean_time_energy: f64,
    pub status: BoundStatus,
}

pub fn uncertainty_product_report(
    stats: &DetectionStats,
    sigma_e: f64,
    constants: PhysicalConstants,
) -> ProductReport {
    let half = constants.hbar / 2.0;
    let bound = if stats.p_hat < 1.0 - CERTAIN_DETECTION {
        stats.p_hat.max(0.0).sqrt() * half
    } else {
        half
    };
    let product = stats.sigma_t * sigma_e;
    let status = if stats.sigma_t.is_infinite() {
        BoundStatus::TriviallySatisfied
    } else if product >= bound {
        BoundStatus::Satisfied
    } else {
        BoundStatus::Violated
    };
    ProductReport {
        sigma_t: stats.sigma_t,
        sigma_e,
        p_hat: stats.p_hat,
        product,
        bound,
        margin: product - bound,
        mean_time_energy: stats.mean_t * sigma_e,
        status,
    }
}
