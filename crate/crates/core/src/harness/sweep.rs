use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::format_float;
use crate::error::{Error, Result};

use super::config::{ExperimentConfig, PotentialSpec, StateSpec};
use super::run::{run_experiment, UncertaintyReport};

/// Parameters a sweep axis may vary.
pub const AXIS_NAMES: [&str; 9] = [
    "kappa",
    "x0",
    "p0",
    "sigma_x",
    "half_width",
    "potential",
    "n_interior",
    "dt",
    "t_max",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Parses `name=v1,v2,...`.
pub fn parse_axis(text: &str) -> Result<SweepAxis> {
    let (name, list) = text
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("axis `{text}`: expected name=v1,v2,...")))?;
    let name = name.trim();
    if !AXIS_NAMES.contains(&name) {
        return Err(Error::Parse(format!(
            "unknown axis `{name}`; expected one of {}",
            AXIS_NAMES.join(", ")
        )));
    }
    let values = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("axis `{name}`: `{s}` is not a finite number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Parse(format!("axis `{name}` has no values")));
    }
    Ok(SweepAxis {
        name: name.to_string(),
        values,
    })
}

fn whole(name: &'static str, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::invalid(name, format!("{value} is not a whole number")))
    }
}

/// Copy of `base` with one parameter replaced.
pub fn apply_axis(base: &ExperimentConfig, name: &str, value: f64) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    let mismatch = |what: &'static str| Error::invalid(what, "not a parameter of the configured kind");
    match name {
        "kappa" => c.kappa = value,
        "n_interior" => c.n_interior = whole("n_interior", value)?,
        "dt" => c.dt = Some(value),
        "t_max" => c.t_max = value,
        "x0" => match &mut c.state {
            StateSpec::Gaussian { x0, .. } => *x0 = value,
            StateSpec::Bump { center, .. } => *center = value,
            StateSpec::Modes { .. } => return Err(mismatch("x0")),
        },
        "p0" => match &mut c.state {
            StateSpec::Gaussian { p0, .. } | StateSpec::Bump { p0, .. } => *p0 = value,
            StateSpec::Modes { .. } => return Err(mismatch("p0")),
        },
        "sigma_x" => match &mut c.state {
            StateSpec::Gaussian { sigma_x, .. } => *sigma_x = value,
            _ => return Err(mismatch("sigma_x")),
        },
        "half_width" => match &mut c.state {
            StateSpec::Bump { half_width, .. } => *half_width = value,
            _ => return Err(mismatch("half_width")),
        },
        "potential" => match &mut c.potential {
            PotentialSpec::Constant { value: v } => *v = value,
            PotentialSpec::Bump { height, .. } => *height = value,
            PotentialSpec::None => c.potential = PotentialSpec::Constant { value },
        },
        other => return Err(Error::Parse(format!("unknown axis `{other}`"))),
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `(axis, value)` in axis order.
    pub params: Vec<(String, f64)>,
    /// Empty when the combination could not even be configured.
    pub config_hash: String,
    pub outcome: std::result::Result<UncertaintyReport, String>,
}

impl SweepRow {
    pub fn passed(&self) -> bool {
        self.outcome.as_ref().is_ok_and(|r| r.all_pass())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axes: Vec<String>,
    /// Cartesian-product order, last axis fastest.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(SweepRow::passed)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.passed()).count()
    }

    pub fn row(&self, config_hash: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.config_hash == config_hash)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.axes.iter().map(String::as_str).collect();
        header.extend([
            "config_hash",
            "status",
            "p_hat",
            "sigma_t",
            "sigma_e",
            "product",
            "bound",
            "margin",
            "delta_num",
            "error",
        ]);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.params.iter().map(|(_, v)| format_float(*v)).collect();
            rec.push(row.config_hash.clone());
            match &row.outcome {
                Ok(r) => {
                    let u = &r.uncertainty;
                    rec.push(if r.all_pass() { "pass" } else { "fail" }.to_string());
                    for v in [u.p_hat, u.sigma_t, u.sigma_e, u.product, u.bound, u.margin] {
                        rec.push(format_float(v));
                    }
                    rec.push(r.delta_num.map(format_float).unwrap_or_default());
                    rec.push(String::new());
                }
                Err(e) => {
                    rec.push("error".to_string());
                    rec.extend(std::iter::repeat_n(String::new(), 7));
                    rec.push(e.clone());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every combination of the axes in parallel. A failing combination is
/// recorded in its row and does not stop the sweep.
pub fn sweep(base: &ExperimentConfig, axes: &[SweepAxis]) -> Result<SweepTable> {
    if axes.is_empty() {
        return Err(Error::invalid("axes", "at least one sweep axis is required"));
    }
    for a in axes {
        if a.values.is_empty() {
            return Err(Error::invalid("axes", format!("axis `{}` has no values", a.name)));
        }
        if axes.iter().filter(|b| b.name == a.name).count() > 1 {
            return Err(Error::invalid("axes", format!("axis `{}` given twice", a.name)));
        }
    }
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let combos: Vec<Vec<(String, f64)>> = (0..total)
        .map(|mut index| {
            let mut params = vec![(String::new(), 0.0); axes.len()];
            for (slot, a) in params.iter_mut().zip(axes).rev() {
                let n = a.values.len();
                *slot = (a.name.clone(), a.values[index % n]);
                index /= n;
            }
            params
        })
        .collect();

    let rows = combos
        .into_par_iter()
        .map(|params| {
            let config = params
                .iter()
                .try_fold(base.clone(), |c, (name, v)| apply_axis(&c, name, *v));
            match config {
                Ok(c) => SweepRow {
                    config_hash: c.hash(),
                    outcome: run_experiment(&c).map_err(|e| e.to_string()),
                    params,
                },
                Err(e) => SweepRow {
                    config_hash: String::new(),
                    outcome: Err(e.to_string()),
                    params,
                },
            }
        })
        .collect();
    Ok(SweepTable {
        axes: axes.iter().map(|a| a.name.clone()).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_axis() {
        let a = parse_axis("kappa=0.1, 1,10").unwrap();
        assert_eq!(a.name, "kappa");
        assert_eq!(a.values, vec![0.1, 1.0, 10.0]);
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(parse_axis("kappa=").is_err());
        assert!(parse_axis("kappa").is_err());
        assert!(parse_axis("spin=1").is_err());
        assert!(parse_axis("kappa=1,x").is_err());
        assert!(parse_axis("kappa=inf").is_err());
    }

    #[test]
    fn whole_numbers_only_for_counts() {
        assert_eq!(whole("n", 255.0).unwrap(), 255);
        assert!(whole("n", 25.5).is_err());
        assert!(whole("n", -1.0).is_err());
    }
}
