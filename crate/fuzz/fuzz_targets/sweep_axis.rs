#![no_main]

use abrule::harness::{apply_axis, parse_axis, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

const BASE: &str = r#"{"geometry":{"kind":"interval","length":1.0,"left":"absorbing","right":"absorbing"},
    "n_interior":63,"kappa":1.0,"t_max":1.0,
    "state":{"kind":"gaussian","x0":0.5,"p0":0.0,"sigma_x":0.05}}"#;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(axis) = parse_axis(text) else { return };
    assert!(!axis.values.is_empty());
    assert!(axis.values.iter().all(|v| v.is_finite()));
    let base = ExperimentConfig::from_json(BASE).unwrap();
    for &v in &axis.values {
        let _ = apply_axis(&base, &axis.name, v).map(|c| c.validate());
    }
});
