#![no_main]

use abrule::energy::EnergyDensity;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(density) = EnergyDensity::read_csv(data) else { return };
    let _ = density.moments();
    let mut out = Vec::new();
    density.write_csv(&mut out).expect("write");
    let back = EnergyDensity::read_csv(&out[..]).expect("reparse");
    assert_eq!(back.energies.len(), density.energies.len());
});
