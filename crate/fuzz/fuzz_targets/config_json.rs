#![no_main]

use abrule::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = ExperimentConfig::from_json(text) else { return };
    // whatever parses must survive a round trip and validate without panicking
    let back = ExperimentConfig::from_json(&config.to_json()).expect("round trip");
    assert_eq!(back, config);
    assert_eq!(back.hash(), config.hash());
    let _ = config.validate();
});
