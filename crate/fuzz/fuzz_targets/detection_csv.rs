#![no_main]

use abrule::detection::{conditional_time_moments, detection_probability, DetectionRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&flag, body)) = data.split_first() else { return };
    let Ok(record) = DetectionRecord::read_csv(body, flag & 1 == 1) else { return };
    let _ = detection_probability(&record, None);
    if let Ok(s) = conditional_time_moments(&record) {
        assert!(s.var_t >= 0.0 || s.var_t.is_nan());
    }
    let mut out = Vec::new();
    record.write_csv(&mut out).expect("write");
    let back = DetectionRecord::read_csv(&out[..], record.is_bounded()).expect("reparse");
    assert_eq!(back.len(), record.len());
});
