#![no_main]

use gqarch_ito::pipeline::{ingest_ticks, SessionCalendar};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let cal = SessionCalendar {
        min_ticks: 2,
        ..Default::default()
    };
    if let Ok(panel) = ingest_ticks(data, &cal) {
        panel.validate().expect("ingested panel must be valid");
    }
});
