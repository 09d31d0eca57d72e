#![no_main]

use gqarch_ito::pipeline::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        let _ = cfg.validate();
        let _ = cfg.split(250);
        let json = cfg.to_json().expect("serialize");
        assert_eq!(RunConfig::from_json(&json).expect("re-parse"), cfg);
    }
});
