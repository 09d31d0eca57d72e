#![no_main]

use gqarch_ito::pipeline::io::read_fit;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(fit) = read_fit(data) {
        let _ = fit.hessian_pd();
        let _ = fit.to_json();
    }
});
