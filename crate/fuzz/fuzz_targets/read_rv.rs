#![no_main]

use gqarch_ito::pipeline::io::{read_rv, write_rv};
use gqarch_ito::RvConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rv) = read_rv(data, RvConfig::default()) {
        let mut buf = Vec::new();
        write_rv(&rv, &mut buf).expect("write");
        assert_eq!(read_rv(buf.as_slice(), RvConfig::default()).expect("re-read"), rv);
    }
});
