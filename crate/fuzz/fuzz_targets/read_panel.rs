#![no_main]

use gqarch_ito::pipeline::io::{read_panel, write_panel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(panel) = read_panel(data) {
        // whatever parses must survive a write/read cycle unchanged
        let mut buf = Vec::new();
        write_panel(&panel, &mut buf).expect("write");
        let back = read_panel(buf.as_slice()).expect("re-read");
        assert_eq!(panel.days, back.days);
    }
});
