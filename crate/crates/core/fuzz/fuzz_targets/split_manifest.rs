#![no_main]

use libfuzzer_sys::fuzz_target;
use mutadetect::dataset::parse_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_manifest(text) {
        // Cutting an empty sample list must report an error, never panic.
        let _ = m.apply(&[]);
    }
});
