#![no_main]

use libfuzzer_sys::fuzz_target;
use mutadetect::dataset::parse_samples;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((header, samples)) = parse_samples(text) {
        assert_eq!(header.count, samples.len());
        assert!(samples.iter().all(|s| s.window() == header.window && s.label <= 1));
    }
});
