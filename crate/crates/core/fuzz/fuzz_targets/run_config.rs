#![no_main]

use libfuzzer_sys::fuzz_target;
use mutadetect::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse(text) {
        let json = cfg.to_json().expect("serialize");
        assert_eq!(RunConfig::parse(&json).expect("round trip"), cfg);
    }
});
