#![no_main]

use libfuzzer_sys::fuzz_target;
use mutadetect::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(ck) = Checkpoint::parse(text) else {
        return;
    };
    let bytes = ck.to_json().expect("serialize");
    let back = Checkpoint::parse(std::str::from_utf8(&bytes).unwrap()).expect("round trip");
    assert_eq!(back.threshold.to_bits(), ck.threshold.to_bits());
    let _ = ck.into_fitted();
});
