#![no_main]

use libfuzzer_sys::fuzz_target;
use mutadetect::dataset::{parse_corpus_str, CorpusFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cohorts) = parse_corpus_str(text, CorpusFormat::Fasta) {
        assert!(!cohorts.is_empty());
        assert!(cohorts.windows(2).all(|w| w[0].time_index < w[1].time_index));
        let len = cohorts[0].records[0].len();
        assert!(cohorts.iter().flat_map(|c| &c.records).all(|r| r.len() == len));
    }
});
