#![no_main]

use libfuzzer_sys::fuzz_target;
use mutadetect::embedding::TrigramTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = TrigramTable::parse(data, 1) {
        assert!(table.dim() > 0);
        let v = table.vector(b"MKT").expect("lookups of valid trigrams succeed");
        assert_eq!(v.len(), table.dim());
        assert!(v.iter().all(|x| x.is_finite()));
    }
});
