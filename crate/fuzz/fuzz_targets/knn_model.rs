#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::classify::KnnModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = KnnModel::from_bytes(data) {
        let bytes = m.to_bytes();
        assert_eq!(KnnModel::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
});
