#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::classify::LinearModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = LinearModel::from_bytes(data) {
        let bytes = m.to_bytes();
        assert_eq!(LinearModel::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
});
