#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::DenseMatrix;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = DenseMatrix::from_bytes(data) {
        assert_eq!(m.to_bytes(), data);
    }
});
