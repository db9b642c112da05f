#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::SparseMatrix;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = SparseMatrix::from_bytes(data) {
        let again = SparseMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(again.to_bytes(), m.to_bytes());
    }
});
