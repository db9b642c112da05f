#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::SparseMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = SparseMatrix::from_triplets(text) {
        let again = SparseMatrix::from_triplets(&m.to_triplets()).unwrap();
        assert_eq!(again.to_bytes(), m.to_bytes());
    }
});
