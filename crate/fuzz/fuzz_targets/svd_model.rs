#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::lsa::SvdModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = SvdModel::from_bytes(data) {
        let bytes = m.to_bytes();
        assert_eq!(SvdModel::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
});
