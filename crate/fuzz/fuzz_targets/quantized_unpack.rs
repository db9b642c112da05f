#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::QuantizedMatrix;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = QuantizedMatrix::unpack(data) {
        let bytes = m.pack();
        assert_eq!(QuantizedMatrix::unpack(&bytes).unwrap(), m);
    }
});
