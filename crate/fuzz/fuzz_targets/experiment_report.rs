#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::eval::ExperimentReport;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<ExperimentReport>(data);
});
