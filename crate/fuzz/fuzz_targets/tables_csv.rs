#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = placelab::matrix::FeatureMatrix::read_csv(data);
    let _ = placelab::labels::read_labels_csv(data);
    let _ = placelab::artwork::read_metrics_csv(data);
});
