#![no_main]

use libfuzzer_sys::fuzz_target;

use placelab::matrix::FeatureMatrix;
use placelab::models::{load_model, predict};

fuzz_target!(|data: &[u8]| {
    // a model that loads must also predict and explain without panicking
    if let Ok(model) = load_model(data) {
        let names = model.feature_names().to_vec();
        let row = vec![0.5; names.len()];
        if let Ok(m) = FeatureMatrix::new(vec!["c".into()], names, vec![row]) {
            let _ = predict(&model, &m);
            let _ = placelab::explain::explain_matrix(&model, &m);
        }
    }
});
