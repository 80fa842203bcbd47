#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(model) = shog::model::LinearModel::from_json_str(s) {
            assert_eq!(model.weights.len(), model.dim);
        }
    }
});
