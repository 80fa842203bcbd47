#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(inst) = shog::ContourInstance::from_json_str(s) {
            let back = shog::ContourInstance::from_json_str(&inst.to_json_string()).unwrap();
            assert_eq!(back, inst);
        }
    }
});
