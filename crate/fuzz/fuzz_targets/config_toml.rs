#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = shog::config::PipelineConfig::from_toml_str(s) {
            assert!(cfg.rays >= 3);
        }
    }
});
