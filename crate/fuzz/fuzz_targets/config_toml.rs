#![no_main]

use inforelay::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        let printed = cfg.to_toml_string().unwrap();
        let reparsed = ExperimentConfig::from_toml_str(&printed).unwrap();
        assert_eq!(reparsed.to_toml_string().unwrap(), printed);
        if cfg.validate().is_ok() {
            let _ = cfg.cells();
        }
    }
});
