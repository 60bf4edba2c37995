#![no_main]

use inforelay::experiment::{summarize, Manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::from_json(text) {
        let printed = m.to_json().unwrap();
        assert_eq!(Manifest::from_json(&printed).unwrap().to_json().unwrap(), printed);
        let _ = summarize(&m);
    }
});
