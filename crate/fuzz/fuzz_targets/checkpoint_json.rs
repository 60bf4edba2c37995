#![no_main]

use inforelay::recnet::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ck) = Checkpoint::from_json(text) {
        let again = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(again.params.to_flat().len(), ck.params.to_flat().len());
    }
});
