#![no_main]

use inforelay::recnet::Arch;
use inforelay::taskgen::{DelayRegime, Task};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = text.parse::<DelayRegime>() {
        assert!(r.validate().is_ok());
        assert_eq!(r.to_string().parse::<DelayRegime>().unwrap(), r);
    }
    let _ = text.parse::<Task>();
    let _ = text.parse::<Arch>();
});
