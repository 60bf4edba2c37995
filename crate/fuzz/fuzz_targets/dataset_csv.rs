#![no_main]

use inforelay::taskgen::{read_dataset_csv, write_dataset_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(episodes) = read_dataset_csv(data) {
        let mut out = Vec::new();
        write_dataset_csv(&episodes, &mut out).unwrap();
        assert_eq!(read_dataset_csv(out.as_slice()).unwrap().len(), episodes.len());
    }
});
