#![no_main]
use libfuzzer_sys::fuzz_target;
use qshield::dataset::{decode_dataset, encode_dataset};

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = decode_dataset(data) {
        // anything accepted must re-encode to something that decodes the same
        let again = decode_dataset(&encode_dataset(&ds)).expect("re-encoded dataset decodes");
        assert_eq!(encode_dataset(&again), encode_dataset(&ds));
    }
});
