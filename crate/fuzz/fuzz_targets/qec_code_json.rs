#![no_main]
use libfuzzer_sys::fuzz_target;
use qshield::qec::QecCode;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(code) = QecCode::from_json(text) {
        let back = QecCode::from_json(&code.to_json().expect("serializes")).expect("round trip");
        assert_eq!(back.block_size(), code.block_size());
    }
});
