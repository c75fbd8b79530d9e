#![no_main]
use libfuzzer_sys::fuzz_target;
use qshield::circuits::ParamCircuit;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = ParamCircuit::from_json(text) {
        let back = ParamCircuit::from_json(&c.to_json().expect("serializes")).expect("round trip");
        assert_eq!(back.param_count(), c.param_count());
    }
});
