#![no_main]
use libfuzzer_sys::fuzz_target;
use qshield::classifier::ClassifierModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = ClassifierModel::from_json(text) {
        let back = ClassifierModel::from_json(&model.to_json().expect("serializes")).expect("round trip");
        assert_eq!(back.params(), model.params());
    }
});
