#![no_main]
use libfuzzer_sys::fuzz_target;
use qshield_cli::config::ConfigFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ConfigFile::parse(text);
    }
});
