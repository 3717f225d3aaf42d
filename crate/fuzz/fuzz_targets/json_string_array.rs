#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(items) = medqa::answer::parse_json_string_array(text) {
            assert!(items.iter().all(|s| !s.is_empty() && s.trim() == s));
        }
    }
});
