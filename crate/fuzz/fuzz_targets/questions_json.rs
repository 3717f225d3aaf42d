#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = medqa::bioasq::parse_questions(text);
        let _ = medqa::bioasq::parse_gold(text);
    }
});
