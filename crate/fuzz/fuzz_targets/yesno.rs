#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = medqa::answer::normalize_yesno(text) {
            assert_eq!(medqa::answer::normalize_yesno(v.as_str()), Ok(v));
        }
    }
});
