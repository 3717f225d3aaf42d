#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = medqa::medproc::parse_mentions_tsv(text);
        let _ = medqa::medproc::parse_indexing_tsv(text);
        let _ = medqa::medproc::parse_examples(text);
    }
});
