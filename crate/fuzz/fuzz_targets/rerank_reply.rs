#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for n in [0usize, 1, 10, 50] {
            if let Ok(indices) = medqa::retrieval::parse_rerank_reply(text, n) {
                assert!(indices.len() <= 10);
                assert!(indices.iter().all(|&i| i >= 1 && i <= n));
            }
        }
    }
});
