#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = serde_json::from_str::<medqa::llm::Cassette>(text);
        let _ = serde_json::from_str::<medqa::llm::ScriptFile>(text);
        let _ = serde_json::from_str::<medqa::pubmed::PubmedCassette>(text);
    }
});
