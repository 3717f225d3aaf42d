#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let tags = vec!["procedure".to_string()];
        let columns = medqa::config::GazetteerColumns::default();
        if let Ok(entries) = medqa::medproc::parse_gazetteer(text, &columns, &tags) {
            let gazetteer = medqa::medproc::Gazetteer::new(entries);
            let _ = gazetteer.link("biopsia renal", 0.25);
        }
    }
});
