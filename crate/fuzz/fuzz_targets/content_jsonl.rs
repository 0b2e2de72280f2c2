#![no_main]

use libfuzzer_sys::fuzz_target;

use placelab::window::TimeWindow;

fuzz_target!(|data: &[u8]| {
    let _ = placelab::ingest::parse_content(data, None);
    let _ = placelab::ingest::parse_content(data, Some(&TimeWindow::during_place()));
});
