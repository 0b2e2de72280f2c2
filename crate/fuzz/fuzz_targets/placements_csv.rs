#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = placelab::ingest::parse_placements(data, &placelab::ingest::PlacementOptions::default());
});
