#![no_main]

use libfuzzer_sys::fuzz_target;

use placelab_cli::artifacts::{decode_activity, decode_canvas, decode_placements, encode_placements};

fuzz_target!(|data: &[u8]| {
    if let Ok(events) = decode_placements(data) {
        assert_eq!(encode_placements(&events), data);
    }
    let _ = decode_canvas(data);
    let _ = decode_activity(data);
});
