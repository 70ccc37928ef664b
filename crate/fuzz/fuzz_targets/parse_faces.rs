#![no_main]
use houou_core::tiles::parse_faces;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_faces(data);
});
