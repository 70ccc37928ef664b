#![no_main]
use houou_core::records::tenhou::decode_meld;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: [u8; 4]| {
    if let Ok(m) = decode_meld(u32::from_le_bytes(data)) {
        assert!(m.from_rel <= 3 && (3..=4).contains(&m.tiles.len()));
    }
});
