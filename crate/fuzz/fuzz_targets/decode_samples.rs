#![no_main]
use houou_core::dataset::decode_samples;
use libfuzzer_sys::fuzz_target;

// First two bytes: where to split the input into planes and labels.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let at = (u16::from_le_bytes([data[0], data[1]]) as usize).min(data.len() - 2);
    let (planes, labels) = data[2..].split_at(at);
    let _ = decode_samples(planes, labels);
});
