#![no_main]
use houou_nn::io::from_bytes;
use houou_play::PolicyHead;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = PolicyHead::from_bytes(data);
    // Re-seal the checksum so the parser past it is reached too.
    if data.len() >= 16 {
        let mut sealed = data[..data.len() - 4].to_vec();
        sealed.extend_from_slice(&crc32fast::hash(&sealed).to_le_bytes());
        let _ = from_bytes::<f32>(&sealed, None);
        let _ = PolicyHead::from_bytes(&sealed);
    }
});
