#![no_main]
use houou_core::records::{emit_canonical, parse_canonical};
use houou_core::records::tenhou::ingest_tenhou;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let r = ingest_tenhou(data, "fuzz");
    // Admitted logs always replay.
    if !r.corpus.logs.is_empty() {
        parse_canonical(&emit_canonical(&r.corpus)).expect("admitted logs replay");
    }
});
