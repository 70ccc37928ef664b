#![no_main]
use houou_core::records::{emit_canonical, parse_canonical, parse_canonical_unchecked};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = parse_canonical_unchecked(data) {
        // Anything accepted re-emits to bytes that parse to the same corpus.
        let again = parse_canonical_unchecked(&emit_canonical(&c)).expect("emitted corpus parses");
        assert_eq!(again, c);
    }
    let _ = parse_canonical(data);
});
