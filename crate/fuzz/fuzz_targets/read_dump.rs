#![no_main]
use houou_core::features::{check_dump, read_dump, write_dump};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let n = check_dump(data);
    match read_dump(data) {
        Ok(stacks) => {
            assert_eq!(n.ok(), Some(stacks.len()));
            assert_eq!(write_dump(&stacks), data);
        }
        Err(_) => assert!(n.is_err()),
    }
});
