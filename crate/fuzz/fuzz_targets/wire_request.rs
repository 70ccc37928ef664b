#![no_main]
use houou_server::wire::{CreateRequest, SubmitRequest};
use houou_server::Service;
use libfuzzer_sys::fuzz_target;

// Request bodies as the HTTP layer would decode them, then applied to a
// live session.
fuzz_target!(|data: &[u8]| {
    let svc = Service::with_heads(None, None, 1);
    let create = serde_json::from_slice::<CreateRequest>(data).ok().filter(|r| r.deadline_secs.is_none());
    let Ok(c) = svc.create(&create.unwrap_or_default()) else { return };
    if let Ok(req) = serde_json::from_slice::<SubmitRequest>(data) {
        let before = svc.observe(&c.session).unwrap();
        match svc.submit(&c.session, &req) {
            Ok(s) if !s.outcome.accepted => assert_eq!(s.outcome.observation, before),
            _ => {}
        }
    }
});
