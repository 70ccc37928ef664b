use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures::StreamExt;
use houou_core::records::{parse_canonical, replay};
use houou_core::tiles::{TileFace, TileKind};
use houou_play::sim::TOTAL_POINTS;
use houou_play::{PolicyHead, PolicySet, Preset};
use houou_core::dataset::Task;
use houou_server::http::router;
use houou_server::wire::*;
use houou_server::{Service, ServiceError};
use serde_json::Value;
use tower::ServiceExt;

fn service() -> Service {
    Service::with_heads(None, None, 7)
}

fn with_heads() -> Service {
    Service::with_heads(Some(Arc::new(PolicySet::untrained(Preset::Small, 5))), None, 7)
}

fn req(seed: u64) -> CreateRequest {
    CreateRequest {
        seed: Some(seed),
        ..CreateRequest::default()
    }
}

fn submit(key: &str, action: WireAction) -> SubmitRequest {
    SubmitRequest {
        idempotency_key: key.into(),
        action,
    }
}

/// A simple human: pass on claims, otherwise discard the last offered tile.
fn choose(obs: &Observation) -> WireAction {
    if obs.legal.contains(&WireAction::Pass) {
        return WireAction::Pass;
    }
    obs.legal.iter().rev().find(|a| matches!(a, WireAction::Discard { .. })).or(obs.legal.first()).cloned().expect("a pending decision")
}

/// Forbidden anywhere in a human-facing payload: other hands and the wall.
fn audit(v: &Value, human: u8) {
    match v {
        Value::Object(m) => {
            for k in ["hands", "wall", "live_wall", "dead_wall", "ura_indicators"] {
                assert!(!m.contains_key(k), "hidden key {k} in {v}");
            }
            if m.get("e").and_then(Value::as_str) == Some("draw") {
                let seat = m["seat"].as_u64().unwrap() as u8;
                assert_eq!(m.contains_key("tile"), seat == human, "draw leak in {v}");
            }
            m.values().for_each(|x| audit(x, human));
        }
        Value::Array(a) => a.iter().for_each(|x| audit(x, human)),
        _ => {}
    }
}

#[test]
fn created_session_waits_for_the_dealer_discard() {
    let svc = service();
    let c = svc.create(&req(11)).unwrap();
    assert_eq!(c.v, API_VERSION);
    assert_eq!(c.seed, 11);
    assert_eq!(c.layout, "mj86-v1");
    let o = &c.observation;
    assert_eq!(o.status, Status::YourTurn);
    assert_eq!(o.view.seat, 0);
    assert_eq!(o.view.hand.len(), 14);
    assert!(o.view.drawn.is_some_and(|d| o.view.hand.contains(&d)));
    assert!(o.claim.is_none() && o.hint.is_none() && o.result.is_none());
    // SubgameStart, the redacted deal, the dealer's own draw.
    assert_eq!(o.seq, 3);
    let a = choose(o);
    let s = svc.submit(&c.session, &submit("k1", a)).unwrap();
    assert!(s.outcome.accepted && !s.duplicate);
    assert!(s.outcome.observation.seq > o.seq);
    assert_eq!(svc.observe(&c.session).unwrap(), s.outcome.observation);
}

#[test]
fn sessions_are_reproducible_from_their_seed() {
    let svc = service();
    let play = |seed| {
        let c = svc.create(&req(seed)).unwrap();
        let mut o = c.observation;
        for i in 0..30 {
            if o.status == Status::GameOver {
                break;
            }
            o = svc.submit(&c.session, &submit(&i.to_string(), choose(&o))).unwrap().outcome.observation;
        }
        let mut o = serde_json::to_value(&o).unwrap();
        o["session"] = Value::Null;
        o
    };
    assert_eq!(play(3), play(3));
    assert_ne!(play(3), play(4));
}

#[test]
fn illegal_discard_is_rejected_and_changes_nothing() {
    let svc = service();
    let c = svc.create(&req(11)).unwrap();
    let o = c.observation;
    let held: Vec<TileKind> = o.view.hand.iter().map(|f| f.kind).collect();
    let absent = TileKind::all().find(|k| !held.contains(k)).unwrap();
    let s = svc.submit(&c.session, &submit("bad", WireAction::Discard { tile: TileFace::plain(absent) })).unwrap();
    assert!(!s.outcome.accepted);
    assert_eq!(s.outcome.error.as_deref(), Some("action is not in the legal set"));
    assert_eq!(s.outcome.observation, o);
    assert_eq!(svc.observe(&c.session).unwrap(), o);
    // Wrong action type, too.
    let s = svc.submit(&c.session, &submit("ron", WireAction::Ron)).unwrap();
    assert!(!s.outcome.accepted);
    assert_eq!(s.outcome.observation.legal, o.legal);
}

#[test]
fn resubmitted_key_replays_the_first_outcome() {
    let svc = service();
    let c = svc.create(&req(11)).unwrap();
    let a = choose(&c.observation);
    let first = svc.submit(&c.session, &submit("same", a.clone())).unwrap();
    let seq = first.outcome.observation.seq;
    let again = svc.submit(&c.session, &submit("same", a)).unwrap();
    assert!(again.duplicate);
    assert_eq!(again.outcome, first.outcome);
    assert_eq!(svc.observe(&c.session).unwrap().seq, seq);
    assert_eq!(svc.submit(&c.session, &submit("", WireAction::Pass)).err(), Some(ServiceError::MissingKey));
}

#[test]
fn bad_configs_are_refused() {
    let svc = service();
    let bad = |r: CreateRequest| matches!(svc.create(&r), Err(ServiceError::Config(_)));
    assert!(bad(CreateRequest { human_seat: 4, ..req(1) }));
    assert!(bad(CreateRequest {
        bots: ["greedy".into(), "alien".into(), "random".into()],
        ..req(1)
    }));
    assert!(bad(CreateRequest {
        bots: ["network".into(), "random".into(), "random".into()],
        ..req(1)
    }));
    assert!(bad(CreateRequest { hints: true, ..req(1) }));
    let svc = with_heads();
    assert!(matches!(
        svc.create(&CreateRequest {
            hints: true,
            fair_play: true,
            ..req(1)
        }),
        Err(ServiceError::Config(_))
    ));
    assert_eq!(svc.observe("nope").err(), Some(ServiceError::UnknownSession("nope".into())));
}

#[test]
fn passing_a_claim_lets_the_bots_continue() {
    let svc = service();
    let mut seen = false;
    'seeds: for seed in 0..20 {
        let c = svc.create(&CreateRequest {
            human_seat: 2,
            bots: ["random".into(), "random".into(), "random".into()],
            ..req(seed)
        })
        .unwrap();
        let mut o = c.observation;
        for i in 0..300 {
            if o.status == Status::GameOver {
                break;
            }
            if let Some(claim) = &o.claim {
                assert!(o.legal.contains(&WireAction::Pass));
                assert_ne!(claim.from, 2);
                let before = o.seq;
                let s = svc.submit(&c.session, &submit("pass", WireAction::Pass)).unwrap().outcome;
                assert!(s.accepted);
                // Someone drew after the pass.
                assert!(s.observation.seq > before);
                seen = true;
                break 'seeds;
            }
            o = svc.submit(&c.session, &submit(&i.to_string(), choose(&o))).unwrap().outcome.observation;
        }
    }
    assert!(seen, "no claim offered in 20 games");
}

#[test]
fn full_game_conserves_points_and_transcript_replays() {
    let svc = service();
    let c = svc.create(&CreateRequest { human_seat: 1, ..req(21) }).unwrap();
    assert!(svc.transcript(&c.session).unwrap().is_empty());
    let session = svc.session(&c.session).unwrap();
    let mut o = c.observation.clone();
    let mut n = 0;
    let mut payloads = vec![serde_json::to_value(&c).unwrap()];
    while o.status != Status::GameOver {
        let s = svc.submit(&c.session, &submit(&n.to_string(), choose(&o))).unwrap().outcome;
        assert!(s.accepted);
        o = s.observation.clone();
        {
            let g = session.lock().unwrap();
            let st = g.state();
            assert_eq!(st.scores().iter().sum::<i32>() + 1000 * st.pot() as i32, TOTAL_POINTS);
            assert!(st.invariant_violations().is_empty());
        }
        if n % 25 == 0 {
            payloads.push(serde_json::to_value(&s).unwrap());
        }
        n += 1;
        assert!(n < 5000);
    }
    let result = o.result.clone().expect("final result");
    assert_eq!(result.scores.iter().sum::<i32>() + 1000 * result.pot as i32, TOTAL_POINTS);
    assert!(o.legal.is_empty());
    let mut ranks = result.ranks;
    ranks.sort();
    assert_eq!(ranks, [1, 2, 3, 4]);
    // Transcript: every subgame, each replaying through the engine.
    let bytes = svc.transcript(&c.session).unwrap();
    let corpus = parse_canonical(&bytes).expect("transcript replays");
    assert!(corpus.logs.len() >= 4);
    assert!(corpus.logs.iter().enumerate().all(|(i, l)| l.header.subgame == i as u32 && l.header.players[1] == "human"));
    let last = replay(corpus.logs.last().unwrap()).unwrap();
    assert_eq!(last.scores(), result.scores);
    // Information hiding over every response type and the whole stream.
    payloads.push(serde_json::to_value(&o).unwrap());
    let (events, _) = session.lock().unwrap().subscribe(0);
    assert_eq!(events.len() as u64, o.seq);
    payloads.push(serde_json::to_value(&events).unwrap());
    payloads.push(serde_json::to_value(svc.models()).unwrap());
    for p in &payloads {
        audit(p, 1);
        // Every payload carries the protocol version and the feature layout tag.
        let items = p.as_array().cloned().unwrap_or_else(|| vec![p.clone()]);
        assert!(items.iter().all(|x| x["v"] == 1 && x["layout"] == "mj86-v1"), "{p}");
    }
    let game_over = events.iter().filter(|e| matches!(e.event, PublicEvent::Session(SessionEvent::GameOver { .. }))).count();
    assert_eq!(game_over, 1);
    let deals: Vec<_> = events.iter().filter_map(|e| match &e.event {
        PublicEvent::Session(SessionEvent::Deal { hand, .. }) => Some(hand.len()),
        _ => None,
    }).collect();
    assert_eq!(deals.len(), corpus.logs.len());
    assert!(deals.iter().all(|&k| k == 13));
}

#[test]
fn observation_shows_only_the_humans_tiles() {
    let svc = service();
    let c = svc.create(&CreateRequest { human_seat: 3, ..req(5) }).unwrap();
    let session = svc.session(&c.session).unwrap();
    let mut o = c.observation;
    for i in 0..60 {
        if o.status == Status::GameOver {
            break;
        }
        {
            let g = session.lock().unwrap();
            let mut mine: Vec<TileFace> = g.state().hand(3).iter().map(|t| t.face()).collect();
            let mut shown = o.view.hand.clone();
            mine.sort();
            shown.sort();
            assert_eq!(shown, mine);
            assert_eq!(o.view.live_remaining, g.state().wall().live_remaining());
        }
        audit(&serde_json::to_value(&o).unwrap(), 3);
        o = svc.submit(&c.session, &submit(&i.to_string(), choose(&o))).unwrap().outcome.observation;
    }
}

#[test]
fn hints_only_on_own_turn_and_never_in_fair_play() {
    let svc = with_heads();
    let c = svc.create(&CreateRequest { hints: true, ..req(9) }).unwrap();
    let h = c.observation.hint.clone().expect("hint on the dealer's first turn");
    assert_eq!(h.kinds.len(), 34);
    assert!((h.kinds.iter().sum::<f32>() - 1.0).abs() < 1e-4);
    assert_eq!(h.hand.len(), c.observation.view.hand.len());
    let mut o = c.observation;
    for i in 0..200 {
        if o.status == Status::GameOver {
            break;
        }
        assert_eq!(o.hint.is_some(), o.claim.is_none());
        o = svc.submit(&c.session, &submit(&i.to_string(), choose(&o))).unwrap().outcome.observation;
    }
    let c = svc.create(&CreateRequest { fair_play: true, ..req(9) }).unwrap();
    assert!(c.observation.hint.is_none());
}

#[test]
fn expired_deadline_plays_the_default() {
    let svc = service();
    let c = svc.create(&CreateRequest {
        deadline_secs: Some(0),
        ..req(11)
    })
    .unwrap();
    let o = svc.observe(&c.session).unwrap();
    assert!(o.seq > c.observation.seq);
}

#[test]
fn model_listing_reports_saved_heads() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!Service::new(Some(dir.path()), 1).unwrap().models().loaded);
    for t in Task::ALL {
        PolicyHead::untrained(t, Preset::Small, 3).save(&dir.path().join(format!("{}.honn", t.name()))).unwrap();
    }
    std::fs::write(dir.path().join("junk.honn"), b"not a model").unwrap();
    let svc = Service::new(Some(dir.path()), 1).unwrap();
    let list = svc.models();
    assert!(list.loaded);
    let tasks: Vec<&str> = list.models.iter().map(|m| m.task.as_str()).collect();
    assert_eq!(tasks, ["chi", "discard", "pon", "riichi"]);
    let d = &list.models[1];
    assert_eq!((d.file.as_str(), d.classes, d.layout.as_str()), ("discard.honn", 34, "mj86-v1"));
    assert_eq!(d.parameters, PolicyHead::untrained(Task::Discard, Preset::Small, 3).model.num_params());
    // Network bots play from the loaded set.
    let c = svc.create(&CreateRequest {
        bots: ["network".into(), "network".into(), "greedy".into()],
        ..req(2)
    })
    .unwrap();
    let o = svc.submit(&c.session, &submit("x", choose(&c.observation))).unwrap().outcome;
    assert!(o.accepted);
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut b = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            b = b.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let r = app.clone().oneshot(b.body(body).unwrap()).await.unwrap();
    let code = r.status();
    let bytes = axum::body::to_bytes(r.into_body(), usize::MAX).await.unwrap();
    (code, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn http_routes_round_trip() {
    let app = router(Arc::new(service()));
    let (code, created) = call(&app, "POST", "/v1/sessions", Some(serde_json::json!({"seed": 11}))).await;
    assert_eq!(code, StatusCode::OK);
    let id = created["session"].as_str().unwrap().to_string();
    assert_eq!(created["observation"]["status"], "your_turn");
    let (code, obs) = call(&app, "GET", &format!("/v1/sessions/{id}/observation"), None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(obs, created["observation"]);
    let (code, rej) = call(&app, "POST", &format!("/v1/sessions/{id}/actions"), Some(serde_json::json!({"idempotency_key": "a", "action": {"type": "tsumo"}}))).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(rej["accepted"], false);
    assert_eq!(rej["observation"], obs);
    let action = obs["legal"].as_array().unwrap().last().unwrap().clone();
    let (code, ok) = call(&app, "POST", &format!("/v1/sessions/{id}/actions"), Some(serde_json::json!({"idempotency_key": "b", "action": action}))).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(ok["accepted"], true);
    let (code, err) = call(&app, "POST", &format!("/v1/sessions/{id}/actions"), Some(serde_json::json!({"idempotency_key": "", "action": {"type": "pass"}}))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!((&err["v"], &err["layout"]), (&Value::from(1), &Value::from("mj86-v1")));
    let (code, err) = call(&app, "GET", "/v1/sessions/missing/observation", None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "unknown session missing");
    let (code, _) = call(&app, "POST", "/v1/sessions", Some(serde_json::json!({"human_seat": 9}))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    let (code, models) = call(&app, "GET", "/v1/models", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(models, serde_json::json!({"v": 1, "layout": "mj86-v1", "models": [], "loaded": false}));
    let r = app.clone().oneshot(Request::get(format!("/v1/sessions/{id}/transcript")).body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()["content-type"], "application/x-ndjson");
}

async fn read_events(app: &axum::Router, id: &str, after: u64, want: usize) -> Vec<Value> {
    let r = app.clone().oneshot(Request::get(format!("/v1/sessions/{id}/events?after={after}")).body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()["content-type"], "text/event-stream");
    let mut stream = r.into_body().into_data_stream();
    let mut text = String::new();
    let mut items = Vec::new();
    while items.len() < want {
        let chunk = stream.next().await.expect("stream open").unwrap();
        text.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(end) = text.find("\n\n") {
            let frame: String = text.drain(..end + 2).collect();
            let id = frame.lines().find_map(|l| l.strip_prefix("id:")).map(|s| s.trim().to_string());
            if let Some(data) = frame.lines().find_map(|l| l.strip_prefix("data:")) {
                let v: Value = serde_json::from_str(data.trim()).unwrap();
                assert_eq!(id.as_deref(), Some(v["seq"].to_string().as_str()));
                items.push(v);
            }
        }
    }
    items
}

#[tokio::test]
async fn event_stream_is_ordered_and_resumable() {
    let svc = Arc::new(service());
    let app = router(svc.clone());
    let c = svc.create(&CreateRequest { human_seat: 2, ..req(13) }).unwrap();
    let mut o = c.observation;
    for i in 0..5 {
        o = svc.submit(&c.session, &submit(&i.to_string(), choose(&o))).unwrap().outcome.observation;
    }
    let all = read_events(&app, &c.session, 0, o.seq as usize).await;
    let seqs: Vec<u64> = all.iter().map(|v| v["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=o.seq).collect::<Vec<_>>());
    assert_eq!(all[0]["event"]["e"], "subgame_start");
    assert_eq!(all[1]["event"]["e"], "deal");
    assert_eq!(all[1]["event"]["hand"].as_array().unwrap().len(), 13);
    for v in &all {
        audit(v, 2);
    }
    let tail = read_events(&app, &c.session, 4, 3).await;
    assert_eq!(tail, all[4..7].to_vec());
    // Live delivery: a subscriber sees events produced after it connected.
    let app2 = app.clone();
    let id = c.session.clone();
    let from = o.seq;
    let live = tokio::spawn(async move { read_events(&app2, &id, from, 1).await });
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    let next = svc.submit(&c.session, &submit("live", choose(&o))).unwrap().outcome.observation;
    assert!(next.seq > from);
    let got = live.await.unwrap();
    assert_eq!(got[0]["seq"].as_u64().unwrap(), from + 1);
}
