use std::sync::Arc;

use houou_core::dataset::{extract_corpus, ExtractOptions, Sample, SampleKey, Task};
use houou_core::features::PlaneStack;
use houou_core::records::{emit_canonical, parse_canonical, Corpus, Event};
use houou_core::rules::{Action, TableView};
use houou_core::tiles::{parse_faces, Tile, TileFace, TileKind, NUM_KINDS};
use houou_play::agent::{is_isolated, Rule};
use houou_play::policies::{curves_csv, predict};
use houou_play::sim::{self, agreement_eval};
use houou_play::*;

fn tiles(s: &str) -> Vec<Tile> {
    let mut used = [0u8; NUM_KINDS];
    parse_faces(s)
        .unwrap()
        .into_iter()
        .map(|f: TileFace| {
            if f.aka {
                Tile::new(f.kind, 0)
            } else {
                let k = f.kind.index();
                let t = Tile::new(f.kind, u8::from(f.kind.is_five()) + used[k]);
                used[k] += 1;
                t
            }
        })
        .collect()
}

fn kind(s: &str) -> TileKind {
    s.parse().unwrap()
}

fn view(hand: Vec<Tile>) -> TableView {
    TableView {
        viewer: 0,
        drawn: hand.last().copied(),
        hand,
        melds: Default::default(),
        discards: Default::default(),
        riichi: [false; 4],
        dora_indicators: vec![Tile::new(TileKind::NORTH, 1)],
        round_wind: TileKind::EAST,
        own_wind: TileKind::EAST,
        kyoku: 1,
        honba: 0,
        riichi_pot: 0,
        scores: [25000; 4],
        ranks: [1, 2, 3, 4],
        live_remaining: 60,
        history: Vec::new(),
    }
}

fn discards(hand: &[Tile]) -> Vec<Action> {
    hand.iter().map(|&t| Action::Discard(t)).collect()
}

/// Force a head's output by setting the bias of its last dense layer.
fn bias(head: &mut PolicyHead, b: &[f32]) {
    let mut params = head.model.params_mut();
    let last = params.last_mut().unwrap();
    assert_eq!(last.len(), b.len());
    last.copy_from_slice(b);
}

fn one_hot_bias(classes: usize, on: usize) -> Vec<f32> {
    (0..classes).map(|i| if i == on { 40.0 } else { 0.0 }).collect()
}

fn agent(heads: PolicySet, mask: bool) -> Agent {
    Agent::new(
        Arc::new(heads),
        AgentConfig {
            mask_discards: mask,
            ..AgentConfig::default()
        },
    )
}

fn pct4(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

// Published call-decision confusion matrices (rows = truth, columns = prediction).
fn pon_matrix() -> Vec<Vec<u64>> {
    vec![vec![6923, 1576], vec![1929, 19572]]
}

fn chi_matrix() -> Vec<Vec<u64>> {
    vec![vec![33357, 817, 777, 858], vec![338, 813, 22, 9], vec![509, 18, 1289, 29], vec![335, 7, 32, 790]]
}

fn riichi_matrix() -> Vec<Vec<u64>> {
    vec![vec![3017, 1915], vec![1558, 8510]]
}

#[test]
fn pon_table_metrics() {
    let m = metrics_from_matrix(&pon_matrix(), 0).unwrap();
    assert_eq!(pct4(m.accuracy), "88.32");
    assert_eq!(pct4(m.precision.unwrap()), "78.21");
    assert_eq!(pct4(m.recall.unwrap()), "81.46");
    assert_eq!(format!("{:.3}", m.f1.unwrap()), "0.798");
    assert_eq!(pct4(m.transposed_precision.unwrap()), "81.46");
}

#[test]
fn chi_table_metrics() {
    let m = metrics_from_matrix(&chi_matrix(), 0).unwrap();
    assert_eq!(pct4(m.accuracy), "90.62");
    assert_eq!(pct4(m.call_type_accuracy.unwrap()), "96.11");
    assert!(m.precision.is_none() && m.f1.is_none());
}

#[test]
fn riichi_table_accuracy_is_76_85_not_75_85() {
    let m = metrics_from_matrix(&riichi_matrix(), 1).unwrap();
    assert_eq!(pct4(m.accuracy), "76.85");
    assert_ne!(pct4(m.accuracy), "75.85");
}

#[test]
fn undefined_ratios_are_none_and_bad_matrices_are_errors() {
    let m = metrics_from_matrix(&[vec![5, 0], vec![3, 0]], 1).unwrap();
    assert_eq!(m.precision, None);
    assert_eq!(m.recall, Some(0.0));
    assert_eq!(m.f1, None);
    assert!(matches!(metrics_from_matrix(&[], 0), Err(MetricsError::Empty)));
    assert!(matches!(metrics_from_matrix(&[vec![0, 0], vec![0, 0]], 0), Err(MetricsError::Empty)));
    assert!(matches!(metrics_from_matrix(&[vec![1, 2], vec![3]], 0), Err(MetricsError::NotSquare { row: 1, .. })));
    assert!(matches!(metrics_from_matrix(&[vec![1]], 1), Err(MetricsError::Positive { .. })));
}

#[test]
fn tsumo_is_taken_without_consulting_a_network() {
    let mut a = agent(PolicySet::untrained(Preset::Small, 1), true);
    let hand = tiles("1m 2m 3m 4m 5m 6m 7m 8m 9m 1p 1p 2p 2p 2p");
    let mut legal = discards(&hand);
    legal.push(Action::Tsumo);
    let d = a.decide_own_turn(&view(hand), &legal);
    assert_eq!(d.action, Action::Tsumo);
    assert_eq!(d.rule, Rule::Tsumo);
    assert!(d.consulted.is_empty());
}

#[test]
fn closed_kan_only_on_an_isolated_kind() {
    let mut a = agent(PolicySet::untrained(Preset::Small, 1), true);
    let hand = tiles("E E E E 1m 2m 3m 7p 8p 9p 2s 3s 6s 9s");
    let mut legal = discards(&hand);
    legal.push(Action::ClosedKan(TileKind::EAST));
    let d = a.decide_own_turn(&view(hand), &legal);
    assert_eq!(d.action, Action::ClosedKan(TileKind::EAST));
    assert_eq!(d.rule, Rule::ClosedKan);

    // 5m sits next to the 4m quad, so it is not isolated.
    let hand = tiles("4m 4m 4m 4m 5m 7p 8p 9p 2s 3s 4s S S N");
    let mut legal = discards(&hand);
    legal.push(Action::ClosedKan(kind("4m")));
    let d = a.decide_own_turn(&view(hand), &legal);
    assert!(matches!(d.action, Action::Discard(_)));
    assert!(is_isolated(kind("1m"), &tiles("4m 5s E")));
    assert!(!is_isolated(kind("1m"), &tiles("3m 5s E")));
    assert!(is_isolated(TileKind::NORTH, &tiles("N E S")));
}

#[test]
fn under_riichi_the_drawn_tile_is_discarded_and_no_head_is_consulted() {
    let mut a = agent(PolicySet::untrained(Preset::Small, 1), true);
    let hand = tiles("1m 2m 3m 4m 5m 6m 7m 8m 9m 1p 1p 2p 3p W");
    let mut v = view(hand.clone());
    v.riichi[0] = true;
    let legal = vec![Action::Discard(*hand.last().unwrap())];
    let d = a.decide_own_turn(&v, &legal);
    assert_eq!(d.action, legal[0]);
    assert_eq!(d.rule, Rule::RiichiDiscard);
    assert!(d.consulted.is_empty());
}

#[test]
fn illegal_raw_argmax_falls_back_when_masking_is_off() {
    let mut heads = PolicySet::untrained(Preset::Small, 2);
    let mut b = one_hot_bias(34, kind("Ch").index());
    b[kind("9s").index()] = 20.0;
    bias(&mut heads.discard, &b);
    let hand = tiles("1m 2m 3m 4m 5m 6m 7m 8m 9m 1p 1p 2p 3p 9s");
    let legal = discards(&hand);

    let mut raw = agent(heads.clone(), false);
    let d = raw.decide_own_turn(&view(hand.clone()), &legal);
    assert_eq!(d.action, Action::Discard(hand[13]));
    assert_eq!(d.raw_argmax, Some(kind("Ch").index()));
    assert_eq!(d.raw_in_hand, Some(false));
    assert!(d.fallback && !d.masked);
    assert_eq!(raw.telemetry.fallbacks, 1);
    assert_eq!(raw.telemetry.legality_rate(), Some(0.0));

    let mut masked = agent(heads, true);
    let d = masked.decide_own_turn(&view(hand.clone()), &legal);
    assert_eq!(d.action, Action::Discard(hand[13]));
    assert!(d.masked && !d.fallback);
    assert_eq!(masked.telemetry.fallbacks, 0);
    assert_eq!(masked.telemetry.raw_in_hand, 0);
}

#[test]
fn legal_raw_argmax_is_played_as_is() {
    let mut heads = PolicySet::untrained(Preset::Small, 2);
    bias(&mut heads.discard, &one_hot_bias(34, kind("1p").index()));
    let hand = tiles("1m 2m 3m 4m 5m 6m 7m 8m 9m 1p 1p 2p 3p 9s");
    let mut a = agent(heads, false);
    let d = a.decide_own_turn(&view(hand.clone()), &discards(&hand));
    assert_eq!(d.action.hand_tiles()[0].kind(), kind("1p"));
    assert!(!d.fallback);
    assert_eq!(a.telemetry.legality_rate(), Some(1.0));
}

#[test]
fn riichi_head_decides_and_its_discard_is_masked_to_riichi_options() {
    let mut heads = PolicySet::untrained(Preset::Small, 3);
    bias(&mut heads.riichi, &one_hot_bias(2, 1));
    // The discard head prefers 1m, which would break tenpai.
    let mut b = one_hot_bias(34, kind("1m").index());
    b[kind("W").index()] = 20.0;
    bias(&mut heads.discard, &b);
    let hand = tiles("1m 2m 3m 4m 5m 6m 7m 8m 9m 1p 1p 2p 3p W");
    let mut legal = discards(&hand);
    legal.push(Action::Riichi(hand[13]));
    let d = agent(heads.clone(), false).decide_own_turn(&view(hand.clone()), &legal);
    assert_eq!(d.action, Action::Riichi(hand[13]));
    assert_eq!(d.rule, Rule::Riichi);
    assert_eq!(d.consulted.iter().map(|c| c.0).collect::<Vec<_>>(), vec![Task::Riichi, Task::Discard]);

    bias(&mut heads.riichi, &one_hot_bias(2, 0));
    let d = agent(heads, true).decide_own_turn(&view(hand.clone()), &legal);
    assert_eq!(d.action, Action::Discard(hand[0]));
    assert_eq!(d.rule, Rule::Discard);
}

#[test]
fn pon_follows_the_threshold() {
    let hand = tiles("5p 5p 0p 1m 2m 3m 7s 8s 9s E E S W");
    let claimed = Tile::new(kind("5p"), 3);
    let legal = vec![Action::Pon([hand[2], hand[0]]), Action::Pon([hand[0], hand[1]]), Action::Pass];
    let mut heads = PolicySet::untrained(Preset::Small, 4);
    bias(&mut heads.pon, &[0.0, 0.5]);
    let p1 = predict(&heads.pon, &houou_core::features::encode(&view(hand.clone()))).unwrap().probs[1] as f64;
    assert!(p1 > 0.5);

    let mut cfg = AgentConfig::default();
    let d = Agent::new(Arc::new(heads.clone()), cfg.clone()).decide_on_claim(&view(hand.clone()), claimed, &legal);
    assert_eq!(d.rule, Rule::Pon);
    // Plain fives are kept back for a pon over the aka five.
    assert_eq!(d.action, Action::Pon([hand[0], hand[1]]));

    cfg.pon_threshold = p1 + 0.01;
    let d = Agent::new(Arc::new(heads), cfg).decide_on_claim(&view(hand), claimed, &legal);
    assert_eq!(d.action, Action::Pass);
    assert_eq!(d.consulted.len(), 1);
}

#[test]
fn ron_beats_every_call() {
    let mut a = agent(PolicySet::untrained(Preset::Small, 1), true);
    let hand = tiles("1m 2m 3m 4m 5m 6m 7m 8m 9m 1p 1p 2p 3p");
    let legal = vec![Action::Ron, Action::Chi([hand[10], hand[11]]), Action::Pass];
    let d = a.decide_on_claim(&view(hand), Tile::new(kind("4p"), 1), &legal);
    assert_eq!(d.action, Action::Ron);
    assert!(d.consulted.is_empty());
}

#[test]
fn chi_argmax_is_masked_to_legal_variants() {
    // 3p called: 1p2p (called high) and 4p5p (called low) are possible, 2p4p is not.
    let hand = tiles("1p 2p 4p 5p 1m 2m 3m 7s 8s 9s E E S");
    let called = Tile::new(kind("3p"), 1);
    let legal = vec![Action::Chi([hand[0], hand[1]]), Action::Chi([hand[2], hand[3]]), Action::Pass];
    let mut heads = PolicySet::untrained(Preset::Small, 5);
    bias(&mut heads.chi, &[0.0, 5.0, 40.0, 10.0]);
    let d = agent(heads, true).decide_on_claim(&view(hand.clone()), called, &legal);
    assert_eq!(d.action, Action::Chi([hand[0], hand[1]]));
    assert_eq!(d.rule, Rule::Chi);
    assert!(d.masked);
    assert_eq!(argmax_of(&d.consulted[0].1), 2);
}

fn argmax_of(p: &[f32]) -> usize {
    houou_play::policies::argmax(p)
}

#[test]
fn no_open_kan_is_ever_declared() {
    let hand = tiles("5p 5p 5p 1m 2m 3m 7s 8s 9s E E S W");
    let legal = vec![Action::OpenKan([hand[0], hand[1], hand[2]]), Action::Pon([hand[0], hand[1]]), Action::Pass];
    let mut heads = PolicySet::untrained(Preset::Small, 6);
    bias(&mut heads.pon, &[40.0, 0.0]);
    let d = agent(heads, true).decide_on_claim(&view(hand), Tile::new(kind("5p"), 3), &legal);
    assert_eq!(d.action, Action::Pass);
}

fn random_four(games: usize, seed: u64) -> MatchReport {
    let spec = MatchSpec::new(["r0", "r1", "r2", "r3"], games, seed);
    run_match(&spec, |_, s| Box::new(RandomLegal::new(s)))
}

#[test]
fn zero_games_give_an_empty_report() {
    let r = random_four(0, 1);
    assert!(r.games.is_empty());
    assert_eq!(r.aborted, 0);
    assert!(r.agents.iter().all(|a| a.games == 0 && a.mean_placement == 0.0));
    assert_eq!(r.metrics_lines().lines().count(), 4);
}

#[test]
fn simulated_transcripts_replay_and_round_trip() {
    let r = random_four(4, 11);
    assert_eq!(r.aborted, 0);
    let logs: Vec<_> = r.games.iter().flat_map(|g| g.logs.clone()).collect();
    assert!(logs.len() >= 16);
    for log in &logs {
        replay_check(log).unwrap();
    }
    let corpus = Corpus { provenance: None, logs };
    let bytes = emit_canonical(&corpus);
    assert_eq!(parse_canonical(&bytes).unwrap(), corpus);
    for g in &r.games {
        let mut p = g.placements.to_vec();
        p.sort();
        assert_eq!(p, vec![1, 2, 3, 4]);
        assert_eq!(g.final_scores.iter().sum::<i32>(), sim::TOTAL_POINTS);
    }
}

#[test]
fn duplicate_seating_rotates_agents_over_identical_deals() {
    let r = random_four(8, 3);
    for block in r.games.chunks(4) {
        let deal = |g: &GameRecord| match &g.logs[0].events[0] {
            Event::Deal { hands, .. } => hands.clone(),
            e => panic!("first event {e:?}"),
        };
        let first = deal(&block[0]);
        for (i, g) in block.iter().enumerate() {
            assert_eq!(g.rotation, i);
            assert_eq!(g.wall_seed, block[0].wall_seed);
            assert_eq!(deal(g), first);
            // agent k sits at seat (k + rotation) % 4
            for k in 0..4 {
                assert_eq!(g.seating[(k + i) % 4], k);
            }
        }
    }
    assert_ne!(r.games[0].wall_seed, r.games[4].wall_seed);
}

#[test]
fn identical_seeds_give_identical_matches() {
    let heads = Arc::new(PolicySet::untrained(Preset::Small, 9));
    let run = || {
        let spec = MatchSpec::new(["net", "r1", "r2", "r3"], 2, 21);
        let r = run_match(&spec, |k, s| {
            if k == 0 {
                Box::new(Agent::new(heads.clone(), AgentConfig { seed: s, ..AgentConfig::default() }))
            } else {
                Box::new(RandomLegal::new(s))
            }
        });
        r.games.iter().flat_map(|g| g.logs.clone()).collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(!a.is_empty());
}

struct Panicky;

impl Player for Panicky {
    fn name(&self) -> String {
        "panicky".into()
    }

    fn decide(&mut self, _: &DecisionPoint<'_>) -> Action {
        panic!("boom")
    }
}

struct Cheat;

impl Player for Cheat {
    fn name(&self) -> String {
        "cheat".into()
    }

    fn decide(&mut self, dp: &DecisionPoint<'_>) -> Action {
        if dp.is_claim() {
            Action::Pass
        } else {
            let absent = TileKind::all().find(|k| dp.view.hand.iter().all(|t| t.kind() != *k)).unwrap();
            Action::Discard(Tile::new(absent, 1))
        }
    }
}

#[test]
fn failing_agents_abort_their_game_and_the_match_continues() {
    let spec = MatchSpec::new(["bad", "r1", "r2", "r3"], 2, 5);
    let r = run_match(&spec, |k, s| if k == 0 { Box::new(Panicky) } else { Box::new(RandomLegal::new(s)) });
    assert_eq!(r.aborted, 2);
    assert!(r.games.iter().all(|g| g.error.as_deref().unwrap().contains("boom")));

    let spec = MatchSpec::new(["cheat", "r1", "r2", "r3"], 1, 5);
    let r = run_match(&spec, |k, s| if k == 0 { Box::new(Cheat) } else { Box::new(RandomLegal::new(s)) });
    assert!(r.games[0].error.as_deref().unwrap().contains("illegal action"));
    assert!(!r.games[0].logs.is_empty());
}

#[test]
fn corrupt_log_fails_replay_at_the_fifth_copy() {
    let r = random_four(1, 2);
    let mut log = r.games[0].logs[0].clone();
    let draw_at = log.events.iter().position(|e| matches!(e, Event::Draw { .. })).unwrap();
    let Event::Deal { hands, dora } = &mut log.events[0] else { panic!() };
    let k = hands[1][0].kind;
    let mut count = hands.iter().flatten().filter(|f| f.kind == k).count() + (dora.kind == k) as usize;
    for seat in [2usize, 3] {
        for f in hands[seat].iter_mut() {
            if count < 4 && f.kind != k {
                *f = TileFace::plain(k);
                count += 1;
            }
        }
    }
    assert_eq!(count, 4);
    if let Event::Draw { tile, .. } = &mut log.events[draw_at] {
        *tile = TileFace::plain(k);
    }
    let err = replay_check(&log).unwrap_err();
    assert_eq!(err.event, draw_at);
    assert!(replay_check(&r.games[0].logs[0]).is_ok());
}

fn greedy_samples(task: Task, games: usize, seed: u64) -> Vec<Sample> {
    let spec = MatchSpec::new(["g0", "g1", "g2", "g3"], games, seed);
    let r = run_match(&spec, |_, s| Box::new(GreedyShanten::with_calls(s, 0.3)));
    let corpus = Corpus {
        provenance: None,
        logs: r.games.iter().flat_map(|g| g.logs.clone()).collect(),
    };
    extract_corpus(&corpus, task, &ExtractOptions::default()).unwrap()
}

#[test]
fn training_is_deterministic_and_recorded() {
    let samples: Vec<Sample> = greedy_samples(Task::Discard, 1, 8).into_iter().take(96).collect();
    let cfg = TrainConfig {
        preset: Preset::Small,
        epochs: 2,
        batch_size: 32,
        seed: 5,
        ..TrainConfig::default()
    };
    let (a, ca) = train_head(Task::Discard, &samples[..64], &samples[64..], &cfg).unwrap();
    let (b, cb) = train_head(Task::Discard, &samples[..64], &samples[64..], &cfg).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ca, cb);
    assert_eq!(ca.len(), 2);
    assert!(ca.iter().all(|e| e.val_agreement.is_some()));
    let rec = a.record.as_ref().unwrap();
    assert_eq!((rec.train_samples, rec.val_samples, rec.epochs_run), (64, 32, 2));
    assert_eq!(curves_csv(&ca).lines().count(), 3);

    let back = PolicyHead::from_bytes(&a.to_bytes()).unwrap();
    assert_eq!(back.to_bytes(), a.to_bytes());
    assert_eq!(back.record, a.record);
}

#[test]
fn heads_check_task_and_width() {
    let pon = PolicyHead::untrained(Task::Pon, Preset::Small, 1);
    let samples: Vec<Sample> = greedy_samples(Task::Discard, 1, 8).into_iter().take(4).collect();
    assert!(matches!(evaluate(&pon, &samples), Err(PolicyError::Task { .. })));
    let dir = tempfile::tempdir().unwrap();
    let paths = HeadPaths::in_dir(dir.path());
    let set = PolicySet::untrained(Preset::Small, 1);
    set.discard.save(&paths.discard).unwrap();
    set.pon.save(&paths.pon).unwrap();
    set.chi.save(&paths.chi).unwrap();
    // Riichi file holds the pon head: rejected by task.
    set.pon.save(&paths.riichi).unwrap();
    assert!(PolicySet::load(&paths).is_err());
    set.riichi.save(&paths.riichi).unwrap();
    let loaded = PolicySet::load(&paths).unwrap();
    assert_eq!(loaded.chi.to_bytes(), set.chi.to_bytes());
}

fn synthetic(n: usize, seed: u64) -> Vec<Sample> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut input = PlaneStack::zeros();
            for _ in 0..20 {
                input.set(rng.gen_range(0..86), rng.gen_range(0..34), rng.gen_range(0..4), true);
            }
            Sample {
                input,
                label: (i % 34) as u8,
                task: Task::Discard,
                key: SampleKey {
                    game: format!("s{i}"),
                    subgame: 0,
                    seat: 0,
                    turn: 0,
                },
            }
        })
        .collect()
}

#[test]
fn untrained_head_agrees_at_chance_level() {
    let head = PolicyHead::untrained(Task::Discard, Preset::Small, 3);
    let (agreement, report) = agreement_eval(&head, synthetic(3400, 1), 1).unwrap();
    assert_eq!(report.count, 3400);
    // Balanced labels: whatever the head predicts, it hits 1/34 of each row
    // on average.
    assert!((agreement - 1.0 / 34.0).abs() < 0.015, "{agreement}");
    assert_eq!(report.metrics_lines().lines().count(), 35);
    assert!(report.legality_rate.is_some());
}

#[test]
fn leaked_evaluation_of_a_memorised_set_agrees() {
    let samples: Vec<Sample> = greedy_samples(Task::Discard, 1, 4).into_iter().take(128).collect();
    let cfg = TrainConfig {
        preset: Preset::Small,
        epochs: 60,
        batch_size: 32,
        seed: 1,
        stop_at_train_agreement: Some(1.0),
        ..TrainConfig::default()
    };
    let (head, curves) = train_head(Task::Discard, &samples, &[], &cfg).unwrap();
    assert_eq!(curves.last().unwrap().train_agreement, 1.0);
    let report = evaluate(&head, &samples).unwrap();
    assert!(report.agreement() >= 0.99);
    assert_eq!(report.legality_rate, Some(1.0));
    assert!(report.table().contains("legality rate 100.00%"));
}
