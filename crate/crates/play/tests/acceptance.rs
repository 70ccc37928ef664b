//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release -p houou-play --test acceptance -- --nocapture`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use houou_core::dataset::{extract_corpus, ExtractOptions, Sample, Task};
use houou_core::features::{encode, validate, visible_count, GROUPS, NUM_PLANES};
use houou_core::records::tenhou::ingest_tenhou;
use houou_core::records::{emit_canonical, parse_canonical, Corpus, EventLog};
use houou_core::rules::hand::{is_winning_hand, shanten};
use houou_core::rules::Action;
use houou_core::tiles::{dora_from_indicator, kind_counts, Tile, TileKind, NUM_KINDS};
use houou_nn::{gradcheck, Model, ModelSpec, Tensor};
use houou_play::policies::INPUT;
use houou_play::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria known not to be met at desk scale; see the README.
const KNOWN_SHORTFALLS: &[&str] = &["legality-telemetry"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------- brute-force oracles ----------

/// Complete as `sets` groups plus nothing (pair already removed)?
fn sets_only(c: &mut [u8; NUM_KINDS], sets: usize) -> bool {
    let Some(i) = c.iter().position(|&n| n > 0) else {
        return sets == 0;
    };
    if sets == 0 {
        return false;
    }
    if c[i] >= 3 {
        c[i] -= 3;
        let ok = sets_only(c, sets - 1);
        c[i] += 3;
        if ok {
            return true;
        }
    }
    if i < 27 && i % 9 <= 6 && c[i + 1] > 0 && c[i + 2] > 0 {
        c[i] -= 1;
        c[i + 1] -= 1;
        c[i + 2] -= 1;
        let ok = sets_only(c, sets - 1);
        c[i] += 1;
        c[i + 1] += 1;
        c[i + 2] += 1;
        if ok {
            return true;
        }
    }
    false
}

const ORPHANS: [usize; 13] = [0, 8, 9, 17, 18, 26, 27, 28, 29, 30, 31, 32, 33];

fn brute_force_winning(c: &[u8; NUM_KINDS]) -> bool {
    let mut c = *c;
    for p in 0..NUM_KINDS {
        if c[p] >= 2 {
            c[p] -= 2;
            let ok = sets_only(&mut c, 4);
            c[p] += 2;
            if ok {
                return true;
            }
        }
    }
    let pairs = c.iter().filter(|&&n| n == 2).count();
    if pairs == 7 {
        return true;
    }
    let orphans_only = c.iter().enumerate().all(|(k, &n)| n == 0 || ORPHANS.contains(&k));
    orphans_only && ORPHANS.iter().all(|&k| c[k] >= 1)
}

/// Groups as kind lists: 34 triplets then 21 runs.
fn all_groups() -> Vec<[usize; 3]> {
    let mut g: Vec<[usize; 3]> = (0..NUM_KINDS).map(|k| [k; 3]).collect();
    for s in 0..3 {
        for n in 0..7 {
            let k = s * 9 + n;
            g.push([k, k + 1, k + 2]);
        }
    }
    g
}

/// Largest overlap of `rem` with `left` more groups drawn from `groups[from..]`.
fn best_groups(groups: &[[usize; 3]], from: usize, left: usize, rem: &mut [u8; NUM_KINDS], target: &mut [u8; NUM_KINDS], cur: u32, best: &mut u32) {
    // Unused groups can always be filled with tiles the hand lacks.
    *best = (*best).max(cur);
    if left == 0 || cur + 3 * left as u32 <= *best {
        return;
    }
    for gi in from..groups.len() {
        let g = groups[gi];
        if g.iter().all(|&k| rem[k] == 0) {
            continue;
        }
        let mut tc = *target;
        if g.iter().any(|&k| {
            tc[k] += 1;
            tc[k] > 4
        }) {
            continue;
        }
        let mut r = *rem;
        let mut gain = 0;
        for &k in &g {
            if r[k] > 0 {
                r[k] -= 1;
                gain += 1;
            }
        }
        best_groups(groups, gi, left - 1, &mut r, &mut tc, cur + gain, best);
    }
}

/// Exhaustive target-hand search: shanten = 13 − (largest overlap of the
/// 13-tile hand with any complete 14-tile hand that respects four copies).
fn oracle_shanten(h: &[u8; NUM_KINDS], groups: &[[usize; 3]]) -> i32 {
    let mut best = 0u32;
    for p in 0..NUM_KINDS {
        let mut rem = *h;
        let gain = rem[p].min(2) as u32;
        rem[p] -= gain as u8;
        let mut target = [0u8; NUM_KINDS];
        target[p] = 2;
        let mut b = 0;
        best_groups(groups, 0, 4, &mut rem, &mut target, 0, &mut b);
        best = best.max(gain + b);
    }
    let mut pairs: Vec<u32> = h.iter().map(|&n| n.min(2) as u32).collect();
    pairs.sort_unstable_by(|a, b| b.cmp(a));
    best = best.max(pairs[..7].iter().sum());
    let distinct = ORPHANS.iter().filter(|&&k| h[k] > 0).count() as u32;
    let pair = ORPHANS.iter().any(|&k| h[k] >= 2) as u32;
    best = best.max(distinct + pair);
    13 - best as i32
}

fn random_hand(rng: &mut ChaCha8Rng, n: usize) -> Vec<Tile> {
    let mut all: Vec<Tile> = Tile::full_set().collect();
    all.shuffle(rng);
    all.truncate(n);
    all
}

/// A complete hand (regular, seven pairs or thirteen orphans), sometimes
/// with one tile swapped out.
fn near_winning_hand(rng: &mut ChaCha8Rng, groups: &[[usize; 3]]) -> Vec<Tile> {
    let mut kinds: Vec<usize> = Vec::new();
    let mut counts = [0u8; NUM_KINDS];
    let push = |k: usize, kinds: &mut Vec<usize>, counts: &mut [u8; NUM_KINDS]| {
        counts[k] += 1;
        kinds.push(k);
    };
    match rng.gen_range(0..10) {
        0 => {
            let mut ks: Vec<usize> = (0..NUM_KINDS).collect();
            ks.shuffle(rng);
            for &k in &ks[..7] {
                push(k, &mut kinds, &mut counts);
                push(k, &mut kinds, &mut counts);
            }
        }
        1 => {
            for k in ORPHANS {
                push(k, &mut kinds, &mut counts);
            }
            push(*ORPHANS.choose(rng).unwrap(), &mut kinds, &mut counts);
        }
        _ => loop {
            kinds.clear();
            counts = [0; NUM_KINDS];
            let p = rng.gen_range(0..NUM_KINDS);
            push(p, &mut kinds, &mut counts);
            push(p, &mut kinds, &mut counts);
            for _ in 0..4 {
                for k in *groups.choose(rng).unwrap() {
                    push(k, &mut kinds, &mut counts);
                }
            }
            if counts.iter().all(|&n| n <= 4) {
                break;
            }
        },
    }
    if rng.gen_bool(0.3) {
        let i = rng.gen_range(0..kinds.len());
        let k = rng.gen_range(0..NUM_KINDS);
        if counts[k] < 4 {
            kinds[i] = k;
        }
    }
    let mut used = [0u8; NUM_KINDS];
    kinds
        .into_iter()
        .map(|k| {
            used[k] += 1;
            Tile::new(TileKind::from_index(k), used[k] - 1)
        })
        .collect()
}

fn rules_oracles() -> Outcome {
    let groups = all_groups();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let t = Instant::now();
    let (mut mismatches, mut winners) = (0, 0);
    for i in 0..10_000 {
        let mut hand = if i % 2 == 0 { random_hand(&mut rng, 14) } else { near_winning_hand(&mut rng, &groups) };
        hand.shuffle(&mut rng);
        let win = hand.pop().unwrap();
        let ours = is_winning_hand(&hand, &[], win).unwrap();
        hand.push(win);
        let oracle = brute_force_winning(&kind_counts(&hand));
        winners += oracle as u32;
        mismatches += (ours != oracle) as u32;
    }
    let win_time = t.elapsed();
    let t = Instant::now();
    let mut shanten_mismatches = 0;
    let mut hist = [0u32; 9];
    for i in 0..1_000 {
        let mut hand = if i % 2 == 0 { random_hand(&mut rng, 13) } else { near_winning_hand(&mut rng, &groups) };
        hand.truncate(13);
        let ours = shanten(&hand, &[]).unwrap();
        let oracle = oracle_shanten(&kind_counts(&hand), &groups);
        hist[oracle.clamp(0, 8) as usize] += 1;
        shanten_mismatches += (ours != oracle) as u32;
    }
    let sh_time = t.elapsed();
    outcome(
        mismatches == 0 && shanten_mismatches == 0 && win_time < Duration::from_secs(300) && sh_time < Duration::from_secs(600),
        format!(
            "winning: 10000 hands ({winners} complete), {mismatches} mismatches, {win_time:.1?}; shanten: 1000 hands (by value {hist:?}), {shanten_mismatches} mismatches, {sh_time:.1?}"
        ),
    )
}

// ---------- engine, encoder, records ----------

fn random_match(games: usize, seed: u64, check_invariants: bool) -> MatchReport {
    let mut spec = MatchSpec::new(["r0", "r1", "r2", "r3"], games, seed);
    spec.check_invariants = check_invariants;
    run_match(&spec, |_, s| Box::new(RandomLegal::new(s)))
}

fn engine_fuzz(report: &MatchReport) -> Outcome {
    let errors: Vec<&str> = report.games.iter().filter_map(|g| g.error.as_deref()).collect();
    let steps: u64 = report.games.iter().map(|g| g.steps).sum();
    let conserved = report.games.iter().all(|g| g.final_scores.iter().sum::<i32>() == sim::TOTAL_POINTS);
    outcome(
        errors.is_empty() && conserved && report.games.len() == 1000,
        format!(
            "{} hanchan, {steps} steps with tile and score conservation checked at each, {} aborted{}",
            report.games.len(),
            errors.len(),
            errors.first().map(|e| format!(" (first: {e})")).unwrap_or_default()
        ),
    )
}

/// Random-legal player that encodes and validates every view it is shown.
struct Encoding {
    inner: RandomLegal,
    stats: Arc<Mutex<[u64; 3]>>,
}

impl Player for Encoding {
    fn name(&self) -> String {
        "encoding".into()
    }

    fn decide(&mut self, dp: &DecisionPoint<'_>) -> Action {
        let s = encode(dp.view);
        let bad = !validate(&s).is_empty();
        let over = (0..NUM_KINDS).any(|k| visible_count(&s, k) > 4);
        let mut st = self.stats.lock().unwrap();
        st[0] += 1;
        st[1] += bad as u64;
        st[2] += over as u64;
        drop(st);
        self.inner.decide(dp)
    }
}

fn encoder() -> Outcome {
    let stats = Arc::new(Mutex::new([0u64; 3]));
    let spec = MatchSpec::new(["e0", "e1", "e2", "e3"], 1000, 77);
    let r = run_match(&spec, |_, s| {
        Box::new(Encoding {
            inner: RandomLegal::new(s),
            stats: stats.clone(),
        })
    });
    let [views, invalid, over] = *stats.lock().unwrap();
    let sizes: Vec<usize> = GROUPS.iter().map(|g| g.1).collect();
    let groups_ok = sizes == [1, 1, 4, 4, 1, 3, 4, 8, 1, 1, 13, 45] && sizes.iter().sum::<usize>() == NUM_PLANES && NUM_PLANES == 86;
    outcome(
        invalid == 0 && over == 0 && groups_ok && r.aborted == 0,
        format!("{} games, {views} decision points: {invalid} invalid encodings, {over} views over four per kind; groups {sizes:?} = {NUM_PLANES}", r.games.len()),
    )
}

fn records(fuzz: &MatchReport) -> Outcome {
    let logs: Vec<EventLog> = fuzz.games.iter().flat_map(|g| g.logs.clone()).take(1000).collect();
    let corpus = Corpus { provenance: None, logs };
    let bytes = emit_canonical(&corpus);
    let back = parse_canonical(&bytes);
    let round_trip = back.as_ref().is_ok_and(|c| *c == corpus && emit_canonical(c) == bytes);
    let replayed = corpus.logs.iter().filter(|l| replay_check(l).is_ok()).count();

    let (mut subgames, mut admitted, mut quarantined, mut reasons_ok, mut replay_ok) = (0, 0, 0, true, 0);
    for seed in 0..40u64 {
        let game = common::play_random_game(1000 + seed);
        subgames += game.logs.len();
        let r = ingest_tenhou(game.xml.as_bytes(), &format!("t{seed}"));
        admitted += r.corpus.logs.len();
        quarantined += r.quarantined.len();
        reasons_ok &= r.quarantined.iter().all(|q| !q.reason.is_empty());
        replay_ok += r.corpus.logs.iter().filter(|l| replay_check(l).is_ok()).count();
    }
    outcome(
        corpus.logs.len() == 1000 && round_trip && replayed == 1000 && admitted + quarantined == subgames && replay_ok == admitted && reasons_ok,
        format!(
            "{} logs round-trip: {round_trip}, replay {replayed}/1000; Tenhou ingest of {subgames} subgames: {admitted} admitted ({replay_ok} replay), {quarantined} quarantined with reasons",
            corpus.logs.len()
        ),
    )
}

// ---------- network ----------

fn network_shape() -> Outcome {
    let m = Model::<f32>::new(ModelSpec::paper(INPUT, 34), 1).unwrap();
    let shapes = m.layer_shapes(1);
    let conv: Vec<Vec<usize>> = m
        .spec()
        .layers
        .iter()
        .zip(&shapes)
        .filter(|(l, _)| l.kind() == "conv2d")
        .map(|(_, s)| s.clone())
        .collect();
    let flat = m.spec().layers.iter().zip(&shapes).find(|(l, _)| l.kind() == "flatten").map(|(_, s)| s.clone());
    let x = Tensor::<f32>::zeros(vec![2, 86, 34, 4]);
    let out = m.forward(&x, houou_nn::Mode::Infer).map(|t| t.shape().to_vec());
    let want = vec![vec![1, 100, 30, 3], vec![1, 100, 26, 2], vec![1, 100, 22, 1]];
    outcome(
        conv == want && flat == Some(vec![1, 2200]) && out.as_deref() == Ok(&[2, 34][..]),
        format!("conv outputs {conv:?}, flatten {flat:?}, logits {out:?}, {} parameters", m.num_params()),
    )
}

fn gradient_check() -> Outcome {
    let t = Instant::now();
    let m = Model::<f64>::new(ModelSpec::paper(INPUT, 34), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let n = 2;
    let x = Tensor::new(vec![n, 86, 34, 4], (0..n * 86 * 34 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let r = gradcheck::check(&m, &x, &[3, 10], 11, 20, 1e-5).unwrap();
    let el = t.elapsed();
    let kinds: Vec<&str> = m.spec().layers.iter().map(|l| l.kind()).collect();
    outcome(
        r.max_rel_err < 1e-4 && el < Duration::from_secs(120),
        format!("paper preset ({}), {} entries, max relative error {:.2e} at {}, {el:.1?}", kinds.join(","), r.checked, r.max_rel_err, r.worst),
    )
}

fn greedy_corpus(games: usize, seed: u64) -> Corpus {
    let spec = MatchSpec::new(["g0", "g1", "g2", "g3"], games, seed);
    let r = run_match(&spec, |_, s| Box::new(GreedyShanten::with_calls(s, 0.3)));
    Corpus {
        provenance: None,
        logs: r.games.iter().flat_map(|g| g.logs.clone()).collect(),
    }
}

fn overfit() -> Outcome {
    let t = Instant::now();
    let samples: Vec<Sample> = extract_corpus(&greedy_corpus(4, 31), Task::Discard, &ExtractOptions::default()).unwrap().into_iter().take(512).collect();
    let cfg = TrainConfig {
        preset: Preset::Paper,
        epochs: 200,
        batch_size: 256,
        seed: 1,
        stop_at_train_agreement: Some(0.99),
        ..TrainConfig::default()
    };
    let (_, curves) = train_head(Task::Discard, &samples, &[], &cfg).unwrap();
    let last = curves.last().unwrap();
    let el = t.elapsed();
    outcome(
        samples.len() == 512 && last.train_agreement >= 0.99 && el < Duration::from_secs(900),
        format!("{} samples, batch 256, paper preset: {:.2}% training agreement at epoch {}, {el:.0?}", samples.len(), 100.0 * last.train_agreement, last.epoch),
    )
}

fn metric_fixtures() -> Outcome {
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    let pon = metrics_from_matrix(&[vec![6923, 1576], vec![1929, 19572]], 0).unwrap();
    let chi = metrics_from_matrix(&[vec![33357, 817, 777, 858], vec![338, 813, 22, 9], vec![509, 18, 1289, 29], vec![335, 7, 32, 790]], 0).unwrap();
    let riichi = metrics_from_matrix(&[vec![3017, 1915], vec![1558, 8510]], 1).unwrap();
    let got = [
        pct(pon.accuracy),
        format!("{:.3}", pon.f1.unwrap()),
        pct(chi.accuracy),
        pct(chi.call_type_accuracy.unwrap()),
        pct(riichi.accuracy),
    ];
    outcome(
        got == ["88.32", "0.798", "90.62", "96.11", "76.85"],
        format!(
            "pon accuracy {}% f1 {}; chi accuracy {}% call-type {}%; riichi accuracy {}% (published figure 75.85% does not follow from its matrix)",
            got[0], got[1], got[2], got[3], got[4]
        ),
    )
}

fn dora_mapping() -> Outcome {
    let k = |s: &str| s.parse::<TileKind>().unwrap();
    let exceptions = dora_from_indicator(k("9m")) == k("1m") && dora_from_indicator(k("N")) == k("E");
    let cyclic = TileKind::all().all(|t| {
        let n = t.dora_loop_len();
        let mut x = t;
        for i in 1..=n {
            x = dora_from_indicator(x);
            if (x == t) != (i == n) {
                return false;
            }
        }
        true
    });
    outcome(exceptions && cyclic, format!("9m→1m and N→E: {exceptions}; loops of 9/4/3 close exactly for all 34 kinds: {cyclic}"))
}

// ---------- toy agent ----------

fn train_toy_agent() -> (PolicySet, String) {
    let t = Instant::now();
    let corpus = greedy_corpus(40, 5);
    let mut heads = PolicySet::untrained(Preset::Small, 1);
    for task in Task::ALL {
        let mut samples = extract_corpus(&corpus, task, &ExtractOptions::default()).unwrap();
        samples.truncate(24_000);
        let cfg = TrainConfig {
            preset: Preset::Small,
            epochs: 4,
            seed: 1,
            train_eval_limit: Some(500),
            ..TrainConfig::default()
        };
        let (h, _) = train_head(task, &samples, &[], &cfg).unwrap();
        match task {
            Task::Discard => heads.discard = h,
            Task::Pon => heads.pon = h,
            Task::Chi => heads.chi = h,
            Task::Riichi => heads.riichi = h,
        }
    }
    let note = format!("small preset, 4 epochs on up to 24000 samples per task from 40 greedy games, {:.0?}", t.elapsed());
    (heads, note)
}

/// Agent that folds its telemetry into a shared total when dropped.
struct Telemetered(Agent, Arc<Mutex<Telemetry>>);

impl Player for Telemetered {
    fn name(&self) -> String {
        self.0.name()
    }

    fn decide(&mut self, dp: &DecisionPoint<'_>) -> Action {
        self.0.decide(dp)
    }
}

impl Drop for Telemetered {
    fn drop(&mut self) {
        self.1.lock().unwrap().merge(&self.0.telemetry);
    }
}

fn legality(heads: &Arc<PolicySet>, note: &str) -> Outcome {
    let total = Arc::new(Mutex::new(Telemetry::default()));
    let spec = MatchSpec::new(["net0", "net1", "net2", "net3"], 40, 9);
    let r = run_match(&spec, |_, s| {
        Box::new(Telemetered(
            Agent::new(
                heads.clone(),
                AgentConfig {
                    mask_discards: false,
                    seed: s,
                    ..AgentConfig::default()
                },
            ),
            total.clone(),
        ))
    });
    let t = *total.lock().unwrap();
    let rate = t.legality_rate().unwrap_or(0.0);
    outcome(
        rate >= 0.99 && r.aborted == 0,
        format!(
            "masking off, {} self-play games ({note}): {}/{} raw argmax discards in hand = {:.2}%, {} fallbacks, {} aborted",
            r.games.len(),
            t.raw_in_hand,
            t.discard_decisions,
            100.0 * rate,
            t.fallbacks,
            r.aborted
        ),
    )
}

fn self_play(heads: &Arc<PolicySet>) -> Outcome {
    let spec = MatchSpec::new(["network", "random1", "random2", "random3"], 100, 13);
    let vs = run_match(&spec, |k, s| {
        if k == 0 {
            Box::new(Agent::new(heads.clone(), AgentConfig { seed: s, ..AgentConfig::default() }))
        } else {
            Box::new(RandomLegal::new(s))
        }
    });
    let net = vs.agents[0].mean_placement;
    let same = random_match(400, 17, false);
    let means: Vec<f64> = same.agents.iter().map(|a| a.mean_placement).collect();
    let balanced = means.iter().all(|m| (m - 2.5).abs() <= 0.1);
    outcome(
        net < 2.5 && vs.aborted == 0 && vs.agents[0].games == 100 && balanced && same.aborted == 0,
        format!(
            "network vs 3 random over 100 duplicate games: mean placement {net:.3}; 4 identical random-legal over 400: {}",
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

#[test]
fn primary_criteria() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!("{} {name}: {} [{:.1?}]", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed());
        results.push((name, o));
    };
    run("rules-oracles", &mut rules_oracles);
    let fuzz = random_match(1000, 2025, true);
    run("engine-fuzz", &mut || engine_fuzz(&fuzz));
    run("encoder", &mut encoder);
    run("network-shape", &mut network_shape);
    run("gradient-check", &mut gradient_check);
    run("overfit-gate", &mut overfit);
    run("metric-fixtures", &mut metric_fixtures);
    let (heads, note) = train_toy_agent();
    let heads = Arc::new(heads);
    run("legality-telemetry", &mut || legality(&heads, &note));
    run("dora-mapping", &mut dora_mapping);
    run("records", &mut || records(&fuzz));
    run("self-play", &mut || self_play(&heads));

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("{}/{} criteria pass", results.len() - failed.len(), results.len());
    let unexpected: Vec<&&str> = failed.iter().filter(|n| !KNOWN_SHORTFALLS.contains(n)).collect();
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:?}");
}
