//! Shared test driver: greedy games recorded both as canonical logs and
//! as Tenhou-style XML written straight from physical tile ids.
#![allow(dead_code)]

use houou_core::records::{EventLog, Recorder, RULESET_DEFAULT};
use houou_core::rules::hand::shanten;
use houou_core::rules::{Action, GameState, Phase, SubgameOutcome};
use houou_core::tiles::{shuffle_and_build_walls, Meld, MeldType, Tile};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct PlayedGame {
    pub logs: Vec<EventLog>,
    pub xml: String,
    pub final_state: GameState,
}

fn ids(tiles: &[Tile]) -> String {
    tiles.iter().map(|t| t.id().to_string()).collect::<Vec<_>>().join(",")
}

/// Tenhou meld code for a meld owned by `who`.
pub fn encode_meld(m: &Meld) -> u32 {
    let from = m.called_from.unwrap_or(0) as u32;
    let called = m.called_tile;
    match m.meld_type {
        MeldType::Chi => {
            let mut t = m.tiles.clone();
            t.sort();
            let k = t[0].kind().index() as u32;
            let base_t = k / 9 * 7 + k % 9;
            let r = t.iter().position(|x| Some(*x) == called).unwrap() as u32;
            ((base_t * 3 + r) << 10) | (t[0].copy() as u32) << 3 | (t[1].copy() as u32) << 5 | (t[2].copy() as u32) << 7 | 0x4 | from
        }
        MeldType::Pon | MeldType::AddedKan => {
            let kind = m.tiles[0].kind().index() as u32;
            let (pon_tiles, unused) = if m.meld_type == MeldType::Pon {
                let unused = (0..4u8).find(|c| !m.tiles.iter().any(|t| t.copy() == *c)).unwrap();
                (m.tiles.clone(), unused)
            } else {
                // The added tile is the one that is neither called nor among the original pon;
                // callers pass the pon tiles in `m.tiles[..3]` order plus the added tile last.
                (m.tiles[..3].to_vec(), m.tiles[3].copy())
            };
            let mut pt = pon_tiles.clone();
            pt.sort();
            let r = pt.iter().position(|x| Some(*x) == called).unwrap() as u32;
            let flag = if m.meld_type == MeldType::Pon { 0x8 } else { 0x10 };
            ((kind * 3 + r) << 9) | (unused as u32) << 5 | flag | from
        }
        MeldType::OpenKan => ((called.unwrap().id() as u32) << 8) | from,
        MeldType::ClosedKan => (m.tiles[0].id() as u32) << 8,
    }
}

/// Greedy player: wins when it can, declares riichi when it can, otherwise
/// discards to minimise shanten and takes a call now and then.
fn pick(state: &GameState, seat: u8, legal: &[Action], rng: &mut ChaCha8Rng) -> Action {
    for want in [Action::Tsumo, Action::Ron] {
        if legal.contains(&want) {
            return want;
        }
    }
    if let Some(r) = legal.iter().find(|a| matches!(a, Action::Riichi(_))) {
        return r.clone();
    }
    let calls: Vec<&Action> = legal
        .iter()
        .filter(|a| matches!(a, Action::Pon(_) | Action::Chi(_) | Action::OpenKan(_) | Action::ClosedKan(_) | Action::AddedKan(_)))
        .collect();
    if !calls.is_empty() && rng.gen_bool(0.15) {
        return (*calls.choose(rng).unwrap()).clone();
    }
    let discards: Vec<(i32, &Action)> = legal
        .iter()
        .filter_map(|a| match a {
            Action::Discard(t) => {
                let mut h = state.hand(seat).to_vec();
                let i = h.iter().position(|x| x == t).unwrap();
                h.remove(i);
                Some((shanten(&h, state.melds(seat)).unwrap(), a))
            }
            _ => None,
        })
        .collect();
    if let Some(best) = discards.iter().map(|d| d.0).min() {
        let top: Vec<&Action> = discards.iter().filter(|d| d.0 == best).map(|d| d.1).collect();
        return (*top.choose(rng).unwrap()).clone();
    }
    if legal.contains(&Action::Pass) {
        return Action::Pass;
    }
    legal.choose(rng).unwrap().clone()
}

/// Play one full game with random legal actions.
pub fn play_random_game(seed: u64) -> PlayedGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = GameState::new_game(shuffle_and_build_walls(seed));
    let players = ["r0", "r1", "r2", "r3"].map(String::from);
    let game = format!("g{seed}");
    let mut logs = Vec::new();
    let mut subgame = 0u32;
    let mut rec = Recorder::start(&game, subgame, RULESET_DEFAULT, players.clone(), Some(seed), &state);
    let mut xml = String::from("<mjloggm ver=\"2.3\"><SHUFFLE seed=\"x\" ref=\"\"/><GO type=\"169\" lobby=\"0\"/>");
    xml.push_str("<UN n0=\"r0\" n1=\"r1\" n2=\"r2\" n3=\"%72%33\" dan=\"16,16,16,16\" rate=\"2100.50,2000.00,1999.25,1800.00\" sx=\"M,M,M,M\"/><TAIKYOKU oya=\"0\"/>");
    let init = |st: &GameState, xml: &mut String| {
        let s = st.setup();
        xml.push_str(&format!(
            "<INIT seed=\"{},{},{},0,0,{}\" ten=\"{},{},{},{}\" oya=\"{}\" hai0=\"{}\" hai1=\"{}\" hai2=\"{}\" hai3=\"{}\"/>",
            s.kyoku - 1,
            s.honba,
            s.pot,
            st.wall().indicators()[0].id(),
            s.scores[0] / 100,
            s.scores[1] / 100,
            s.scores[2] / 100,
            s.scores[3] / 100,
            s.dealer,
            ids(st.hand(0)),
            ids(st.hand(1)),
            ids(st.hand(2)),
            ids(st.hand(3)),
        ));
    };
    init(&state, &mut xml);
    // Kan dora still to be written, Tenhou style, after the next discard.
    let mut delayed_dora: Vec<u8> = Vec::new();
    let mut pending_reach: Option<u8> = None;
    let mut steps = 0u32;
    loop {
        match state.phase() {
            Phase::GameOver => break,
            Phase::SubgameOver => {
                logs.push(rec.log().clone());
                state = state.next_subgame(shuffle_and_build_walls(rng.gen()));
                if state.phase() == Phase::GameOver {
                    break;
                }
                subgame += 1;
                rec = Recorder::start(&game, subgame, RULESET_DEFAULT, players.clone(), Some(seed), &state);
                init(&state, &mut xml);
                delayed_dora.clear();
                pending_reach = None;
                continue;
            }
            _ => {}
        }
        let seat = state.awaiting()[0];
        let legal = state.legal_actions(seat);
        let action = pick(&state, seat, &legal, &mut rng);
        let before = state.clone();
        state.apply_mut(seat, &action).expect("legal action applies");
        steps += 1;
        assert!(steps < 200_000);
        rec.step(&before, seat, &action, &state);

        // Tenhou-style XML for the same step.
        let letter = |base: u8| (base + seat) as char;
        match &action {
            Action::Draw => xml.push_str(&format!("<{}{}/>", letter(b'T'), state.drawn().unwrap().id())),
            Action::Discard(t) | Action::Riichi(t) => {
                if matches!(action, Action::Riichi(_)) {
                    xml.push_str(&format!("<REACH who=\"{seat}\" step=\"1\"/>"));
                    pending_reach = Some(seat);
                }
                xml.push_str(&format!("<{}{}/>", letter(b'D'), t.id()));
                for id in delayed_dora.drain(..) {
                    xml.push_str(&format!("<DORA hai=\"{id}\"/>"));
                }
            }
            _ => {}
        }
        if let Some(r) = pending_reach {
            // The deposit is confirmed once the call window closes without a ron.
            if state.phase() != Phase::AwaitingCalls {
                let ronned = matches!(state.outcome(), Some(SubgameOutcome::Win(w)) if w.from == Some(r));
                if !ronned {
                    let s = state.scores();
                    xml.push_str(&format!("<REACH who=\"{r}\" ten=\"{},{},{},{}\" step=\"2\"/>", s[0] / 100, s[1] / 100, s[2] / 100, s[3] / 100));
                }
                pending_reach = None;
            }
        }
        for s in 0..4u8 {
            let (b, a) = (before.melds(s), state.melds(s));
            let changed = if a.len() > b.len() {
                Some(a.last().unwrap().clone())
            } else {
                a.iter().zip(b).find(|(x, y)| x != y).map(|(x, y)| {
                    // Keep the pon tiles first and the added tile last for the encoder.
                    let mut m = x.clone();
                    let added = *x.tiles.iter().find(|t| !y.tiles.contains(t)).unwrap();
                    m.tiles = y.tiles.clone();
                    m.tiles.push(added);
                    m
                })
            };
            if let Some(m) = changed {
                xml.push_str(&format!("<N who=\"{s}\" m=\"{}\"/>", encode_meld(&m)));
                let new_ind = *state.wall().indicators().last().unwrap();
                if m.meld_type == MeldType::ClosedKan {
                    xml.push_str(&format!("<DORA hai=\"{}\"/>", new_ind.id()));
                } else if m.meld_type.is_kan() {
                    delayed_dora.push(new_ind.id());
                }
            }
        }
        if before.outcome().is_none() {
            let sc = |d: &[i32; 4]| {
                let b = before.scores();
                (0..4).map(|i| format!("{},{}", b[i] / 100, d[i] / 100)).collect::<Vec<_>>().join(",")
            };
            match state.outcome() {
                Some(SubgameOutcome::Win(w)) => {
                    let v = w.value.as_ref().unwrap();
                    let mut yaku: Vec<String> = v.yaku.iter().map(|(_, h)| format!("1,{h}")).collect();
                    if v.dora_han > 0 {
                        yaku.push(format!("52,{}", v.dora_han));
                    }
                    let ura = if w.ura_indicators.is_empty() {
                        String::new()
                    } else {
                        format!(" doraHaiUra=\"{}\"", ids(&w.ura_indicators))
                    };
                    xml.push_str(&format!(
                        "<AGARI ba=\"{},{}\" hai=\"\" machi=\"{}\" ten=\"{},{},0\" yaku=\"{}\" doraHai=\"\"{ura} who=\"{}\" fromWho=\"{}\" sc=\"{}\"/>",
                        before.honba(),
                        before.pot(),
                        w.winning_tile.id(),
                        v.fu,
                        w.deltas[w.winner as usize],
                        yaku.join(","),
                        w.winner,
                        w.from.unwrap_or(w.winner),
                        sc(&w.deltas)
                    ));
                }
                Some(SubgameOutcome::ExhaustiveDraw { tenpai, deltas }) => {
                    let mut hai = String::new();
                    for s in 0..4 {
                        if tenpai[s] {
                            hai.push_str(&format!(" hai{s}=\"{}\"", ids(state.hand(s as u8))));
                        }
                    }
                    xml.push_str(&format!("<RYUUKYOKU ba=\"{},{}\" sc=\"{}\"{hai}/>", before.honba(), before.pot(), sc(deltas)));
                }
                Some(SubgameOutcome::FourKanAbort) => {
                    xml.push_str(&format!("<RYUUKYOKU type=\"kan4\" ba=\"{},{}\" sc=\"{}\"/>", before.honba(), before.pot(), sc(&[0; 4])));
                }
                None => {}
            }
        }
    }
    xml.push_str("</mjloggm>");
    PlayedGame {
        logs,
        xml,
        final_state: state,
    }
}
