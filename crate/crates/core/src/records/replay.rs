//! Replay a canonical log through the rules engine.
//!
//! Logs carry faces, not physical ids, and never the wall itself, so the wall
//! is rebuilt from the events: regular draws become the front of the live
//! wall in order, revealed indicators fill dead-wall slots 0..5, uradora
//! 5..10 and replacement draws 10..14. Every other slot takes the remaining
//! tiles in ascending id order. A face with no free physical copy left is a
//! violation at the event that asked for it.

use super::{scoring_mode, Event, EventLog, WinRecord};
use crate::error::ReplayError;
use crate::rules::scoring::HandValue;
use crate::rules::{Action, GameState, Phase, RecordedResult, ScoringMode, SubgameOutcome, SubgameSetup};
use crate::tiles::{
    Deal, MeldType, Tile, TileFace, Wall, DEAD_WALL_SIZE, LIVE_WALL_SIZE, MAX_INDICATORS, NUM_TILES, RINSHAN_OFFSET, URA_OFFSET,
};

struct Pool([bool; NUM_TILES]);

impl Pool {
    fn take(&mut self, face: TileFace) -> Option<Tile> {
        let t = face.copies().find(|t| !self.0[t.id() as usize])?;
        self.0[t.id() as usize] = true;
        Some(t)
    }
}

fn violation(event: usize, seat: Option<u8>, turn: u32, rule: impl Into<String>) -> ReplayError {
    ReplayError {
        event,
        seat,
        turn,
        rule: rule.into(),
    }
}

/// Reconstruct the deal (hands and a wall consistent with every draw and
/// reveal in the log).
pub fn build_deal(log: &EventLog) -> Result<Deal, ReplayError> {
    let err = |i: usize, rule: String| violation(i, None, 0, rule);
    let Some(Event::Deal { hands, dora }) = log.events.first() else {
        return Err(err(0, "log does not start with a deal".into()));
    };
    let mut pool = Pool([false; NUM_TILES]);
    let mut dealt: [Vec<Tile>; 4] = Default::default();
    for (s, faces) in hands.iter().enumerate() {
        if faces.len() != 13 {
            return Err(err(0, format!("seat {s} dealt {} tiles", faces.len())));
        }
        for &f in faces {
            dealt[s].push(pool.take(f).ok_or_else(|| err(0, format!("fifth copy of {f}")))?);
        }
    }
    let mut dead: [Option<Tile>; DEAD_WALL_SIZE] = [None; DEAD_WALL_SIZE];
    dead[0] = Some(pool.take(*dora).ok_or_else(|| err(0, format!("fifth copy of {dora}")))?);
    let mut live = Vec::new();
    let mut indicators = 1;
    let mut replacements = 0;
    let mut after_kan = false;
    for (i, e) in log.events.iter().enumerate().skip(1) {
        match e {
            Event::Call { meld, .. } if meld.meld_type.is_kan() => after_kan = true,
            Event::NewDora { tile } => {
                if indicators >= MAX_INDICATORS {
                    return Err(err(i, "more than five dora indicators".into()));
                }
                dead[indicators] = Some(pool.take(*tile).ok_or_else(|| err(i, format!("fifth copy of {tile}")))?);
                indicators += 1;
            }
            Event::Draw { tile, .. } => {
                let t = pool.take(*tile).ok_or_else(|| err(i, format!("fifth copy of {tile}")))?;
                if after_kan {
                    if replacements >= 4 {
                        return Err(err(i, "more than four replacement draws".into()));
                    }
                    dead[RINSHAN_OFFSET + replacements] = Some(t);
                    replacements += 1;
                    after_kan = false;
                } else {
                    live.push(t);
                }
            }
            Event::Win { ura, .. } => {
                if ura.len() > MAX_INDICATORS {
                    return Err(err(i, "more than five uradora".into()));
                }
                for (j, f) in ura.iter().enumerate() {
                    dead[URA_OFFSET + j] = Some(pool.take(*f).ok_or_else(|| err(i, format!("fifth copy of {f}")))?);
                }
            }
            Event::Deal { .. } => return Err(err(i, "second deal in one subgame".into())),
            _ => {}
        }
    }
    if live.len() + replacements > LIVE_WALL_SIZE {
        return Err(err(log.events.len(), "more draws than the wall holds".into()));
    }
    let mut rest = (0..NUM_TILES as u8).filter(|&id| !pool.0[id as usize]).map(|id| Tile::from_id(id).expect("id in range"));
    let dead: Vec<Tile> = dead.iter().map(|t| t.unwrap_or_else(|| rest.next().expect("136 tiles"))).collect();
    live.extend(rest);
    debug_assert_eq!(live.len(), LIVE_WALL_SIZE);
    Ok(Deal {
        wall: Wall::from_parts(live, dead),
        hands: dealt,
    })
}

fn recorded_value(r: &WinRecord) -> HandValue {
    HandValue {
        yaku: r.yaku.clone(),
        dora_han: r.dora_han,
        han: r.han,
        fu: r.fu,
        yakuman: r.yakuman,
    }
}

/// Replay a log, calling `visit(state_before, seat, action)` before each
/// engine step. Returns the final state, which is always a finished subgame.
pub fn replay_visit<F>(log: &EventLog, mut visit: F) -> Result<GameState, ReplayError>
where
    F: FnMut(&GameState, u8, &Action),
{
    let deal = build_deal(log)?;
    let h = &log.header;
    if h.dealer > 3 || h.kyoku == 0 {
        return Err(violation(0, None, 0, "bad header: dealer or kyoku out of range"));
    }
    let setup = SubgameSetup {
        kyoku: h.kyoku,
        honba: h.honba,
        pot: h.pot,
        dealer: h.dealer,
        scores: h.scores,
    };
    let mode = scoring_mode(&h.ruleset);
    let mut st = GameState::start(setup, deal, mode);
    let mut declaring: Option<u8> = None;

    for (i, e) in log.events.iter().enumerate().skip(1) {
        let mut step = |st: &mut GameState, seat: u8, a: Action| -> Result<(), ReplayError> {
            visit(st, seat, &a);
            st.apply_mut(seat, &a).map_err(|v| violation(i, Some(seat), st.turn(), v.rule))
        };
        // An unanswered call window closes with everyone passing.
        let close_window = |st: &mut GameState, step: &mut dyn FnMut(&mut GameState, u8, Action) -> Result<(), ReplayError>| {
            if st.phase() == Phase::AwaitingCalls {
                for s in st.awaiting() {
                    step(st, s, Action::Pass)?;
                }
            }
            Ok::<(), ReplayError>(())
        };
        let fail = |st: &GameState, seat: Option<u8>, rule: String| violation(i, seat, st.turn(), rule);
        match e {
            Event::Deal { .. } => return Err(fail(&st, None, "second deal in one subgame".into())),
            Event::Draw { seat, tile } => {
                close_window(&mut st, &mut step)?;
                step(&mut st, *seat, Action::Draw)?;
                if st.drawn().map(|t| t.face()) != Some(*tile) {
                    return Err(fail(&st, Some(*seat), format!("drew {:?}, log says {tile}", st.drawn())));
                }
            }
            Event::Riichi { seat } => declaring = Some(*seat),
            Event::Discard { seat, tile, tsumogiri } => {
                close_window(&mut st, &mut step)?;
                let hand = st.hand(*seat);
                let drawn = st.drawn().filter(|_| st.actor() == *seat);
                let t = if *tsumogiri {
                    drawn.filter(|d| d.face() == *tile)
                } else {
                    hand.iter()
                        .copied()
                        .find(|&t| t.face() == *tile && Some(t) != drawn)
                        .or_else(|| drawn.filter(|d| d.face() == *tile))
                };
                let Some(t) = t else {
                    return Err(fail(&st, Some(*seat), format!("discard of {tile} not in hand")));
                };
                let a = if declaring == Some(*seat) { Action::Riichi(t) } else { Action::Discard(t) };
                declaring = None;
                step(&mut st, *seat, a)?;
            }
            Event::Call { seat, meld } => {
                let mut hand = st.hand(*seat).to_vec();
                let mut faces = meld.tiles.clone();
                if let Some(c) = meld.called {
                    if let Some(p) = faces.iter().position(|f| *f == c) {
                        faces.remove(p);
                    }
                }
                let mut used = Vec::new();
                if meld.meld_type != MeldType::AddedKan {
                    for f in &faces {
                        let Some(p) = hand.iter().position(|t| t.face() == *f) else {
                            return Err(fail(&st, Some(*seat), format!("{:?} needs {f} which is not in hand", meld.meld_type)));
                        };
                        used.push(hand.remove(p));
                    }
                }
                match meld.meld_type {
                    MeldType::Pon | MeldType::Chi | MeldType::OpenKan => {
                        if st.phase() != Phase::AwaitingCalls {
                            return Err(fail(&st, Some(*seat), "call without an open discard".into()));
                        }
                        if meld.from.is_some() && st.pending_discard().map(|p| p.0) != meld.from {
                            return Err(fail(&st, Some(*seat), "call names the wrong discarder".into()));
                        }
                        let a = match meld.meld_type {
                            MeldType::Pon if used.len() == 2 => Action::Pon([used[0], used[1]]),
                            MeldType::Chi if used.len() == 2 => Action::Chi([used[0], used[1]]),
                            MeldType::OpenKan if used.len() == 3 => Action::OpenKan([used[0], used[1], used[2]]),
                            _ => return Err(fail(&st, Some(*seat), "meld has the wrong tile count".into())),
                        };
                        step(&mut st, *seat, a)?;
                        close_window(&mut st, &mut step)?;
                    }
                    MeldType::ClosedKan => {
                        close_window(&mut st, &mut step)?;
                        step(&mut st, *seat, Action::ClosedKan(meld.tiles[0].kind))?;
                    }
                    MeldType::AddedKan => {
                        close_window(&mut st, &mut step)?;
                        let kind = meld.tiles[0].kind;
                        let Some(&t) = hand.iter().find(|t| t.kind() == kind) else {
                            return Err(fail(&st, Some(*seat), format!("added kan needs a {kind} in hand")));
                        };
                        step(&mut st, *seat, Action::AddedKan(t))?;
                    }
                }
            }
            Event::NewDora { tile } => {
                if st.wall().indicators().last().map(|t| t.face()) != Some(*tile) {
                    return Err(fail(&st, None, format!("new dora {tile} was not revealed by a kan")));
                }
            }
            Event::Win { seat, from, result, .. } => {
                if mode == ScoringMode::Recorded {
                    st.set_recorded_result(RecordedResult {
                        value: Some(recorded_value(result)),
                        deltas: result.deltas,
                    });
                }
                match from {
                    None => step(&mut st, *seat, Action::Tsumo)?,
                    Some(f) => {
                        if st.pending_discard().map(|p| p.0) != Some(*f) {
                            return Err(fail(&st, Some(*seat), "ron without a discard from that seat".into()));
                        }
                        step(&mut st, *seat, Action::Ron)?;
                        close_window(&mut st, &mut step)?;
                    }
                }
                match st.outcome() {
                    Some(SubgameOutcome::Win(w)) if w.winner == *seat => {
                        if w.deltas != result.deltas {
                            return Err(fail(&st, Some(*seat), format!("deltas {:?} differ from logged {:?}", w.deltas, result.deltas)));
                        }
                    }
                    _ => return Err(fail(&st, Some(*seat), "win did not end the subgame".into())),
                }
            }
            Event::DrawEnd { tenpai, deltas } => {
                if mode == ScoringMode::Recorded {
                    st.set_recorded_result(RecordedResult { value: None, deltas: *deltas });
                }
                close_window(&mut st, &mut step)?;
                match st.outcome() {
                    Some(SubgameOutcome::ExhaustiveDraw { tenpai: t, deltas: d }) => {
                        if t != tenpai && mode == ScoringMode::Rules {
                            return Err(fail(&st, None, format!("tenpai {t:?} differ from logged {tenpai:?}")));
                        }
                        if d != deltas {
                            return Err(fail(&st, None, format!("draw deltas {d:?} differ from logged {deltas:?}")));
                        }
                    }
                    _ => return Err(fail(&st, None, "draw_end before the wall ran out".into())),
                }
            }
            Event::Abort { .. } => {
                if st.outcome() != Some(&SubgameOutcome::FourKanAbort) {
                    return Err(fail(&st, None, "abort without four kans".into()));
                }
            }
        }
        let v = st.invariant_violations();
        if let Some(first) = v.first() {
            return Err(fail(&st, e.seat(), format!("invariant broken: {first}")));
        }
    }
    if !st.is_over() {
        return Err(violation(log.events.len(), None, st.turn(), "log ends before the subgame is over"));
    }
    Ok(st)
}

pub fn replay(log: &EventLog) -> Result<GameState, ReplayError> {
    replay_visit(log, |_, _, _| {})
}
