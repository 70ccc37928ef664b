//! Turn engine steps into canonical events by diffing states.

use super::{Event, EventLog, Header, MeldRecord, WinRecord, FORMAT_VERSION};
use crate::rules::{Action, GameState, SubgameOutcome};
use crate::tiles::{sort_hand, Meld};

fn meld_record(owner: u8, m: &Meld) -> MeldRecord {
    let mut tiles: Vec<_> = sort_hand(&m.tiles).iter().map(|t| t.face()).collect();
    tiles.sort();
    MeldRecord {
        meld_type: m.meld_type,
        tiles,
        from: m.called_from.map(|r| (owner + r) % 4),
        called: m.called_tile.map(|t| t.face()),
    }
}

/// Events produced by one `apply(before, seat, action) == after` step.
pub fn events_for_step(before: &GameState, seat: u8, action: &Action, after: &GameState) -> Vec<Event> {
    let mut out = Vec::new();
    match action {
        Action::Draw => {
            if let Some(t) = after.drawn() {
                out.push(Event::Draw { seat, tile: t.face() });
            }
        }
        Action::Riichi(t) | Action::Discard(t) => {
            if matches!(action, Action::Riichi(_)) {
                out.push(Event::Riichi { seat });
            }
            out.push(Event::Discard {
                seat,
                tile: t.face(),
                tsumogiri: before.drawn() == Some(*t),
            });
        }
        _ => {}
    }
    for s in 0..4u8 {
        let (b, a) = (before.melds(s), after.melds(s));
        if a.len() > b.len() {
            out.push(Event::Call {
                seat: s,
                meld: meld_record(s, a.last().expect("non-empty")),
            });
        } else if let Some(m) = a.iter().zip(b).find(|(x, y)| x != y).map(|(x, _)| x) {
            out.push(Event::Call {
                seat: s,
                meld: meld_record(s, m),
            });
        }
    }
    let (bi, ai) = (before.wall().indicators(), after.wall().indicators());
    for t in &ai[bi.len().min(ai.len())..] {
        out.push(Event::NewDora { tile: t.face() });
    }
    if before.outcome().is_none() {
        match after.outcome() {
            Some(SubgameOutcome::Win(w)) => {
                let result = match &w.value {
                    Some(v) => WinRecord {
                        yaku: v.yaku.clone(),
                        dora_han: v.dora_han,
                        han: v.han,
                        fu: v.fu,
                        yakuman: v.yakuman,
                        deltas: w.deltas,
                    },
                    None => WinRecord {
                        yaku: Vec::new(),
                        dora_han: 0,
                        han: 0,
                        fu: 0,
                        yakuman: false,
                        deltas: w.deltas,
                    },
                };
                out.push(Event::Win {
                    seat: w.winner,
                    from: w.from,
                    tile: w.winning_tile.face(),
                    ura: w.ura_indicators.iter().map(|t| t.face()).collect(),
                    result,
                });
            }
            Some(SubgameOutcome::ExhaustiveDraw { tenpai, deltas }) => out.push(Event::DrawEnd {
                tenpai: *tenpai,
                deltas: *deltas,
            }),
            Some(SubgameOutcome::FourKanAbort) => out.push(Event::Abort { reason: "four_kan".into() }),
            None => {}
        }
    }
    out
}

/// Accumulates the log of one subgame as it is played.
#[derive(Clone, Debug)]
pub struct Recorder {
    log: EventLog,
}

impl Recorder {
    /// Start recording a freshly dealt subgame.
    pub fn start(game: &str, subgame: u32, ruleset: &str, players: [String; 4], seed: Option<u64>, state: &GameState) -> Recorder {
        let setup = state.setup();
        let header = Header {
            v: FORMAT_VERSION,
            game: game.to_string(),
            subgame,
            ruleset: ruleset.to_string(),
            kyoku: setup.kyoku,
            honba: setup.honba,
            pot: setup.pot,
            dealer: setup.dealer,
            scores: setup.scores,
            players,
            ratings: None,
            seed,
        };
        let hands = std::array::from_fn(|s| sort_hand(state.hand(s as u8)).iter().map(|t| t.face()).collect());
        let dora = state.wall().indicators()[0].face();
        Recorder {
            log: EventLog {
                header,
                events: vec![Event::Deal { hands, dora }],
            },
        }
    }

    /// Record one step; returns the events it produced.
    pub fn step(&mut self, before: &GameState, seat: u8, action: &Action, after: &GameState) -> &[Event] {
        let n = self.log.events.len();
        self.log.events.extend(events_for_step(before, seat, action, after));
        &self.log.events[n..]
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn finish(self) -> EventLog {
        self.log
    }
}
