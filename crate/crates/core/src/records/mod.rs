//! Canonical game records (`.mjlog.jsonl`), replay validation, and the
//! Tenhou XML adapter.
//!
//! A record file is UTF-8 JSON lines. An optional first line
//! `{"corpus":{...}}` carries provenance. Each subgame starts with a header
//! line (`"v":1`) followed by one line per event (`"e":...`). Tiles are
//! written as faces ("1m", "0p" for aka, "E", "Ch").

mod recorder;
mod replay;
pub mod tenhou;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::RecordError;
use crate::rules::ScoringMode;
use crate::tiles::{MeldType, TileFace};

pub use recorder::{events_for_step, Recorder};
pub use replay::{build_deal, replay, replay_visit};

pub const FORMAT_VERSION: u32 = 1;
/// East-South, aka fives, open tanyao; scored by our own rules.
pub const RULESET_DEFAULT: &str = "tonnan-aka-kuitan";
/// Logs converted from Tenhou carry rulesets with this prefix and replay
/// with logged point deltas.
pub const RULESET_TENHOU_PREFIX: &str = "tenhou";

pub fn scoring_mode(ruleset: &str) -> ScoringMode {
    if ruleset.starts_with(RULESET_TENHOU_PREFIX) {
        ScoringMode::Recorded
    } else {
        ScoringMode::Rules
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub v: u32,
    pub game: String,
    pub subgame: u32,
    pub ruleset: String,
    pub kyoku: u8,
    pub honba: u32,
    pub pot: u32,
    pub dealer: u8,
    pub scores: [i32; 4],
    pub players: [String; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeldRecord {
    #[serde(rename = "type")]
    pub meld_type: MeldType,
    pub tiles: Vec<TileFace>,
    /// Absolute seat the called tile came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub called: Option<TileFace>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinRecord {
    pub yaku: Vec<(String, u32)>,
    pub dora_han: u32,
    pub han: u32,
    pub fu: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub yakuman: bool,
    pub deltas: [i32; 4],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "e", rename_all = "snake_case")]
pub enum Event {
    Deal {
        hands: [Vec<TileFace>; 4],
        dora: TileFace,
    },
    Draw {
        seat: u8,
        tile: TileFace,
    },
    Discard {
        seat: u8,
        tile: TileFace,
        tsumogiri: bool,
    },
    /// Precedes the declaring discard.
    Riichi {
        seat: u8,
    },
    Call {
        seat: u8,
        meld: MeldRecord,
    },
    NewDora {
        tile: TileFace,
    },
    Win {
        seat: u8,
        /// Discarder, or null for tsumo.
        from: Option<u8>,
        tile: TileFace,
        ura: Vec<TileFace>,
        result: WinRecord,
    },
    DrawEnd {
        tenpai: [bool; 4],
        deltas: [i32; 4],
    },
    Abort {
        reason: String,
    },
}

impl Event {
    pub fn seat(&self) -> Option<u8> {
        match self {
            Event::Draw { seat, .. }
            | Event::Discard { seat, .. }
            | Event::Riichi { seat }
            | Event::Call { seat, .. }
            | Event::Win { seat, .. } => Some(*seat),
            _ => None,
        }
    }
}

/// One subgame.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub header: Header,
    pub events: Vec<Event>,
}

impl EventLog {
    /// Net point change per seat over the subgame, riichi deposits included.
    pub fn score_changes(&self) -> [i32; 4] {
        let mut d = [0i32; 4];
        let mut declaring: Option<u8> = None;
        let mut last_riichi_discard: Option<u8> = None;
        for e in &self.events {
            match e {
                Event::Riichi { seat } => {
                    d[*seat as usize] -= 1000;
                    declaring = Some(*seat);
                }
                Event::Discard { seat, .. } => {
                    last_riichi_discard = declaring.filter(|s| s == seat);
                    declaring = None;
                }
                Event::Win { from, result, .. } => {
                    // A ronned riichi tile returns its deposit.
                    if from.is_some() && *from == last_riichi_discard {
                        d[from.unwrap() as usize] += 1000;
                    }
                    for s in 0..4 {
                        d[s] += result.deltas[s];
                    }
                }
                Event::DrawEnd { deltas, .. } => {
                    for s in 0..4 {
                        d[s] += deltas[s];
                    }
                }
                _ => {}
            }
        }
        d
    }

    /// Content hash used to drop duplicate logs. Ignores the game id.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = self.header.clone();
        h.game.clear();
        h.subgame = 0;
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&h).expect("header serializes"));
        for e in &self.events {
            hasher.update(serde_json::to_vec(e).expect("event serializes"));
        }
        hasher.finalize().into()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub provenance: Option<Provenance>,
    pub logs: Vec<EventLog>,
}

#[derive(Serialize, Deserialize)]
struct ProvenanceLine {
    corpus: Provenance,
}

impl Corpus {
    /// Drop exact duplicate subgames (same content hash), keeping the first.
    /// Returns how many were dropped.
    pub fn dedup(&mut self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let before = self.logs.len();
        self.logs.retain(|l| seen.insert(l.content_hash()));
        before - self.logs.len()
    }
}

fn syntax(line: usize, e: serde_json::Error) -> RecordError {
    RecordError::Syntax {
        line,
        column: e.column(),
        msg: e.to_string(),
    }
}

/// Parse without replaying. Structural errors only.
pub fn parse_canonical_unchecked(bytes: &[u8]) -> Result<Corpus, RecordError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        RecordError::Syntax {
            line,
            column: 0,
            msg: "invalid UTF-8".into(),
        }
    })?;
    let mut corpus = Corpus::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(raw).map_err(|e| syntax(line, e))?;
        let Some(obj) = v.as_object() else {
            return Err(RecordError::Structure {
                line,
                msg: "expected a JSON object".into(),
            });
        };
        if obj.contains_key("e") {
            let ev: Event = serde_json::from_value(v).map_err(|e| RecordError::Structure {
                line,
                msg: e.to_string(),
            })?;
            let Some(log) = corpus.logs.last_mut() else {
                return Err(RecordError::Structure {
                    line,
                    msg: "event before any header".into(),
                });
            };
            log.events.push(ev);
        } else if obj.contains_key("v") {
            let header: Header = serde_json::from_value(v).map_err(|e| RecordError::Structure {
                line,
                msg: e.to_string(),
            })?;
            if header.v != FORMAT_VERSION {
                return Err(RecordError::Structure {
                    line,
                    msg: format!("unsupported record version {}", header.v),
                });
            }
            corpus.logs.push(EventLog {
                header,
                events: Vec::new(),
            });
        } else if obj.contains_key("corpus") {
            if line != 1 || corpus.provenance.is_some() {
                return Err(RecordError::Structure {
                    line,
                    msg: "provenance must be the first line".into(),
                });
            }
            let p: ProvenanceLine = serde_json::from_value(v).map_err(|e| RecordError::Structure {
                line,
                msg: e.to_string(),
            })?;
            corpus.provenance = Some(p.corpus);
        } else {
            return Err(RecordError::Structure {
                line,
                msg: "line is neither header, event nor provenance".into(),
            });
        }
    }
    Ok(corpus)
}

/// Parse and replay-validate every log.
pub fn parse_canonical(bytes: &[u8]) -> Result<Corpus, RecordError> {
    let corpus = parse_canonical_unchecked(bytes)?;
    let mut line = 1 + usize::from(corpus.provenance.is_some());
    for (i, log) in corpus.logs.iter().enumerate() {
        replay(log).map_err(|source| RecordError::Semantic { log: i, line, source })?;
        line += 1 + log.events.len();
    }
    Ok(corpus)
}

pub fn emit_log(log: &EventLog, out: &mut Vec<u8>) {
    serde_json::to_writer(&mut *out, &log.header).expect("header serializes");
    out.push(b'\n');
    for e in &log.events {
        serde_json::to_writer(&mut *out, e).expect("event serializes");
        out.push(b'\n');
    }
}

pub fn emit_canonical(corpus: &Corpus) -> Vec<u8> {
    let mut out = Vec::new();
    if let Some(p) = &corpus.provenance {
        serde_json::to_writer(&mut out, &ProvenanceLine { corpus: p.clone() }).expect("provenance serializes");
        out.push(b'\n');
    }
    for log in &corpus.logs {
        emit_log(log, &mut out);
    }
    out
}
