//! Tenhou mjlog (XML) ingestion.
//!
//! Every converted subgame is replay-validated before it enters the corpus.
//! Whatever cannot be represented or validated is quarantined with a reason:
//! three-player and no-aka games, double ron, abortive draws, nagashi mangan,
//! robbed kans, unknown elements, bad meld codes and replay failures.

use std::collections::HashMap;
use std::io::Read;

use flate2::read::GzDecoder;
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{replay, Corpus, Event, EventLog, Header, MeldRecord, WinRecord, FORMAT_VERSION};
use crate::tiles::{MeldType, Tile, TileFace};

const GO_NO_AKA: u32 = 0x02;
const GO_NO_KUITAN: u32 = 0x04;
const GO_TONNAN: u32 = 0x08;
const GO_SANMA: u32 = 0x10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quarantined {
    pub game: String,
    /// `None` when the whole game was rejected.
    pub subgame: Option<u32>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub corpus: Corpus,
    pub quarantined: Vec<Quarantined>,
}

/// A decoded `N` element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedMeld {
    pub meld_type: MeldType,
    /// Physical tiles of the finished meld, ascending.
    pub tiles: Vec<Tile>,
    /// Relative seat of the source (1 right, 2 across, 3 left); 0 for closed kan.
    pub from_rel: u8,
    pub called: Option<Tile>,
    /// For an added kan, the tile added to the pon.
    pub added: Option<Tile>,
}

fn tile(id: u32) -> Option<Tile> {
    u8::try_from(id).ok().and_then(Tile::from_id)
}

/// Decode a Tenhou meld code.
pub fn decode_meld(m: u32) -> Result<DecodedMeld, String> {
    let from_rel = (m & 3) as u8;
    let bad = || format!("bad meld code {m}");
    if m & 0x4 != 0 {
        let t = (m >> 10) & 0x3f;
        let r = (t % 3) as usize;
        let t = t / 3;
        if t >= 21 {
            return Err(bad());
        }
        let base = (t / 7 * 9 + t % 7) * 4;
        let ids = [base + ((m >> 3) & 3), base + 4 + ((m >> 5) & 3), base + 8 + ((m >> 7) & 3)];
        let tiles: Vec<Tile> = ids.iter().map(|&i| tile(i).ok_or_else(bad)).collect::<Result<_, _>>()?;
        if from_rel != 3 {
            return Err(format!("chi from relative seat {from_rel}"));
        }
        let called = tiles[r];
        return Ok(DecodedMeld {
            meld_type: MeldType::Chi,
            tiles,
            from_rel,
            called: Some(called),
            added: None,
        });
    }
    if m & 0x18 != 0 {
        let unused = (m >> 5) & 3;
        let t = (m >> 9) & 0x7f;
        let r = (t % 3) as usize;
        let t = t / 3;
        if t >= 34 || from_rel == 0 {
            return Err(bad());
        }
        let base = t * 4;
        let pon: Vec<Tile> = (0..4).filter(|&c| c != unused).map(|c| tile(base + c).ok_or_else(bad)).collect::<Result<_, _>>()?;
        let called = pon[r];
        if m & 0x8 != 0 {
            return Ok(DecodedMeld {
                meld_type: MeldType::Pon,
                tiles: pon,
                from_rel,
                called: Some(called),
                added: None,
            });
        }
        let tiles: Vec<Tile> = (0..4).map(|c| tile(base + c).ok_or_else(bad)).collect::<Result<_, _>>()?;
        return Ok(DecodedMeld {
            meld_type: MeldType::AddedKan,
            tiles,
            from_rel,
            called: Some(called),
            added: tile(base + unused),
        });
    }
    if m & 0x20 != 0 {
        return Err("north extraction (three-player)".into());
    }
    let hai0 = (m >> 8) & 0xff;
    if hai0 >= 136 {
        return Err(bad());
    }
    let base = hai0 / 4 * 4;
    let tiles: Vec<Tile> = (0..4).map(|c| tile(base + c).ok_or_else(bad)).collect::<Result<_, _>>()?;
    if from_rel == 0 {
        Ok(DecodedMeld {
            meld_type: MeldType::ClosedKan,
            tiles,
            from_rel,
            called: None,
            added: None,
        })
    } else {
        Ok(DecodedMeld {
            meld_type: MeldType::OpenKan,
            tiles,
            from_rel,
            called: tile(hai0),
            added: None,
        })
    }
}

fn attrs(e: &BytesStart<'_>) -> Result<HashMap<String, String>, String> {
    let mut out = HashMap::new();
    for a in e.attributes() {
        let a = a.map_err(|err| format!("bad attribute: {err}"))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a.unescape_value().map_err(|err| format!("bad attribute value: {err}"))?.into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn ints(s: &str) -> Result<Vec<i64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse::<i64>().map_err(|_| format!("not an integer list: {s:?}"))).collect()
}

fn faces(ids: &[i64]) -> Result<Vec<TileFace>, String> {
    ids.iter()
        .map(|&i| u8::try_from(i).ok().and_then(Tile::from_id).map(|t| t.face()).ok_or_else(|| format!("bad tile id {i}")))
        .collect()
}

fn percent_decode(s: &str) -> String {
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'%' && i + 2 < b.len() {
            if let Some(v) = std::str::from_utf8(&b[i + 1..i + 3]).ok().and_then(|h| u8::from_str_radix(h, 16).ok()) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(b[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// Subgame under construction.
struct Building {
    log: EventLog,
    /// Event indices right after kan calls still waiting for their DORA.
    kan_slots: Vec<usize>,
    last_draw: [Option<u32>; 4],
    finished: bool,
    broken: Option<String>,
}

struct Ingest {
    game: String,
    ruleset: String,
    players: [String; 4],
    ratings: Option<[f64; 4]>,
    subgame: u32,
    current: Option<Building>,
    report: IngestReport,
}

impl Ingest {
    fn flush(&mut self) {
        let Some(b) = self.current.take() else { return };
        let sub = b.log.header.subgame;
        let reason = if let Some(r) = b.broken {
            Some(r)
        } else if !b.finished {
            Some("subgame has no result".to_string())
        } else {
            replay(&b.log).err().map(|e| format!("replay: {e}"))
        };
        match reason {
            Some(reason) => self.report.quarantined.push(Quarantined {
                game: self.game.clone(),
                subgame: Some(sub),
                reason,
            }),
            None => self.report.corpus.logs.push(b.log),
        }
    }

    fn break_current(&mut self, reason: String) {
        if let Some(b) = self.current.as_mut() {
            if b.broken.is_none() {
                b.broken = Some(reason);
            }
        }
    }

    fn element(&mut self, name: &str, a: &HashMap<String, String>) -> Result<(), String> {
        let get = |k: &str| a.get(k).map(String::as_str).ok_or_else(|| format!("{name} lacks {k}"));
        let seat_of = |c: char, first: char| c as u8 - first as u8;
        let first = name.chars().next().unwrap_or(' ');
        let rest = &name[first.len_utf8()..];
        if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) && "TUVWDEFG".contains(first) {
            let id: u32 = rest.parse().map_err(|_| format!("bad tile in {name}"))?;
            let t = tile(id).ok_or_else(|| format!("bad tile id {id}"))?;
            let Some(b) = self.current.as_mut() else {
                return Err(format!("{name} outside a subgame"));
            };
            if "TUVW".contains(first) {
                let seat = seat_of(first, 'T');
                b.last_draw[seat as usize] = Some(id);
                b.log.events.push(Event::Draw { seat, tile: t.face() });
            } else {
                let seat = seat_of(first, 'D');
                let tsumogiri = b.last_draw[seat as usize] == Some(id);
                b.last_draw[seat as usize] = None;
                b.log.events.push(Event::Discard {
                    seat,
                    tile: t.face(),
                    tsumogiri,
                });
            }
            return Ok(());
        }
        match name {
            "mjloggm" | "SHUFFLE" | "TAIKYOKU" | "BYE" => {}
            "GO" => {
                let ty: u32 = get("type")?.parse().map_err(|_| "bad GO type".to_string())?;
                if ty & GO_SANMA != 0 {
                    return Err("unsupported ruleset: three-player".into());
                }
                if ty & GO_NO_AKA != 0 {
                    return Err("unsupported ruleset: no aka".into());
                }
                if ty & GO_NO_KUITAN != 0 {
                    return Err("unsupported ruleset: no open tanyao".into());
                }
                self.ruleset = if ty & GO_TONNAN != 0 { "tenhou-tonnan" } else { "tenhou-tonpu" }.into();
            }
            "UN" => {
                if a.contains_key("n0") {
                    for s in 0..4 {
                        self.players[s] = a.get(&format!("n{s}")).map(|n| percent_decode(n)).unwrap_or_default();
                    }
                    if let Some(r) = a.get("rate") {
                        let v: Vec<f64> = r.split(',').filter_map(|x| x.trim().parse().ok()).collect();
                        if v.len() == 4 {
                            self.ratings = Some([v[0], v[1], v[2], v[3]]);
                        }
                    }
                }
            }
            "INIT" => {
                self.flush();
                let seed = ints(get("seed")?)?;
                let ten = ints(get("ten")?)?;
                let oya: u8 = get("oya")?.parse().map_err(|_| "bad oya".to_string())?;
                if seed.len() != 6 || ten.len() != 4 || oya > 3 {
                    return Err("malformed INIT".into());
                }
                let mut hands: [Vec<TileFace>; 4] = Default::default();
                for s in 0..4 {
                    hands[s] = faces(&ints(get(&format!("hai{s}"))?)?)?;
                    hands[s].sort();
                }
                let dora = faces(&seed[5..6])?[0];
                let header = Header {
                    v: FORMAT_VERSION,
                    game: self.game.clone(),
                    subgame: self.subgame,
                    ruleset: self.ruleset.clone(),
                    kyoku: u8::try_from(seed[0] + 1).map_err(|_| "bad kyoku".to_string())?,
                    honba: u32::try_from(seed[1]).map_err(|_| "bad honba".to_string())?,
                    pot: u32::try_from(seed[2]).map_err(|_| "bad pot".to_string())?,
                    dealer: oya,
                    scores: [ten[0] as i32 * 100, ten[1] as i32 * 100, ten[2] as i32 * 100, ten[3] as i32 * 100],
                    players: self.players.clone(),
                    ratings: self.ratings,
                    seed: None,
                };
                self.subgame += 1;
                let total: i64 = ten.iter().sum::<i64>() * 100 + seed[2] * 1000;
                let broken = (total != 100_000).then(|| format!("scores and pot sum to {total}"));
                self.current = Some(Building {
                    log: EventLog {
                        header,
                        events: vec![Event::Deal { hands, dora }],
                    },
                    kan_slots: Vec::new(),
                    last_draw: [None; 4],
                    finished: false,
                    broken,
                });
            }
            "N" => {
                let who: u8 = get("who")?.parse().map_err(|_| "bad who".to_string())?;
                let m: u32 = get("m")?.parse().map_err(|_| "bad meld code".to_string())?;
                let Some(b) = self.current.as_mut() else {
                    return Err("N outside a subgame".into());
                };
                let d = match decode_meld(m) {
                    Ok(d) => d,
                    Err(e) => {
                        self.break_current(format!("meld decode: {e}"));
                        return Ok(());
                    }
                };
                if who > 3 {
                    return Err("bad who".into());
                }
                let mut fs: Vec<TileFace> = d.tiles.iter().map(|t| t.face()).collect();
                fs.sort();
                let from = (d.from_rel != 0).then(|| (who + d.from_rel) % 4);
                b.log.events.push(Event::Call {
                    seat: who,
                    meld: MeldRecord {
                        meld_type: d.meld_type,
                        tiles: fs,
                        from,
                        called: d.called.map(|t| t.face()),
                    },
                });
                if d.meld_type.is_kan() {
                    b.kan_slots.push(b.log.events.len());
                }
            }
            "REACH" => {
                let who: u8 = get("who")?.parse().map_err(|_| "bad who".to_string())?;
                let step = get("step")?;
                let Some(b) = self.current.as_mut() else {
                    return Err("REACH outside a subgame".into());
                };
                if step == "1" {
                    b.log.events.push(Event::Riichi { seat: who });
                }
            }
            "DORA" => {
                let id: i64 = get("hai")?.parse().map_err(|_| "bad DORA".to_string())?;
                let face = faces(&[id])?[0];
                let Some(b) = self.current.as_mut() else {
                    return Err("DORA outside a subgame".into());
                };
                if b.kan_slots.is_empty() {
                    self.break_current("DORA without a kan".into());
                    return Ok(());
                }
                // Tenhou reveals kan dora after the next discard for open
                // kans; the engine reveals immediately, so move it up.
                let at = b.kan_slots.remove(0);
                b.log.events.insert(at, Event::NewDora { tile: face });
                for s in b.kan_slots.iter_mut() {
                    *s += 1;
                }
            }
            "AGARI" => {
                let who: u8 = get("who")?.parse().map_err(|_| "bad who".to_string())?;
                let from_who: u8 = get("fromWho")?.parse().map_err(|_| "bad fromWho".to_string())?;
                let Some(b) = self.current.as_mut() else {
                    return Err("AGARI outside a subgame".into());
                };
                if b.finished {
                    self.break_current("double ron".into());
                    return Ok(());
                }
                if from_who != who && matches!(b.log.events.last(), Some(Event::Call { meld, .. }) if meld.meld_type == MeldType::AddedKan) {
                    self.break_current("robbed kan".into());
                    return Ok(());
                }
                let machi = faces(&ints(get("machi")?)?)?;
                let ura = match a.get("doraHaiUra") {
                    Some(u) => faces(&ints(u)?)?,
                    None => Vec::new(),
                };
                let ten = ints(get("ten")?)?;
                let sc = ints(get("sc")?)?;
                if machi.len() != 1 || ten.len() < 2 || sc.len() != 8 {
                    return Err("malformed AGARI".into());
                }
                let mut yaku = Vec::new();
                let mut han = 0;
                let mut dora_han = 0;
                if let Some(y) = a.get("yaku") {
                    let v = ints(y)?;
                    for pair in v.chunks(2) {
                        if let [id, h] = pair {
                            let h = *h as u32;
                            han += h;
                            if (52..=54).contains(id) {
                                dora_han += h;
                            } else {
                                yaku.push((format!("tenhou_{id}"), h));
                            }
                        }
                    }
                }
                let yakuman = a.contains_key("yakuman");
                if let Some(y) = a.get("yakuman") {
                    for id in ints(y)? {
                        yaku.push((format!("tenhou_{id}"), 13));
                        han += 13;
                    }
                }
                let deltas = [sc[1] as i32 * 100, sc[3] as i32 * 100, sc[5] as i32 * 100, sc[7] as i32 * 100];
                b.log.events.push(Event::Win {
                    seat: who,
                    from: (from_who != who).then_some(from_who),
                    tile: machi[0],
                    ura,
                    result: WinRecord {
                        yaku,
                        dora_han,
                        han,
                        fu: ten[0] as u32,
                        yakuman,
                        deltas,
                    },
                });
                b.finished = true;
            }
            "RYUUKYOKU" => {
                let Some(b) = self.current.as_mut() else {
                    return Err("RYUUKYOKU outside a subgame".into());
                };
                if let Some(ty) = a.get("type") {
                    let reason = if ty == "nm" {
                        "nagashi mangan".to_string()
                    } else {
                        format!("abortive draw: {ty}")
                    };
                    self.break_current(reason);
                    return Ok(());
                }
                let sc = ints(get("sc")?)?;
                if sc.len() != 8 {
                    return Err("malformed RYUUKYOKU".into());
                }
                let tenpai = std::array::from_fn(|s| a.contains_key(&format!("hai{s}")));
                let deltas = [sc[1] as i32 * 100, sc[3] as i32 * 100, sc[5] as i32 * 100, sc[7] as i32 * 100];
                b.log.events.push(Event::DrawEnd { tenpai, deltas });
                b.finished = true;
            }
            other => {
                if self.current.is_some() {
                    self.break_current(format!("unknown element {other}"));
                } else {
                    return Err(format!("unknown element {other}"));
                }
            }
        }
        Ok(())
    }
}

fn decompress(bytes: &[u8]) -> Result<Vec<u8>, String> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut out).map_err(|e| format!("gzip: {e}"))?;
        Ok(out)
    } else {
        Ok(bytes.to_vec())
    }
}

/// Convert one mjlog file (plain or gzip) into validated subgame logs.
pub fn ingest_tenhou(bytes: &[u8], game_id: &str) -> IngestReport {
    let mut ing = Ingest {
        game: game_id.to_string(),
        ruleset: "tenhou-tonnan".into(),
        players: Default::default(),
        ratings: None,
        subgame: 0,
        current: None,
        report: IngestReport::default(),
    };
    let whole = |ing: &mut Ingest, reason: String| {
        ing.current = None;
        ing.report.corpus.logs.clear();
        ing.report.quarantined.push(Quarantined {
            game: ing.game.clone(),
            subgame: None,
            reason,
        });
    };
    let xml = match decompress(bytes) {
        Ok(x) => x,
        Err(e) => {
            whole(&mut ing, e);
            return ing.report;
        }
    };
    let mut reader = Reader::from_reader(xml.as_slice());
    let mut buf = Vec::new();
    loop {
        let ev = match reader.read_event_into(&mut buf) {
            Ok(ev) => ev,
            Err(e) => {
                whole(&mut ing, format!("xml at byte {}: {e}", reader.buffer_position()));
                return ing.report;
            }
        };
        match ev {
            XmlEvent::Start(e) | XmlEvent::Empty(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let res = attrs(&e).and_then(|a| ing.element(&name, &a));
                if let Err(reason) = res {
                    whole(&mut ing, reason);
                    return ing.report;
                }
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    ing.flush();
    ing.report
}
