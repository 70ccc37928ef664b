//! JSON payloads of the play service. Tiles are faces ("0m" = aka 5m);
//! seat-indexed arrays in views are viewer-relative: self, right, across, left.

use houou_core::features::LAYOUT_TAG;
use houou_core::records::Event;
use houou_core::rules::{Action, TableView};
use houou_core::tiles::{Meld, TileFace};
use serde::{Deserialize, Serialize};

pub const API_VERSION: u32 = 1;

/// A decision as sent to and accepted from the client. Faces within a
/// variant are sorted, so equal decisions compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireAction {
    Discard { tile: TileFace },
    Riichi { tile: TileFace },
    Pon { tiles: Vec<TileFace> },
    Chi { tiles: Vec<TileFace> },
    OpenKan { tiles: Vec<TileFace> },
    ClosedKan { tile: TileFace },
    AddedKan { tile: TileFace },
    Tsumo,
    Ron,
    Pass,
}

fn faces(ts: &[houou_core::tiles::Tile]) -> Vec<TileFace> {
    let mut f: Vec<TileFace> = ts.iter().map(|t| t.face()).collect();
    f.sort_by_key(|x| (x.kind, x.aka));
    f
}

impl WireAction {
    /// `None` for draws, which are never the client's decision.
    pub fn from_action(a: &Action) -> Option<WireAction> {
        Some(match a {
            Action::Draw => return None,
            Action::Discard(t) => WireAction::Discard { tile: t.face() },
            Action::Riichi(t) => WireAction::Riichi { tile: t.face() },
            Action::Pon(ts) => WireAction::Pon { tiles: faces(ts) },
            Action::Chi(ts) => WireAction::Chi { tiles: faces(ts) },
            Action::OpenKan(ts) => WireAction::OpenKan { tiles: faces(ts) },
            Action::ClosedKan(k) => WireAction::ClosedKan { tile: TileFace::plain(*k) },
            Action::AddedKan(t) => WireAction::AddedKan { tile: t.face() },
            Action::Tsumo => WireAction::Tsumo,
            Action::Ron => WireAction::Ron,
            Action::Pass => WireAction::Pass,
        })
    }

    /// The legal action this stands for, if any.
    pub fn resolve(&self, legal: &[Action]) -> Option<Action> {
        let mut me = self.clone();
        if let WireAction::Pon { tiles } | WireAction::Chi { tiles } | WireAction::OpenKan { tiles } = &mut me {
            tiles.sort_by_key(|x| (x.kind, x.aka));
        }
        legal.iter().find(|a| WireAction::from_action(a).as_ref() == Some(&me)).cloned()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMeld {
    #[serde(rename = "type")]
    pub meld_type: houou_core::tiles::MeldType,
    pub tiles: Vec<TileFace>,
    /// Relative seat the called tile came from (1 right, 2 across, 3 left).
    pub from: Option<u8>,
    pub called: Option<TileFace>,
}

impl From<&Meld> for WireMeld {
    fn from(m: &Meld) -> Self {
        WireMeld {
            meld_type: m.meld_type,
            tiles: m.tiles.iter().map(|t| t.face()).collect(),
            from: m.called_from,
            called: m.called_tile.map(|t| t.face()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireDiscard {
    pub tile: TileFace,
    pub riichi: bool,
    pub called: bool,
    pub tsumogiri: bool,
}

/// The viewer's projection of the table. Built only from a `TableView`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireView {
    /// Absolute seat of the viewer.
    pub seat: u8,
    /// Own closed hand in table order, the drawn tile included.
    pub hand: Vec<TileFace>,
    pub drawn: Option<TileFace>,
    pub melds: [Vec<WireMeld>; 4],
    pub discards: [Vec<WireDiscard>; 4],
    pub riichi: [bool; 4],
    pub dora_indicators: Vec<TileFace>,
    pub round_wind: TileFace,
    pub own_wind: TileFace,
    /// 1 = East 1 … 8 = South 4.
    pub kyoku: u8,
    pub honba: u32,
    pub riichi_pot: u32,
    pub scores: [i32; 4],
    pub ranks: [u8; 4],
    pub live_remaining: usize,
}

impl From<&TableView> for WireView {
    fn from(v: &TableView) -> Self {
        WireView {
            seat: v.viewer,
            hand: v.hand.iter().map(|t| t.face()).collect(),
            drawn: v.drawn.map(|t| t.face()),
            melds: std::array::from_fn(|r| v.melds[r].iter().map(WireMeld::from).collect()),
            discards: std::array::from_fn(|r| {
                v.discards[r]
                    .iter()
                    .map(|d| WireDiscard {
                        tile: d.tile.face(),
                        riichi: d.riichi,
                        called: d.called,
                        tsumogiri: d.tsumogiri,
                    })
                    .collect()
            }),
            riichi: v.riichi,
            dora_indicators: v.dora_indicators.iter().map(|t| t.face()).collect(),
            round_wind: TileFace::plain(v.round_wind),
            own_wind: TileFace::plain(v.own_wind),
            kyoku: v.kyoku,
            honba: v.honba,
            riichi_pot: v.riichi_pot,
            scores: v.scores,
            ranks: v.ranks,
            live_remaining: v.live_remaining,
        }
    }
}

/// Discard-head probabilities: over the 34 kinds, and per tile of `hand`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hint {
    pub kinds: Vec<f32>,
    pub hand: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// The human must choose from `legal`.
    YourTurn,
    GameOver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    /// Absolute seat of the discarder.
    pub from: u8,
    pub tile: TileFace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    /// Absolute seat order.
    pub scores: [i32; 4],
    pub ranks: [u8; 4],
    pub pot: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub v: u32,
    pub layout: String,
    pub session: String,
    /// Number of stream events emitted so far.
    pub seq: u64,
    pub status: Status,
    pub view: WireView,
    pub legal: Vec<WireAction>,
    pub claim: Option<Claim>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<Hint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<FinalResult>,
}

/// Service-level events that have no canonical counterpart, or stand in for
/// one that would reveal hidden tiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "e", rename_all = "snake_case")]
pub enum SessionEvent {
    SubgameStart {
        subgame: u32,
        kyoku: u8,
        honba: u32,
        pot: u32,
        dealer: u8,
        scores: [i32; 4],
    },
    /// The viewer's own starting hand and the first dora indicator.
    Deal { hand: Vec<TileFace>, dora: TileFace },
    /// Another seat drew; the tile stays hidden.
    Draw { seat: u8 },
    GameOver { scores: [i32; 4], ranks: [u8; 4] },
}

/// One stream item: a canonical event when it is public, otherwise its
/// redacted stand-in.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PublicEvent {
    Table(Event),
    Session(SessionEvent),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamItem {
    pub v: u32,
    pub layout: String,
    pub seq: u64,
    pub event: PublicEvent,
}

/// Redact one canonical event for `viewer`.
pub fn redact(e: &Event, viewer: u8) -> PublicEvent {
    match e {
        Event::Deal { hands, dora } => PublicEvent::Session(SessionEvent::Deal {
            hand: hands[viewer as usize].clone(),
            dora: *dora,
        }),
        Event::Draw { seat, .. } if *seat != viewer => PublicEvent::Session(SessionEvent::Draw { seat: *seat }),
        other => PublicEvent::Table(other.clone()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    /// Absolute seat of the human; 0 is the first dealer.
    #[serde(default)]
    pub human_seat: u8,
    /// Bots for the other seats in seat order: "network", "greedy" or "random".
    #[serde(default = "default_bots")]
    pub bots: [String; 3],
    #[serde(default)]
    pub seed: Option<u64>,
    /// Attach discard-head probabilities to observations.
    #[serde(default)]
    pub hints: bool,
    /// Forbid hints for this session.
    #[serde(default)]
    pub fair_play: bool,
    /// Seconds the human has per decision; on expiry the safest default
    /// (pass, or discarding the drawn tile) is played.
    #[serde(default)]
    pub deadline_secs: Option<u64>,
    /// Overrides for network bots (thresholds, masking, determinism).
    #[serde(default)]
    pub agent: Option<houou_play::AgentConfig>,
}

fn default_bots() -> [String; 3] {
    ["greedy".to_string(), "greedy".to_string(), "greedy".to_string()]
}

impl Default for CreateRequest {
    fn default() -> Self {
        CreateRequest {
            human_seat: 0,
            bots: default_bots(),
            seed: None,
            hints: false,
            fair_play: false,
            deadline_secs: None,
            agent: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub v: u32,
    pub layout: String,
    pub session: String,
    pub seed: u64,
    pub observation: Observation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub idempotency_key: String,
    pub action: WireAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub v: u32,
    pub layout: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// After acceptance: the next point where the human acts. After
    /// rejection: the unchanged state with the current legal set.
    pub observation: Observation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub file: String,
    pub task: String,
    pub layout: String,
    pub classes: usize,
    pub parameters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelList {
    pub v: u32,
    pub layout: String,
    pub models: Vec<ModelInfo>,
    /// Whether a full head set is loaded for network bots and hints.
    pub loaded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub v: u32,
    pub layout: String,
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legal: Option<Vec<WireAction>>,
}

pub fn layout() -> String {
    LAYOUT_TAG.to_string()
}
