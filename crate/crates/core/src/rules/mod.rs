//! The rules engine: an immutable [`GameState`], its legal actions, and
//! `apply`, which returns the successor state or a [`RuleViolation`].
//!
//! A subgame runs draw → discard → call window, repeated. The call window
//! collects one response from every seat that has a call or ron available and
//! then resolves them: ron beats pon/kan beats chi, and between two rons the
//! seat closest counterclockwise from the discarder wins (head bump).

pub mod hand;
pub mod scoring;
pub mod view;

use serde::{Deserialize, Serialize};

use crate::error::RuleViolation;
use crate::tiles::{kind_counts, Deal, Meld, MeldType, Tile, TileFace, TileKind, Wall, NUM_KINDS};
use hand::{is_tenpai, is_winning_hand, shanten, waits};
use scoring::{has_yaku, payments, score_hand, HandValue, WinContext};
pub use view::{ranks_by_score, Discard, RiichiState, Snapshot, TableView};

pub const STARTING_SCORE: i32 = 25_000;
/// Snapshots kept per seat for the feature encoder.
pub const HISTORY_LEN: usize = 6;
/// East 1 .. South 4.
pub const LAST_KYOKU: u8 = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Draw,
    Discard(Tile),
    /// Declare riichi and discard the tile.
    Riichi(Tile),
    Pon([Tile; 2]),
    /// The two hand tiles that join the called tile.
    Chi([Tile; 2]),
    OpenKan([Tile; 3]),
    ClosedKan(TileKind),
    AddedKan(Tile),
    Tsumo,
    Ron,
    Pass,
}

impl Action {
    fn faces(&self) -> Vec<TileFace> {
        let mut f: Vec<TileFace> = match self {
            Action::Discard(t) | Action::Riichi(t) | Action::AddedKan(t) => vec![t.face()],
            Action::Pon(ts) | Action::Chi(ts) => ts.iter().map(|t| t.face()).collect(),
            Action::OpenKan(ts) => ts.iter().map(|t| t.face()).collect(),
            _ => Vec::new(),
        };
        f.sort_by_key(|x| (x.kind, x.aka));
        f
    }

    /// Physical tiles the actor gives up from the hand.
    pub fn hand_tiles(&self) -> Vec<Tile> {
        match self {
            Action::Discard(t) | Action::Riichi(t) | Action::AddedKan(t) => vec![*t],
            Action::Pon(ts) | Action::Chi(ts) => ts.to_vec(),
            Action::OpenKan(ts) => ts.to_vec(),
            _ => Vec::new(),
        }
    }

    /// Same decision up to which physical copy of a face is used.
    pub fn equivalent(&self, other: &Action) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
            && match (self, other) {
                (Action::ClosedKan(a), Action::ClosedKan(b)) => a == b,
                _ => self.faces() == other.faces(),
            }
    }
}

/// Where the called tile sits in a chi run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiPosition {
    Low,
    Mid,
    High,
}

pub fn chi_position(called: TileKind, tiles: [Tile; 2]) -> ChiPosition {
    let c = called.index();
    let lo = tiles[0].kind().index().min(tiles[1].kind().index());
    if c < lo {
        ChiPosition::Low
    } else if c > lo + 1 {
        ChiPosition::High
    } else {
        ChiPosition::Mid
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AwaitingDraw { replacement: bool },
    AwaitingDiscard,
    AwaitingCalls,
    SubgameOver,
    GameOver,
}

/// How wins and draws are valued. `Recorded` is for replaying logs from
/// rule sets with yaku we do not score: wins are checked for shape and
/// furiten only, and the logged point deltas are used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringMode {
    Rules,
    Recorded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordedResult {
    pub value: Option<HandValue>,
    pub deltas: [i32; 4],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WinResult {
    pub winner: u8,
    /// Discarder for ron; `None` for tsumo.
    pub from: Option<u8>,
    pub winning_tile: Tile,
    pub value: Option<HandValue>,
    pub ura_indicators: Vec<Tile>,
    pub deltas: [i32; 4],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubgameOutcome {
    Win(WinResult),
    ExhaustiveDraw { tenpai: [bool; 4], deltas: [i32; 4] },
    FourKanAbort,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgameSetup {
    /// 1-based: 1..=4 East, 5..=8 South, 9.. West.
    pub kyoku: u8,
    pub honba: u32,
    /// Riichi sticks on the table.
    pub pot: u32,
    pub dealer: u8,
    pub scores: [i32; 4],
}

impl SubgameSetup {
    pub fn first() -> SubgameSetup {
        SubgameSetup {
            kyoku: 1,
            honba: 0,
            pot: 0,
            dealer: 0,
            scores: [STARTING_SCORE; 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct PendingClaim {
    discarder: u8,
    tile: Tile,
    options: [Vec<Action>; 4],
    responses: [Option<Action>; 4],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameState {
    mode: ScoringMode,
    kyoku: u8,
    honba: u32,
    pot: u32,
    dealer: u8,
    scores: [i32; 4],
    wall: Wall,
    hands: [Vec<Tile>; 4],
    melds: [Vec<Meld>; 4],
    discards: [Vec<Discard>; 4],
    riichi: [RiichiState; 4],
    ippatsu: [bool; 4],
    temp_furiten: [bool; 4],
    riichi_furiten: [bool; 4],
    /// Kind the actor may not discard right after a call.
    kuikae: Option<TileKind>,
    drawn: Option<Tile>,
    kans: Vec<u8>,
    turn: u32,
    actor: u8,
    phase: Phase,
    pending: Option<PendingClaim>,
    history: [Vec<Snapshot>; 4],
    outcome: Option<SubgameOutcome>,
    recorded: Option<RecordedResult>,
}

fn rel(from: u8, to: u8) -> u8 {
    (to + 4 - from) % 4
}

fn remove_tile(hand: &mut Vec<Tile>, t: Tile) -> bool {
    match hand.iter().position(|&x| x == t) {
        Some(i) => {
            hand.remove(i);
            true
        }
        None => false,
    }
}

/// One representative physical tile per distinct face, in hand order, with
/// `prefer` chosen when its face appears.
fn distinct_faces(hand: &[Tile], prefer: Option<Tile>) -> Vec<Tile> {
    let mut out: Vec<Tile> = Vec::new();
    for &t in hand {
        if let Some(pos) = out.iter().position(|o| o.face() == t.face()) {
            if Some(t) == prefer {
                out[pos] = t;
            }
        } else {
            out.push(t);
        }
    }
    out.sort_by_key(|t| (t.kind(), t.is_aka()));
    out
}

/// Pairs (a, b) with a from `xs`, b from `ys`, distinct by face, a != b.
fn face_pairs(xs: &[Tile], ys: &[Tile], same_pool: bool) -> Vec<[Tile; 2]> {
    let mut out: Vec<[Tile; 2]> = Vec::new();
    for (i, &a) in xs.iter().enumerate() {
        for (j, &b) in ys.iter().enumerate() {
            if same_pool && j <= i {
                continue;
            }
            if a == b {
                continue;
            }
            let mut key = [a.face(), b.face()];
            key.sort_by_key(|f| (f.kind, f.aka));
            let dup = out.iter().any(|p| {
                let mut k2 = [p[0].face(), p[1].face()];
                k2.sort_by_key(|f| (f.kind, f.aka));
                k2 == key
            });
            if !dup {
                out.push([a, b]);
            }
        }
    }
    out
}

impl GameState {
    /// A fresh game at East 1 with 25000 each.
    pub fn new_game(deal: Deal) -> GameState {
        GameState::start(SubgameSetup::first(), deal, ScoringMode::Rules)
    }

    pub fn start(setup: SubgameSetup, deal: Deal, mode: ScoringMode) -> GameState {
        GameState {
            mode,
            kyoku: setup.kyoku,
            honba: setup.honba,
            pot: setup.pot,
            dealer: setup.dealer,
            scores: setup.scores,
            wall: deal.wall,
            hands: deal.hands,
            melds: Default::default(),
            discards: Default::default(),
            riichi: [RiichiState::None; 4],
            ippatsu: [false; 4],
            temp_furiten: [false; 4],
            riichi_furiten: [false; 4],
            kuikae: None,
            drawn: None,
            kans: Vec::new(),
            turn: 0,
            actor: setup.dealer,
            phase: Phase::AwaitingDraw { replacement: false },
            pending: None,
            history: Default::default(),
            outcome: None,
            recorded: None,
        }
    }

    // ---- accessors ----

    pub fn phase(&self) -> Phase {
        self.phase
    }
    pub fn actor(&self) -> u8 {
        self.actor
    }
    pub fn mode(&self) -> ScoringMode {
        self.mode
    }
    pub fn kyoku(&self) -> u8 {
        self.kyoku
    }
    pub fn honba(&self) -> u32 {
        self.honba
    }
    pub fn pot(&self) -> u32 {
        self.pot
    }
    pub fn dealer(&self) -> u8 {
        self.dealer
    }
    pub fn scores(&self) -> [i32; 4] {
        self.scores
    }
    pub fn wall(&self) -> &Wall {
        &self.wall
    }
    pub fn hand(&self, seat: u8) -> &[Tile] {
        &self.hands[seat as usize]
    }
    pub fn melds(&self, seat: u8) -> &[Meld] {
        &self.melds[seat as usize]
    }
    pub fn discards(&self, seat: u8) -> &[Discard] {
        &self.discards[seat as usize]
    }
    pub fn riichi(&self, seat: u8) -> RiichiState {
        self.riichi[seat as usize]
    }
    pub fn drawn(&self) -> Option<Tile> {
        self.drawn
    }
    pub fn turn(&self) -> u32 {
        self.turn
    }
    pub fn kan_count(&self) -> usize {
        self.kans.len()
    }
    pub fn history(&self, seat: u8) -> &[Snapshot] {
        &self.history[seat as usize]
    }
    pub fn outcome(&self) -> Option<&SubgameOutcome> {
        self.outcome.as_ref()
    }
    pub fn setup(&self) -> SubgameSetup {
        SubgameSetup {
            kyoku: self.kyoku,
            honba: self.honba,
            pot: self.pot,
            dealer: self.dealer,
            scores: self.scores,
        }
    }
    pub fn round_wind(&self) -> TileKind {
        TileKind::wind_for_offset(((self.kyoku.max(1) - 1) / 4) as usize % 4)
    }
    pub fn seat_wind(&self, seat: u8) -> TileKind {
        TileKind::wind_for_offset(rel(self.dealer, seat) as usize)
    }
    pub fn ranks(&self) -> [u8; 4] {
        ranks_by_score(&self.scores)
    }
    pub fn is_closed(&self, seat: u8) -> bool {
        self.melds[seat as usize].iter().all(|m| !m.is_open())
    }
    pub fn is_over(&self) -> bool {
        matches!(self.phase, Phase::SubgameOver | Phase::GameOver)
    }

    /// The discard currently open to calls.
    pub fn pending_discard(&self) -> Option<(u8, Tile)> {
        self.pending.as_ref().map(|p| (p.discarder, p.tile))
    }

    /// Seats whose action the engine is waiting for.
    pub fn awaiting(&self) -> Vec<u8> {
        match self.phase {
            Phase::AwaitingDraw { .. } | Phase::AwaitingDiscard => vec![self.actor],
            Phase::AwaitingCalls => {
                let p = self.pending.as_ref().expect("call window has a discard");
                (0..4u8)
                    .filter(|&s| !p.options[s as usize].is_empty() && p.responses[s as usize].is_none())
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    /// Furiten from own discards, a passed ron, or a passed ron under riichi.
    pub fn is_furiten(&self, seat: u8) -> bool {
        let s = seat as usize;
        if self.temp_furiten[s] || self.riichi_furiten[s] {
            return true;
        }
        let w = waits(&self.hands[s], &self.melds[s]);
        self.discards[s].iter().any(|d| w.contains(&d.tile.kind()))
    }

    /// Provide logged deltas (and optionally the logged hand value) for the
    /// next win or exhaustive draw. Only consulted in `Recorded` mode.
    pub fn set_recorded_result(&mut self, result: RecordedResult) {
        self.recorded = Some(result);
    }

    // ---- legality ----

    pub fn legal_actions(&self, seat: u8) -> Vec<Action> {
        match self.phase {
            Phase::AwaitingDraw { .. } if seat == self.actor => vec![Action::Draw],
            Phase::AwaitingDiscard if seat == self.actor => self.turn_actions(seat),
            Phase::AwaitingCalls => {
                let p = self.pending.as_ref().expect("call window has a discard");
                let s = seat as usize;
                if p.responses[s].is_some() || p.options[s].is_empty() {
                    return Vec::new();
                }
                let mut v = p.options[s].clone();
                v.push(Action::Pass);
                v
            }
            _ => Vec::new(),
        }
    }

    fn win_context<'a>(&'a self, seat: u8, closed: &'a [Tile], tile: Tile, tsumo: bool) -> WinContext<'a> {
        let s = seat as usize;
        let riichi = self.riichi[s].is_declared();
        WinContext {
            closed,
            melds: &self.melds[s],
            winning_tile: tile,
            by_tsumo: tsumo,
            riichi,
            ippatsu: riichi && self.ippatsu[s],
            round_wind: self.round_wind(),
            seat_wind: self.seat_wind(seat),
            dora_indicators: self.wall.indicators(),
            ura_indicators: if riichi { self.wall.ura_indicators() } else { &[] },
        }
    }

    fn can_win(&self, seat: u8, closed: &[Tile], tile: Tile, tsumo: bool) -> bool {
        let s = seat as usize;
        if !is_winning_hand(closed, &self.melds[s], tile).unwrap_or(false) {
            return false;
        }
        self.mode == ScoringMode::Recorded || has_yaku(&self.win_context(seat, closed, tile, tsumo))
    }

    fn turn_actions(&self, seat: u8) -> Vec<Action> {
        let s = seat as usize;
        let hand = &self.hands[s];
        let melds = &self.melds[s];
        let mut out = Vec::new();
        let in_riichi = self.riichi[s].is_declared();

        if let Some(d) = self.drawn {
            let mut closed = hand.clone();
            remove_tile(&mut closed, d);
            if self.can_win(seat, &closed, d, true) {
                out.push(Action::Tsumo);
            }
            if self.wall.live_remaining() >= 1 && self.kans.len() < 4 {
                let counts = kind_counts(hand);
                for k in 0..NUM_KINDS {
                    if counts[k] != 4 {
                        continue;
                    }
                    let kind = TileKind::from_index(k);
                    if in_riichi && !self.riichi_kan_ok(seat, kind) {
                        continue;
                    }
                    out.push(Action::ClosedKan(kind));
                }
                if !in_riichi {
                    for m in melds.iter().filter(|m| m.meld_type == MeldType::Pon) {
                        if let Some(&t) = hand.iter().find(|t| t.kind() == m.kind()) {
                            out.push(Action::AddedKan(t));
                        }
                    }
                }
            }
        }

        if in_riichi {
            if let Some(d) = self.drawn {
                out.push(Action::Discard(d));
            }
            return out;
        }

        for t in distinct_faces(hand, self.drawn) {
            if Some(t.kind()) != self.kuikae {
                out.push(Action::Discard(t));
            }
        }

        let can_declare = self.is_closed(seat)
            && self.scores[s] >= 1000
            && self.wall.live_remaining() >= 4
            && self.drawn.is_some()
            && shanten(hand, melds) == Ok(0);
        if can_declare {
            for t in distinct_faces(hand, self.drawn) {
                let mut rest = hand.clone();
                remove_tile(&mut rest, t);
                if is_tenpai(&rest, melds) {
                    out.push(Action::Riichi(t));
                }
            }
        }
        out
    }

    /// Under riichi a closed kan on the drawn tile is allowed only when it
    /// leaves the waits unchanged.
    fn riichi_kan_ok(&self, seat: u8, kind: TileKind) -> bool {
        let s = seat as usize;
        let Some(d) = self.drawn else { return false };
        if d.kind() != kind {
            return false;
        }
        let mut before = self.hands[s].clone();
        remove_tile(&mut before, d);
        let after: Vec<Tile> = self.hands[s].iter().copied().filter(|t| t.kind() != kind).collect();
        let kan_tiles: Vec<Tile> = self.hands[s].iter().copied().filter(|t| t.kind() == kind).collect();
        let mut melds = self.melds[s].clone();
        melds.push(Meld::new(MeldType::ClosedKan, kan_tiles, None, None).expect("four of a kind"));
        waits(&before, &self.melds[s]) == waits(&after, &melds)
    }

    fn claim_options(&self, discarder: u8, tile: Tile) -> [Vec<Action>; 4] {
        let mut opts: [Vec<Action>; 4] = Default::default();
        let kind = tile.kind();
        for s in 0..4u8 {
            if s == discarder {
                continue;
            }
            let su = s as usize;
            let hand = &self.hands[su];
            let v = &mut opts[su];
            if self.can_win(s, hand, tile, false) && !self.is_furiten(s) {
                v.push(Action::Ron);
            }
            if self.riichi[su].is_declared() || self.wall.live_remaining() == 0 {
                continue;
            }
            // Calls must leave something other than the called kind to discard.
            let leaves_discard = |used: &[Tile]| {
                let mut rest = hand.clone();
                for &u in used {
                    remove_tile(&mut rest, u);
                }
                rest.iter().any(|t| t.kind() != kind)
            };
            let same: Vec<Tile> = hand.iter().copied().filter(|t| t.kind() == kind).collect();
            for p in face_pairs(&same, &same, true) {
                if leaves_discard(&p) {
                    v.push(Action::Pon(p));
                }
            }
            if same.len() == 3 && self.kans.len() < 4 {
                v.push(Action::OpenKan([same[0], same[1], same[2]]));
            }
            if s == (discarder + 1) % 4 {
                if let Some(n) = kind.number() {
                    let base = kind.index() as i32 - n as i32 + 1;
                    for (a, b) in [(1, 2), (-1, 1), (-2, -1)] {
                        let (na, nb) = (n as i32 + a, n as i32 + b);
                        if !(1..=9).contains(&na) || !(1..=9).contains(&nb) {
                            continue;
                        }
                        let ka = (base + na - 1) as usize;
                        let kb = (base + nb - 1) as usize;
                        let xs: Vec<Tile> = hand.iter().copied().filter(|t| t.kind().index() == ka).collect();
                        let ys: Vec<Tile> = hand.iter().copied().filter(|t| t.kind().index() == kb).collect();
                        for p in face_pairs(&xs, &ys, false) {
                            if leaves_discard(&p) {
                                v.push(Action::Chi(p));
                            }
                        }
                    }
                }
            }
        }
        opts
    }

    fn holds(&self, seat: u8, tiles: &[Tile]) -> bool {
        let mut hand = self.hands[seat as usize].clone();
        tiles.iter().all(|&t| remove_tile(&mut hand, t))
    }

    fn check_legal(&self, seat: u8, action: &Action) -> Result<(), RuleViolation> {
        let legal = self.legal_actions(seat);
        if legal.is_empty() {
            return Err(RuleViolation::new(seat, format!("not this seat's turn to act ({:?})", self.phase)));
        }
        let ok = match action {
            Action::Discard(t) if self.riichi[seat as usize].is_declared() => Some(*t) == self.drawn,
            Action::Discard(_) | Action::Riichi(_) | Action::Pon(_) | Action::Chi(_) | Action::OpenKan(_) | Action::AddedKan(_) => {
                self.holds(seat, &action.hand_tiles()) && legal.iter().any(|a| a.equivalent(action))
            }
            _ => legal.contains(action),
        };
        if ok {
            Ok(())
        } else {
            Err(RuleViolation::new(seat, format!("{action:?} is not legal here")))
        }
    }

    // ---- transitions ----

    pub fn apply(&self, seat: u8, action: &Action) -> Result<GameState, RuleViolation> {
        let mut next = self.clone();
        next.apply_mut(seat, action)?;
        Ok(next)
    }

    /// In-place variant of [`GameState::apply`]. On error the state is unchanged.
    pub fn apply_mut(&mut self, seat: u8, action: &Action) -> Result<(), RuleViolation> {
        if seat > 3 {
            return Err(RuleViolation::new(seat, "no such seat"));
        }
        self.check_legal(seat, action)?;
        match (self.phase, action) {
            (Phase::AwaitingDraw { replacement }, Action::Draw) => {
                let t = if replacement {
                    self.wall.draw_replacement()
                } else {
                    self.wall.draw_live()
                }
                .ok_or_else(|| RuleViolation::new(seat, "wall is empty"))?;
                self.hands[seat as usize].push(t);
                self.drawn = Some(t);
                self.phase = Phase::AwaitingDiscard;
            }
            (Phase::AwaitingDiscard, Action::Discard(t)) => self.discard(seat, *t, false),
            (Phase::AwaitingDiscard, Action::Riichi(t)) => self.discard(seat, *t, true),
            (Phase::AwaitingDiscard, Action::Tsumo) => {
                let t = self.drawn.expect("tsumo needs a drawn tile");
                self.settle_win(seat, None, t)?;
            }
            (Phase::AwaitingDiscard, Action::ClosedKan(kind)) => {
                let s = seat as usize;
                let tiles: Vec<Tile> = self.hands[s].iter().copied().filter(|t| t.kind() == *kind).collect();
                self.hands[s].retain(|t| t.kind() != *kind);
                self.melds[s].push(Meld::new(MeldType::ClosedKan, tiles, None, None).expect("four of a kind"));
                self.after_kan(seat);
            }
            (Phase::AwaitingDiscard, Action::AddedKan(t)) => {
                let s = seat as usize;
                remove_tile(&mut self.hands[s], *t);
                let i = self.melds[s]
                    .iter()
                    .position(|m| m.meld_type == MeldType::Pon && m.kind() == t.kind())
                    .expect("legal added kan has a pon");
                let old = self.melds[s][i].clone();
                let mut tiles = old.tiles.clone();
                tiles.push(*t);
                self.melds[s][i] = Meld::new(MeldType::AddedKan, tiles, old.called_from, old.called_tile).expect("pon plus fourth");
                self.after_kan(seat);
            }
            (Phase::AwaitingCalls, a) => {
                let p = self.pending.as_mut().expect("call window has a discard");
                p.responses[seat as usize] = Some(a.clone());
                if self.awaiting().is_empty() {
                    self.resolve_claims()?;
                }
            }
            _ => return Err(RuleViolation::new(seat, format!("{action:?} is not legal here"))),
        }
        Ok(())
    }

    fn snapshot(&self, seat: u8) -> Snapshot {
        let mut snap = Snapshot::empty();
        snap.hand = kind_counts(&self.hands[seat as usize]);
        for r in 0..4u8 {
            let abs = ((seat + r) % 4) as usize;
            for d in self.discards[abs].iter().filter(|d| !d.called) {
                snap.discards[r as usize][d.tile.kind().index()] += 1;
            }
            for m in &self.melds[abs] {
                for t in &m.tiles {
                    snap.melds[r as usize][t.kind().index()] += 1;
                }
            }
            if r > 0 {
                snap.riichi_others[r as usize - 1] = self.riichi[abs].is_declared();
            }
        }
        snap.dora_indicators = kind_counts(self.wall.indicators());
        snap
    }

    fn discard(&mut self, seat: u8, tile: Tile, declare: bool) {
        let s = seat as usize;
        let snap = self.snapshot(seat);
        let h = &mut self.history[s];
        h.push(snap);
        if h.len() > HISTORY_LEN {
            h.remove(0);
        }
        remove_tile(&mut self.hands[s], tile);
        let tsumogiri = self.drawn == Some(tile);
        if declare {
            self.riichi[s] = RiichiState::Declared(self.turn);
            self.scores[s] -= 1000;
            self.pot += 1;
            self.ippatsu[s] = true;
        } else if self.riichi[s].is_declared() {
            self.ippatsu[s] = false;
        }
        self.discards[s].push(Discard {
            tile,
            riichi: declare,
            called: false,
            tsumogiri,
        });
        self.temp_furiten[s] = false;
        self.kuikae = None;
        self.drawn = None;
        self.turn += 1;

        let options = self.claim_options(seat, tile);
        if options.iter().any(|o| !o.is_empty()) {
            self.pending = Some(PendingClaim {
                discarder: seat,
                tile,
                options,
                responses: Default::default(),
            });
            self.phase = Phase::AwaitingCalls;
        } else {
            self.after_unclaimed(seat);
        }
    }

    fn after_unclaimed(&mut self, discarder: u8) {
        if self.wall.live_remaining() == 0 {
            self.exhaustive_draw();
        } else {
            self.actor = (discarder + 1) % 4;
            self.phase = Phase::AwaitingDraw { replacement: false };
        }
    }

    fn after_kan(&mut self, seat: u8) {
        self.kans.push(seat);
        self.wall.reveal_indicator();
        self.ippatsu = [false; 4];
        self.drawn = None;
        self.kuikae = None;
        self.actor = seat;
        if self.kans.len() == 4 && self.kans.iter().any(|&k| k != self.kans[0]) {
            self.outcome = Some(SubgameOutcome::FourKanAbort);
            self.phase = Phase::SubgameOver;
        } else {
            self.phase = Phase::AwaitingDraw { replacement: true };
        }
    }

    fn resolve_claims(&mut self) -> Result<(), RuleViolation> {
        let p = self.pending.take().expect("call window has a discard");
        let d = p.discarder;
        for s in 0..4 {
            if p.options[s].contains(&Action::Ron) && p.responses[s] != Some(Action::Ron) {
                if self.riichi[s].is_declared() {
                    self.riichi_furiten[s] = true;
                } else if self.mode == ScoringMode::Rules {
                    // Recorded logs may offer rons that had no yaku under the
                    // source rules, so a pass there proves nothing.
                    self.temp_furiten[s] = true;
                }
            }
        }
        let order = [(d + 1) % 4, (d + 2) % 4, (d + 3) % 4];
        if let Some(&w) = order.iter().find(|&&s| p.responses[s as usize] == Some(Action::Ron)) {
            let du = d as usize;
            if self.discards[du].last().is_some_and(|x| x.riichi) {
                // The riichi was not established: return the deposit.
                self.riichi[du] = RiichiState::None;
                self.scores[du] += 1000;
                self.pot -= 1;
            }
            return self.settle_win(w, Some(d), p.tile);
        }
        let call = order.iter().find_map(|&s| match &p.responses[s as usize] {
            Some(a @ (Action::Pon(_) | Action::OpenKan(_))) => Some((s, a.clone())),
            _ => None,
        });
        let call = call.or_else(|| match &p.responses[order[0] as usize] {
            Some(a @ Action::Chi(_)) => Some((order[0], a.clone())),
            _ => None,
        });
        let Some((s, action)) = call else {
            self.after_unclaimed(d);
            return Ok(());
        };
        let su = s as usize;
        let mut tiles = action.hand_tiles();
        for &t in &tiles {
            remove_tile(&mut self.hands[su], t);
        }
        tiles.push(p.tile);
        if let Some(last) = self.discards[d as usize].last_mut() {
            last.called = true;
        }
        let meld_type = match action {
            Action::Pon(_) => MeldType::Pon,
            Action::Chi(_) => MeldType::Chi,
            _ => MeldType::OpenKan,
        };
        let meld = Meld::new(meld_type, tiles, Some(rel(s, d)), Some(p.tile)).map_err(|e| RuleViolation::new(s, e.to_string()))?;
        self.melds[su].push(meld);
        self.ippatsu = [false; 4];
        self.actor = s;
        if meld_type == MeldType::OpenKan {
            self.after_kan(s);
        } else {
            self.drawn = None;
            self.kuikae = Some(p.tile.kind());
            self.phase = Phase::AwaitingDiscard;
        }
        Ok(())
    }

    fn settle_win(&mut self, winner: u8, from: Option<u8>, tile: Tile) -> Result<(), RuleViolation> {
        let w = winner as usize;
        let mut closed = self.hands[w].clone();
        if from.is_none() {
            remove_tile(&mut closed, tile);
        }
        let riichi = self.riichi[w].is_declared();
        let ura = if riichi { self.wall.ura_indicators().to_vec() } else { Vec::new() };
        let (value, deltas) = match self.mode {
            ScoringMode::Rules => {
                let ctx = self.win_context(winner, &closed, tile, from.is_none());
                let v = score_hand(&ctx).map_err(|e| RuleViolation::new(winner, e.to_string()))?;
                let deltas = self.win_deltas(winner, from, v.base_points());
                (Some(v), deltas)
            }
            ScoringMode::Recorded => {
                let r = self
                    .recorded
                    .take()
                    .ok_or_else(|| RuleViolation::new(winner, "recorded win without logged deltas"))?;
                (r.value, r.deltas)
            }
        };
        for s in 0..4 {
            self.scores[s] += deltas[s];
        }
        self.pot = 0;
        self.outcome = Some(SubgameOutcome::Win(WinResult {
            winner,
            from,
            winning_tile: tile,
            value,
            ura_indicators: ura,
            deltas,
        }));
        self.phase = Phase::SubgameOver;
        Ok(())
    }

    fn win_deltas(&self, winner: u8, from: Option<u8>, base: u32) -> [i32; 4] {
        let mut deltas = [0i32; 4];
        let w = winner as usize;
        let dealer_won = winner == self.dealer;
        match from {
            Some(d) => {
                let pay = payments(base, dealer_won, false).0 as i32 + 300 * self.honba as i32;
                deltas[d as usize] -= pay;
                deltas[w] += pay;
            }
            None => {
                let (from_dealer, from_other) = payments(base, dealer_won, true);
                for s in 0..4u8 {
                    if s == winner {
                        continue;
                    }
                    let p = if s == self.dealer { from_dealer } else { from_other } as i32 + 100 * self.honba as i32;
                    deltas[s as usize] -= p;
                    deltas[w] += p;
                }
            }
        }
        deltas[w] += 1000 * self.pot as i32;
        deltas
    }

    fn exhaustive_draw(&mut self) {
        let tenpai: [bool; 4] = std::array::from_fn(|s| is_tenpai(&self.hands[s], &self.melds[s]));
        let n = tenpai.iter().filter(|&&t| t).count() as i32;
        let mut deltas = [0i32; 4];
        if (1..=3).contains(&n) {
            for s in 0..4 {
                deltas[s] = if tenpai[s] { 3000 / n } else { -3000 / (4 - n) };
            }
        }
        if self.mode == ScoringMode::Recorded {
            if let Some(r) = self.recorded.take() {
                deltas = r.deltas;
            }
        }
        for s in 0..4 {
            self.scores[s] += deltas[s];
        }
        self.outcome = Some(SubgameOutcome::ExhaustiveDraw { tenpai, deltas });
        self.phase = Phase::SubgameOver;
    }

    /// Setup for the following subgame, or `None` when the game has ended.
    /// Dealer repeats on a dealer win, dealer tenpai at a draw, or an abort.
    /// The game ends after South 4 without repeat, when a dealer repeating at
    /// South 4 is in first place, or when anyone drops below zero.
    pub fn next_setup(&self) -> Option<SubgameSetup> {
        let outcome = self.outcome.as_ref()?;
        if self.phase == Phase::GameOver {
            return None;
        }
        let (renchan, drawn) = match outcome {
            SubgameOutcome::Win(w) => (w.winner == self.dealer, false),
            SubgameOutcome::ExhaustiveDraw { tenpai, .. } => (tenpai[self.dealer as usize], true),
            SubgameOutcome::FourKanAbort => (true, true),
        };
        if self.scores.iter().any(|&s| s < 0) {
            return None;
        }
        let honba = if renchan || drawn { self.honba + 1 } else { 0 };
        let (kyoku, dealer) = if renchan {
            (self.kyoku, self.dealer)
        } else {
            (self.kyoku + 1, (self.dealer + 1) % 4)
        };
        if kyoku > LAST_KYOKU || (renchan && self.kyoku >= LAST_KYOKU && self.ranks()[self.dealer as usize] == 1) {
            return None;
        }
        Some(SubgameSetup {
            kyoku,
            honba,
            pot: self.pot,
            dealer,
            scores: self.scores,
        })
    }

    /// Move on from a finished subgame: start the next one on `deal`, or end
    /// the game, handing any leftover riichi sticks to first place.
    pub fn next_subgame(&self, deal: Deal) -> GameState {
        assert_eq!(self.phase, Phase::SubgameOver, "subgame still running");
        match self.next_setup() {
            Some(setup) => GameState::start(setup, deal, self.mode),
            None => {
                let mut end = self.clone();
                let first = end.ranks().iter().position(|&r| r == 1).expect("someone is first");
                end.scores[first] += 1000 * end.pot as i32;
                end.pot = 0;
                end.phase = Phase::GameOver;
                end
            }
        }
    }

    // ---- views and checks ----

    pub fn view(&self, seat: u8) -> TableView {
        let s = seat as usize;
        let abs = |r: usize| (s + r) % 4;
        let ranks = self.ranks();
        TableView {
            viewer: seat,
            hand: self.hands[s].clone(),
            drawn: if self.actor == seat && self.phase == Phase::AwaitingDiscard { self.drawn } else { None },
            melds: std::array::from_fn(|r| self.melds[abs(r)].clone()),
            discards: std::array::from_fn(|r| self.discards[abs(r)].clone()),
            riichi: std::array::from_fn(|r| self.riichi[abs(r)].is_declared()),
            dora_indicators: self.wall.indicators().to_vec(),
            round_wind: self.round_wind(),
            own_wind: self.seat_wind(seat),
            kyoku: self.kyoku,
            honba: self.honba,
            riichi_pot: self.pot,
            scores: std::array::from_fn(|r| self.scores[abs(r)]),
            ranks: std::array::from_fn(|r| ranks[abs(r)]),
            live_remaining: self.wall.live_remaining(),
            history: self.history[s].clone(),
        }
    }

    /// Tile and point conservation. Empty when the state is consistent.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = [0u8; 136];
        let mut note = |t: Tile| seen[t.id() as usize] += 1;
        for s in 0..4 {
            self.hands[s].iter().copied().for_each(&mut note);
            self.melds[s].iter().flat_map(|m| m.tiles.iter().copied()).for_each(&mut note);
            self.discards[s].iter().filter(|d| !d.called).for_each(|d| note(d.tile));
        }
        self.wall.remaining_tiles().for_each(&mut note);
        for (id, &n) in seen.iter().enumerate() {
            if n != 1 {
                out.push(format!("tile id {id} present {n} times"));
            }
        }
        let total: i32 = self.scores.iter().sum::<i32>() + 1000 * self.pot as i32;
        if total != 4 * STARTING_SCORE {
            out.push(format!("points sum to {total}"));
        }
        for s in 0..4u8 {
            let n = self.hands[s as usize].len() + 3 * self.melds[s as usize].len();
            let holding = !self.is_over() && self.actor == s && self.phase == Phase::AwaitingDiscard;
            let want = if holding { 14 } else { 13 };
            if n != want && !(self.is_over() && n == 14) {
                out.push(format!("seat {s} holds {n} tiles"));
            }
        }
        out
    }
}
