//! Tile vocabulary: kinds, physical tiles, faces, melds, the wall, and dora.
//!
//! Kind indices are frozen: 0..9 man, 9..18 pin, 18..27 sou, then
//! East, South, West, North, Haku, Hatsu, Chun. The feature encoder's row
//! order depends on this.
//!
//! A physical [`Tile`] is an id in `0..136` laid out as `kind * 4 + copy`,
//! the same numbering Tenhou logs use. Copy 0 of each five is the aka tile.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::TileParseError;

pub const NUM_KINDS: usize = 34;
pub const NUM_TILES: usize = 136;
pub const DEAD_WALL_SIZE: usize = 14;
pub const LIVE_WALL_SIZE: usize = 70;
pub const MAX_INDICATORS: usize = 5;

/// Dead-wall slots: dora indicators, uradora indicators, replacement tiles.
pub const URA_OFFSET: usize = 5;
pub const RINSHAN_OFFSET: usize = 10;

const NAMES: [&str; NUM_KINDS] = [
    "1m", "2m", "3m", "4m", "5m", "6m", "7m", "8m", "9m", //
    "1p", "2p", "3p", "4p", "5p", "6p", "7p", "8p", "9p", //
    "1s", "2s", "3s", "4s", "5s", "6s", "7s", "8s", "9s", //
    "E", "S", "W", "N", "Hk", "Ht", "Ch",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suit {
    Man,
    Pin,
    Sou,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileKind(u8);

impl TileKind {
    pub const EAST: TileKind = TileKind(27);
    pub const SOUTH: TileKind = TileKind(28);
    pub const WEST: TileKind = TileKind(29);
    pub const NORTH: TileKind = TileKind(30);
    pub const HAKU: TileKind = TileKind(31);
    pub const HATSU: TileKind = TileKind(32);
    pub const CHUN: TileKind = TileKind(33);

    pub const fn new(index: u8) -> Option<TileKind> {
        if (index as usize) < NUM_KINDS {
            Some(TileKind(index))
        } else {
            None
        }
    }

    /// Panics on out-of-range indices; use for indices known to be valid.
    pub fn from_index(index: usize) -> TileKind {
        assert!(index < NUM_KINDS, "tile kind index {index} out of range");
        TileKind(index as u8)
    }

    #[inline]
    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = TileKind> {
        (0..NUM_KINDS as u8).map(TileKind)
    }

    pub fn suit(self) -> Option<Suit> {
        match self.0 {
            0..=8 => Some(Suit::Man),
            9..=17 => Some(Suit::Pin),
            18..=26 => Some(Suit::Sou),
            _ => None,
        }
    }

    /// Face value 1..=9 for suited kinds.
    pub fn number(self) -> Option<u8> {
        (self.0 < 27).then_some(self.0 % 9 + 1)
    }

    pub fn is_honor(self) -> bool {
        self.0 >= 27
    }

    pub fn is_wind(self) -> bool {
        (27..31).contains(&self.0)
    }

    pub fn is_dragon(self) -> bool {
        self.0 >= 31
    }

    pub fn is_terminal(self) -> bool {
        matches!(self.number(), Some(1) | Some(9))
    }

    pub fn is_terminal_or_honor(self) -> bool {
        self.is_honor() || self.is_terminal()
    }

    pub fn is_five(self) -> bool {
        self.number() == Some(5)
    }

    /// Next kind within its loop: 1-9 per suit, E-S-W-N, Haku-Hatsu-Chun.
    pub fn dora_successor(self) -> TileKind {
        let i = self.0;
        let next = match i {
            0..=26 => i - i % 9 + (i % 9 + 1) % 9,
            27..=30 => 27 + (i - 27 + 1) % 4,
            _ => 31 + (i - 31 + 1) % 3,
        };
        TileKind(next)
    }

    /// Loop length of the dora cycle containing this kind.
    pub fn dora_loop_len(self) -> usize {
        match self.0 {
            0..=26 => 9,
            27..=30 => 4,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    /// Wind for a seat offset from the dealer (0 = East).
    pub fn wind_for_offset(offset: usize) -> TileKind {
        TileKind(27 + (offset % 4) as u8)
    }
}

/// Dora kind pointed to by a revealed indicator.
pub fn dora_from_indicator(indicator: TileKind) -> TileKind {
    indicator.dora_successor()
}

impl fmt::Debug for TileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for TileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TileKind {
    type Err = TileParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| TileKind(i as u8))
            .ok_or_else(|| TileParseError(s.to_string()))
    }
}

/// One of the 136 physical tiles.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tile(u8);

impl Tile {
    pub fn new(kind: TileKind, copy: u8) -> Tile {
        assert!(copy < 4, "tile copy {copy} out of range");
        Tile(kind.0 * 4 + copy)
    }

    pub const fn from_id(id: u8) -> Option<Tile> {
        if (id as usize) < NUM_TILES {
            Some(Tile(id))
        } else {
            None
        }
    }

    #[inline]
    pub const fn id(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn kind(self) -> TileKind {
        TileKind(self.0 / 4)
    }

    pub const fn copy(self) -> u8 {
        self.0 % 4
    }

    pub fn is_aka(self) -> bool {
        self.copy() == 0 && self.kind().is_five()
    }

    pub fn face(self) -> TileFace {
        TileFace {
            kind: self.kind(),
            aka: self.is_aka(),
        }
    }

    /// The full 136-tile set in id order.
    pub fn full_set() -> impl Iterator<Item = Tile> {
        (0..NUM_TILES as u8).map(Tile)
    }
}

impl fmt::Debug for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.face(), self.copy())
    }
}

/// What a tile looks like: its kind plus the aka mark. Plain copies of a kind
/// are indistinguishable, so logs and wire payloads carry faces, not ids.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileFace {
    pub kind: TileKind,
    pub aka: bool,
}

impl TileFace {
    pub fn plain(kind: TileKind) -> TileFace {
        TileFace { kind, aka: false }
    }

    pub fn matches(self, tile: Tile) -> bool {
        tile.face() == self
    }

    /// Physical copies that show this face.
    pub fn copies(self) -> impl Iterator<Item = Tile> {
        (0..4u8)
            .map(move |c| Tile::new(self.kind, c))
            .filter(move |t| t.face() == self)
    }
}

impl fmt::Display for TileFace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.aka {
            let suit = &self.kind.name()[1..];
            write!(f, "0{suit}")
        } else {
            f.write_str(self.kind.name())
        }
    }
}

impl fmt::Debug for TileFace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for TileFace {
    type Err = TileParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0m" | "0p" | "0s" => {
                let kind: TileKind = format!("5{}", &s[1..]).parse()?;
                Ok(TileFace { kind, aka: true })
            }
            _ => s.parse().map(TileFace::plain),
        }
    }
}

impl Serialize for TileFace {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TileFace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse whitespace-separated faces, e.g. `"1m 2m 0p E"`.
pub fn parse_faces(s: &str) -> Result<Vec<TileFace>, TileParseError> {
    s.split_whitespace().map(str::parse).collect()
}

/// Ascending by kind; within a kind plain copies come before the aka copy.
pub fn sort_hand(tiles: &[Tile]) -> Vec<Tile> {
    let mut out = tiles.to_vec();
    out.sort_by_key(|t| (t.kind(), t.is_aka()));
    out
}

/// Per-kind counts of a tile list.
pub fn kind_counts<'a>(tiles: impl IntoIterator<Item = &'a Tile>) -> [u8; NUM_KINDS] {
    let mut counts = [0u8; NUM_KINDS];
    for t in tiles {
        counts[t.kind().index()] += 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeldType {
    Pon,
    Chi,
    OpenKan,
    ClosedKan,
    AddedKan,
}

impl MeldType {
    pub fn is_kan(self) -> bool {
        matches!(self, MeldType::OpenKan | MeldType::ClosedKan | MeldType::AddedKan)
    }

    /// Open melds break a closed hand; a closed kan does not.
    pub fn is_open(self) -> bool {
        self != MeldType::ClosedKan
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Meld {
    pub meld_type: MeldType,
    pub tiles: Vec<Tile>,
    /// Relative seat the called tile came from: 1 = right, 2 = across, 3 = left.
    pub called_from: Option<u8>,
    pub called_tile: Option<Tile>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MeldError {
    #[error("{0:?} needs {1} tiles, got {2}")]
    TileCount(MeldType, usize, usize),
    #[error("chi tiles are not a same-suit run")]
    NotRun,
    #[error("pon/kan tiles do not share one kind")]
    MixedKinds,
    #[error("closed kan cannot have a caller")]
    ClosedKanCalled,
    #[error("called meld needs a source seat 1..=3 and a called tile among its tiles")]
    BadCall,
    #[error("duplicate physical tile in meld")]
    DuplicateTile,
}

impl Meld {
    pub fn new(
        meld_type: MeldType,
        mut tiles: Vec<Tile>,
        called_from: Option<u8>,
        called_tile: Option<Tile>,
    ) -> Result<Meld, MeldError> {
        let want = if meld_type.is_kan() { 4 } else { 3 };
        if tiles.len() != want {
            return Err(MeldError::TileCount(meld_type, want, tiles.len()));
        }
        tiles.sort();
        if tiles.windows(2).any(|w| w[0] == w[1]) {
            return Err(MeldError::DuplicateTile);
        }
        match meld_type {
            MeldType::Chi => {
                let k: Vec<TileKind> = tiles.iter().map(|t| t.kind()).collect();
                let same_suit = k[0].suit().is_some() && k.iter().all(|x| x.suit() == k[0].suit());
                if !same_suit || k[1].0 != k[0].0 + 1 || k[2].0 != k[1].0 + 1 {
                    return Err(MeldError::NotRun);
                }
            }
            _ => {
                if tiles.iter().any(|t| t.kind() != tiles[0].kind()) {
                    return Err(MeldError::MixedKinds);
                }
            }
        }
        match meld_type {
            MeldType::ClosedKan => {
                if called_from.is_some() || called_tile.is_some() {
                    return Err(MeldError::ClosedKanCalled);
                }
            }
            _ => {
                let ok = matches!(called_from, Some(1..=3))
                    && called_tile.is_some_and(|c| tiles.contains(&c))
                    && (meld_type != MeldType::Chi || called_from == Some(3));
                if !ok {
                    return Err(MeldError::BadCall);
                }
            }
        }
        Ok(Meld {
            meld_type,
            tiles,
            called_from,
            called_tile,
        })
    }

    pub fn kind(&self) -> TileKind {
        self.tiles[0].kind()
    }

    pub fn is_open(&self) -> bool {
        self.meld_type.is_open()
    }
}

/// Live wall, dead wall and the number of revealed dora indicators.
///
/// Dead-wall slots 0..5 hold dora indicators, 5..10 the uradora beneath them
/// and 10..14 the replacement tiles. A replacement draw removes slot 10 and the
/// last live tile moves to the back of the dead wall, so the dead wall stays
/// at 14 tiles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wall {
    live: Vec<Tile>,
    dead: Vec<Tile>,
    dora_indicator_count: u8,
    live_drawn: usize,
}

impl Wall {
    pub fn from_parts(live: Vec<Tile>, dead: Vec<Tile>) -> Wall {
        assert_eq!(dead.len(), DEAD_WALL_SIZE, "dead wall must hold 14 tiles");
        Wall {
            live,
            dead,
            dora_indicator_count: 1,
            live_drawn: 0,
        }
    }

    pub fn live_remaining(&self) -> usize {
        self.live.len() - self.live_drawn
    }

    /// Next tile the live wall would hand out.
    pub fn peek_live(&self) -> Option<Tile> {
        self.live.get(self.live_drawn).copied()
    }

    pub fn draw_live(&mut self) -> Option<Tile> {
        let t = self.peek_live()?;
        self.live_drawn += 1;
        Some(t)
    }

    /// Replacement draw after a kan. Returns `None` when no live tile is left
    /// to refill the dead wall.
    pub fn draw_replacement(&mut self) -> Option<Tile> {
        if self.live_remaining() == 0 {
            return None;
        }
        let t = self.dead.remove(RINSHAN_OFFSET);
        let refill = self.live.pop().expect("live wall non-empty");
        self.dead.push(refill);
        Some(t)
    }

    pub fn reveal_indicator(&mut self) -> Option<Tile> {
        if (self.dora_indicator_count as usize) >= MAX_INDICATORS {
            return None;
        }
        self.dora_indicator_count += 1;
        Some(self.dead[self.dora_indicator_count as usize - 1])
    }

    pub fn dora_indicator_count(&self) -> usize {
        self.dora_indicator_count as usize
    }

    pub fn indicators(&self) -> &[Tile] {
        &self.dead[..self.dora_indicator_count as usize]
    }

    pub fn ura_indicators(&self) -> &[Tile] {
        &self.dead[URA_OFFSET..URA_OFFSET + self.dora_indicator_count as usize]
    }

    /// Every tile still physically in the wall (undrawn live + dead).
    pub fn remaining_tiles(&self) -> impl Iterator<Item = Tile> + '_ {
        self.live[self.live_drawn..].iter().chain(self.dead.iter()).copied()
    }
}

/// A freshly shuffled subgame: the wall plus four 13-tile starting hands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deal {
    pub wall: Wall,
    /// Indexed by absolute seat.
    pub hands: [Vec<Tile>; 4],
}

impl Deal {
    /// The dealer's first draw.
    pub fn dealer_first_draw(&self) -> Tile {
        self.wall.peek_live().expect("fresh wall has live tiles")
    }
}

/// Shuffle the 136 tiles with a seeded ChaCha8 generator and split them into
/// hands, live wall and dead wall. The first dora indicator is revealed.
pub fn shuffle_and_build_walls(seed: u64) -> Deal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tiles: Vec<Tile> = Tile::full_set().collect();
    tiles.shuffle(&mut rng);
    let dead = tiles.split_off(NUM_TILES - DEAD_WALL_SIZE);
    let live = tiles.split_off(52);
    let mut hands: [Vec<Tile>; 4] = Default::default();
    for (i, t) in tiles.into_iter().enumerate() {
        // Three rounds of four tiles each, then one more each, as at the table.
        let seat = if i < 48 { (i / 4) % 4 } else { i - 48 };
        hands[seat].push(t);
    }
    Deal {
        wall: Wall::from_parts(live, dead),
        hands,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(s: &str) -> TileKind {
        s.parse().unwrap()
    }

    #[test]
    fn dora_exceptions_wrap_within_loop() {
        assert_eq!(dora_from_indicator(k("9m")), k("1m"));
        assert_eq!(dora_from_indicator(k("N")), k("E"));
        assert_eq!(dora_from_indicator(k("4s")), k("5s"));
        assert_eq!(dora_from_indicator(k("Ch")), k("Hk"));
        assert_eq!(dora_from_indicator(k("9p")), k("1p"));
    }

    #[test]
    fn dora_is_cyclic_for_every_kind() {
        for kind in TileKind::all() {
            let mut x = kind;
            for step in 1..=kind.dora_loop_len() {
                x = dora_from_indicator(x);
                assert_eq!(x == kind, step == kind.dora_loop_len(), "{kind} step {step}");
                assert_eq!(x.suit(), kind.suit());
            }
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in TileKind::all() {
            assert_eq!(kind.name().parse::<TileKind>().unwrap(), kind);
        }
        assert!("10m".parse::<TileKind>().is_err());
        assert!("".parse::<TileFace>().is_err());
    }

    #[test]
    fn aka_faces() {
        let aka: TileFace = "0p".parse().unwrap();
        assert_eq!(aka.kind, k("5p"));
        assert!(aka.aka);
        assert_eq!(aka.to_string(), "0p");
        assert_eq!(aka.copies().count(), 1);
        assert_eq!(TileFace::plain(k("5p")).copies().count(), 3);
        assert_eq!(Tile::full_set().filter(|t| t.is_aka()).count(), 3);
        assert_eq!(Tile::from_id(16).unwrap().face().to_string(), "0m");
        assert_eq!(Tile::from_id(52).unwrap().face().to_string(), "0p");
        assert_eq!(Tile::from_id(88).unwrap().face().to_string(), "0s");
    }

    #[test]
    fn sort_hand_orders_by_kind_with_aka_last() {
        let chun = Tile::new(TileKind::CHUN, 2);
        let m1 = Tile::new(k("1m"), 1);
        assert_eq!(sort_hand(&[chun, m1]), vec![m1, chun]);
        assert!(sort_hand(&[]).is_empty());

        let aka = Tile::new(k("5p"), 0);
        let p5 = Tile::new(k("5p"), 3);
        let p4 = Tile::new(k("4p"), 1);
        assert_eq!(sort_hand(&[aka, p5, p4]), vec![p4, p5, aka]);
    }

    #[test]
    fn walls_are_deterministic_permutations() {
        for seed in 0..1000u64 {
            let deal = shuffle_and_build_walls(seed);
            let mut all: Vec<Tile> = deal.hands.iter().flatten().copied().collect();
            assert!(deal.hands.iter().all(|h| h.len() == 13));
            assert_eq!(deal.wall.live_remaining(), LIVE_WALL_SIZE);
            all.extend(deal.wall.remaining_tiles());
            all.sort();
            assert_eq!(all, Tile::full_set().collect::<Vec<_>>(), "seed {seed}");
            assert_eq!(all.iter().filter(|t| t.is_aka()).count(), 3);
            assert_eq!(deal.wall.indicators().len(), 1);
        }
        assert_eq!(shuffle_and_build_walls(0), shuffle_and_build_walls(0));
        assert_ne!(shuffle_and_build_walls(0), shuffle_and_build_walls(1));
    }

    #[test]
    fn replacement_draw_keeps_dead_wall_size() {
        let mut wall = shuffle_and_build_walls(3).wall;
        let first_rinshan = wall.dead[RINSHAN_OFFSET];
        let last_live = *wall.live.last().unwrap();
        assert_eq!(wall.draw_replacement(), Some(first_rinshan));
        assert_eq!(wall.dead.len(), DEAD_WALL_SIZE);
        assert_eq!(*wall.dead.last().unwrap(), last_live);
        assert_eq!(wall.live_remaining(), LIVE_WALL_SIZE - 1);
        for _ in 0..4 {
            assert!(wall.reveal_indicator().is_some());
        }
        assert_eq!(wall.reveal_indicator(), None);
        assert_eq!(wall.ura_indicators().len(), 5);
    }

    #[test]
    fn meld_invariants() {
        let t = |s: &str, c| Tile::new(k(s), c);
        assert!(Meld::new(MeldType::Chi, vec![t("3p", 0), t("4p", 0), t("5p", 1)], Some(3), Some(t("3p", 0))).is_ok());
        assert_eq!(
            Meld::new(MeldType::Chi, vec![t("8p", 0), t("9p", 0), t("1s", 1)], Some(3), Some(t("8p", 0))),
            Err(MeldError::NotRun)
        );
        assert_eq!(
            Meld::new(MeldType::Chi, vec![t("3p", 0), t("4p", 0), t("5p", 1)], Some(1), Some(t("3p", 0))),
            Err(MeldError::BadCall)
        );
        assert_eq!(
            Meld::new(MeldType::Pon, vec![t("E", 0), t("E", 1)], Some(2), Some(t("E", 0))),
            Err(MeldError::TileCount(MeldType::Pon, 3, 2))
        );
        assert_eq!(
            Meld::new(MeldType::ClosedKan, vec![t("E", 0), t("E", 1), t("E", 2), t("E", 3)], Some(2), None),
            Err(MeldError::ClosedKanCalled)
        );
    }
}
