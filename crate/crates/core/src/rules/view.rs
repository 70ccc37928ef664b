//! The one-seat projection of a game: what a player at the table can see.

use serde::{Deserialize, Serialize};

use super::hand::Counts;
use crate::tiles::{Meld, Tile, TileKind, NUM_KINDS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Discard {
    pub tile: Tile,
    pub riichi: bool,
    /// Taken by another player's call; the tile now sits in that meld.
    pub called: bool,
    pub tsumogiri: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiichiState {
    None,
    /// Declared on the given global discard index.
    Declared(u32),
}

impl RiichiState {
    pub fn is_declared(self) -> bool {
        matches!(self, RiichiState::Declared(_))
    }
}

/// Count-level picture of the table at one of the viewer's past discard
/// decisions. Seat-indexed arrays are viewer-relative: self, right, across, left.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Snapshot {
    pub hand: Counts,
    pub discards: [Counts; 4],
    pub melds: [Counts; 4],
    pub dora_indicators: Counts,
    /// Riichi flags of right, across, left.
    pub riichi_others: [bool; 3],
}

impl Snapshot {
    pub fn empty() -> Snapshot {
        Snapshot {
            hand: [0; NUM_KINDS],
            discards: [[0; NUM_KINDS]; 4],
            melds: [[0; NUM_KINDS]; 4],
            dora_indicators: [0; NUM_KINDS],
            riichi_others: [false; 3],
        }
    }
}

/// Everything seat `viewer` may know. Contains no opponent hand or wall data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableView {
    pub viewer: u8,
    pub hand: Vec<Tile>,
    /// The tile just drawn, if the viewer is to discard after a draw.
    pub drawn: Option<Tile>,
    pub melds: [Vec<Meld>; 4],
    pub discards: [Vec<Discard>; 4],
    pub riichi: [bool; 4],
    pub dora_indicators: Vec<Tile>,
    pub round_wind: TileKind,
    pub own_wind: TileKind,
    pub kyoku: u8,
    pub honba: u32,
    pub riichi_pot: u32,
    pub scores: [i32; 4],
    pub ranks: [u8; 4],
    pub live_remaining: usize,
    /// Most recent last; at most six entries.
    pub history: Vec<Snapshot>,
}

impl TableView {
    /// Most recent discard on the table, if it is still unclaimed and belongs
    /// to the given relative seat.
    pub fn last_discard_of(&self, rel: usize) -> Option<Tile> {
        self.discards[rel].last().filter(|d| !d.called).map(|d| d.tile)
    }
}

/// Ranks by score; ties go to the lower absolute seat (the first dealer first).
pub fn ranks_by_score(scores: &[i32; 4]) -> [u8; 4] {
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by_key(|&s| (std::cmp::Reverse(scores[s]), s));
    let mut ranks = [0u8; 4];
    for (r, &s) in order.iter().enumerate() {
        ranks[s] = r as u8 + 1;
    }
    ranks
}
