//! Yaku, fu and payments.
//!
//! Implemented yaku: riichi, ippatsu, menzen tsumo, pinfu, tanyao (open
//! allowed), yakuhai (dragons, round wind, seat wind), honitsu, chinitsu,
//! toitoi, chiitoitsu and kokushi. Fu is simplified: 20 base plus meld, pair
//! and wait bonuses rounded up to 10; pinfu is fixed at 30, chiitoitsu at 25.

use serde::{Deserialize, Serialize};

use super::hand::{decompositions, is_chiitoitsu, is_kokushi, Counts, Group};
use crate::error::ScoreError;
use crate::tiles::{dora_from_indicator, kind_counts, Meld, MeldType, Suit, Tile, TileKind};

/// Everything needed to value a complete hand.
#[derive(Clone, Debug)]
pub struct WinContext<'a> {
    /// Closed tiles, winning tile excluded.
    pub closed: &'a [Tile],
    pub melds: &'a [Meld],
    pub winning_tile: Tile,
    pub by_tsumo: bool,
    pub riichi: bool,
    pub ippatsu: bool,
    pub round_wind: TileKind,
    pub seat_wind: TileKind,
    pub dora_indicators: &'a [Tile],
    /// Only consulted for riichi winners.
    pub ura_indicators: &'a [Tile],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandValue {
    pub yaku: Vec<(String, u32)>,
    pub dora_han: u32,
    pub han: u32,
    pub fu: u32,
    pub yakuman: bool,
}

impl HandValue {
    pub fn base_points(&self) -> u32 {
        base_points(self.han, self.fu, self.yakuman)
    }
}

pub fn base_points(han: u32, fu: u32, yakuman: bool) -> u32 {
    if yakuman || han >= 13 {
        return 8000;
    }
    match han {
        11 | 12 => 6000,
        8..=10 => 4000,
        6 | 7 => 3000,
        5 => 2000,
        _ => (fu << (han + 2)).min(2000),
    }
}

pub fn round_up_100(x: u32) -> u32 {
    x.div_ceil(100) * 100
}

/// Payment owed by each loser, before honba and pot.
/// Returns `(from_dealer, from_non_dealer)` for tsumo, or the single ron payment
/// in both slots.
pub fn payments(base: u32, dealer_won: bool, by_tsumo: bool) -> (u32, u32) {
    match (dealer_won, by_tsumo) {
        (true, false) => {
            let p = round_up_100(base * 6);
            (p, p)
        }
        (false, false) => {
            let p = round_up_100(base * 4);
            (p, p)
        }
        (true, true) => {
            let p = round_up_100(base * 2);
            (p, p)
        }
        (false, true) => (round_up_100(base * 2), round_up_100(base)),
    }
}

fn count_dora(all: &[Tile], indicators: &[Tile]) -> u32 {
    indicators
        .iter()
        .map(|ind| {
            let dora = dora_from_indicator(ind.kind());
            all.iter().filter(|t| t.kind() == dora).count() as u32
        })
        .sum()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Wait {
    Ryanmen,
    Kanchan,
    Penchan,
    Shanpon,
    Tanki,
}

struct Reading {
    pair: TileKind,
    /// (group, concealed, is_kan)
    groups: Vec<(Group, bool, bool)>,
    wait: Wait,
}

fn suits_used(kinds: &[TileKind]) -> (Option<Suit>, bool, bool) {
    let mut suit = None;
    let mut multi = false;
    let mut honors = false;
    for k in kinds {
        match k.suit() {
            Some(s) => match suit {
                None => suit = Some(s),
                Some(x) if x != s => multi = true,
                _ => {}
            },
            None => honors = true,
        }
    }
    (suit, multi, honors)
}

fn flush_yaku(all_kinds: &[TileKind], closed_hand: bool, yaku: &mut Vec<(String, u32)>) {
    let (suit, multi, honors) = suits_used(all_kinds);
    if suit.is_some() && !multi {
        if honors {
            yaku.push(("honitsu".into(), if closed_hand { 3 } else { 2 }));
        } else {
            yaku.push(("chinitsu".into(), if closed_hand { 6 } else { 5 }));
        }
    }
}

fn situational_yaku(ctx: &WinContext<'_>, closed_hand: bool, yaku: &mut Vec<(String, u32)>) {
    if ctx.riichi {
        yaku.push(("riichi".into(), 1));
        if ctx.ippatsu {
            yaku.push(("ippatsu".into(), 1));
        }
    }
    if closed_hand && ctx.by_tsumo {
        yaku.push(("menzen_tsumo".into(), 1));
    }
}

fn yakuhai_value(kind: TileKind, ctx: &WinContext<'_>) -> Vec<(String, u32)> {
    let mut out = Vec::new();
    match kind {
        TileKind::HAKU => out.push(("yakuhai_haku".into(), 1)),
        TileKind::HATSU => out.push(("yakuhai_hatsu".into(), 1)),
        TileKind::CHUN => out.push(("yakuhai_chun".into(), 1)),
        _ => {}
    }
    if kind == ctx.round_wind {
        out.push(("round_wind".into(), 1));
    }
    if kind == ctx.seat_wind {
        out.push(("seat_wind".into(), 1));
    }
    out
}

fn readings(ctx: &WinContext<'_>, counts: &Counts) -> Vec<Reading> {
    let win = ctx.winning_tile.kind();
    let mut out = Vec::new();
    let sets = 4 - ctx.melds.len();
    for d in decompositions(counts, sets) {
        // Every place the winning tile could have landed gives a reading.
        let mut placements: Vec<(Option<usize>, Wait)> = Vec::new();
        if d.pair == win {
            placements.push((None, Wait::Tanki));
        }
        for (gi, g) in d.groups.iter().enumerate() {
            match *g {
                Group::Triplet(k) if k == win => placements.push((Some(gi), Wait::Shanpon)),
                Group::Run(start) if g.contains(win) => {
                    let pos = win.index() - start.index();
                    let n = start.number().unwrap();
                    let wait = match pos {
                        1 => Wait::Kanchan,
                        0 if n == 7 => Wait::Penchan,
                        2 if n == 1 => Wait::Penchan,
                        _ => Wait::Ryanmen,
                    };
                    placements.push((Some(gi), wait));
                }
                _ => {}
            }
        }
        for (slot, wait) in placements {
            let mut groups: Vec<(Group, bool, bool)> = d.groups.iter().map(|g| (*g, true, false)).collect();
            // A triplet completed by ron counts as open.
            if let (Some(gi), Wait::Shanpon, false) = (slot, wait, ctx.by_tsumo) {
                groups[gi].1 = false;
            }
            for m in ctx.melds {
                let g = match m.meld_type {
                    MeldType::Chi => Group::Run(m.tiles[0].kind()),
                    _ => Group::Triplet(m.kind()),
                };
                groups.push((g, m.meld_type == MeldType::ClosedKan, m.meld_type.is_kan()));
            }
            out.push(Reading {
                pair: d.pair,
                groups,
                wait,
            });
        }
    }
    out
}

fn value_reading(ctx: &WinContext<'_>, r: &Reading, closed_hand: bool, all_kinds: &[TileKind]) -> (Vec<(String, u32)>, u32) {
    let mut yaku = Vec::new();
    situational_yaku(ctx, closed_hand, &mut yaku);
    let all_runs = r.groups.iter().all(|(g, _, _)| matches!(g, Group::Run(_)));
    let pair_yakuhai = !yakuhai_value(r.pair, ctx).is_empty();
    let pinfu = closed_hand && all_runs && !pair_yakuhai && r.wait == Wait::Ryanmen;
    if pinfu {
        yaku.push(("pinfu".into(), 1));
    }
    if all_kinds.iter().all(|k| !k.is_terminal_or_honor()) {
        yaku.push(("tanyao".into(), 1));
    }
    for (g, _, _) in &r.groups {
        if let Group::Triplet(k) = g {
            yaku.extend(yakuhai_value(*k, ctx));
        }
    }
    flush_yaku(all_kinds, closed_hand, &mut yaku);
    if r.groups.iter().all(|(g, _, _)| matches!(g, Group::Triplet(_))) {
        yaku.push(("toitoi".into(), 2));
    }

    let fu = if pinfu {
        30
    } else {
        let mut fu = 20;
        if closed_hand && !ctx.by_tsumo {
            fu += 10;
        }
        if ctx.by_tsumo {
            fu += 2;
        }
        for (g, concealed, kan) in &r.groups {
            if let Group::Triplet(k) = g {
                let mut v = 2;
                if *concealed {
                    v *= 2;
                }
                if k.is_terminal_or_honor() {
                    v *= 2;
                }
                if *kan {
                    v *= 4;
                }
                fu += v;
            }
        }
        fu += 2 * yakuhai_value(r.pair, ctx).len() as u32;
        if matches!(r.wait, Wait::Kanchan | Wait::Penchan | Wait::Tanki) {
            fu += 2;
        }
        let fu = fu.div_ceil(10) * 10;
        fu.max(30)
    };
    (yaku, fu)
}

/// Value a complete hand, choosing the reading worth the most points.
pub fn score_hand(ctx: &WinContext<'_>) -> Result<HandValue, ScoreError> {
    let mut all_closed: Vec<Tile> = ctx.closed.to_vec();
    all_closed.push(ctx.winning_tile);
    let counts = kind_counts(&all_closed);
    let closed_hand = ctx.melds.iter().all(|m| !m.is_open());

    let mut all_tiles = all_closed.clone();
    for m in ctx.melds {
        all_tiles.extend(m.tiles.iter().copied());
    }
    let all_kinds: Vec<TileKind> = all_tiles.iter().map(|t| t.kind()).collect();
    let mut dora_han = count_dora(&all_tiles, ctx.dora_indicators)
        + all_tiles.iter().filter(|t| t.is_aka()).count() as u32;
    if ctx.riichi {
        dora_han += count_dora(&all_tiles, ctx.ura_indicators);
    }

    let mut candidates: Vec<(Vec<(String, u32)>, u32, bool)> = Vec::new();
    if ctx.melds.is_empty() && is_kokushi(&counts) {
        candidates.push((vec![("kokushi".into(), 13)], 30, true));
    }
    if ctx.melds.is_empty() && is_chiitoitsu(&counts) {
        let mut yaku = Vec::new();
        situational_yaku(ctx, true, &mut yaku);
        yaku.push(("chiitoitsu".into(), 2));
        if all_kinds.iter().all(|k| !k.is_terminal_or_honor()) {
            yaku.push(("tanyao".into(), 1));
        }
        flush_yaku(&all_kinds, true, &mut yaku);
        candidates.push((yaku, 25, false));
    }
    for r in readings(ctx, &counts) {
        let (yaku, fu) = value_reading(ctx, &r, closed_hand, &all_kinds);
        candidates.push((yaku, fu, false));
    }
    if candidates.is_empty() {
        return Err(ScoreError::NotWinning);
    }

    let mut best: Option<HandValue> = None;
    for (yaku, fu, yakuman) in candidates {
        if yaku.is_empty() {
            continue;
        }
        let yaku_han: u32 = yaku.iter().map(|(_, h)| h).sum();
        let value = HandValue {
            han: yaku_han + if yakuman { 0 } else { dora_han },
            dora_han: if yakuman { 0 } else { dora_han },
            yaku,
            fu,
            yakuman,
        };
        let better = match &best {
            None => true,
            Some(b) => (value.base_points(), value.han, value.fu) > (b.base_points(), b.han, b.fu),
        };
        if better {
            best = Some(value);
        }
    }
    best.ok_or(ScoreError::NoYaku)
}

/// Whether the hand would have at least one yaku if completed this way.
pub fn has_yaku(ctx: &WinContext<'_>) -> bool {
    score_hand(ctx).is_ok()
}
