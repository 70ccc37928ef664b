//! Shape analysis on per-kind counts: completeness, decompositions, shanten.
//!
//! Shanten is computed as a distance: the fewest tiles that must be acquired
//! to reach some complete hand, minus one. The regular form is solved with a
//! per-suit dynamic program over target shapes, so the four-copy limit is
//! respected exactly (a tanki wait on a fifth copy is not tenpai).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use crate::error::HandError;
use crate::tiles::{kind_counts, Meld, Tile, TileKind, NUM_KINDS};

pub type Counts = [u8; NUM_KINDS];

pub const ORPHANS: [usize; 13] = [0, 8, 9, 17, 18, 26, 27, 28, 29, 30, 31, 32, 33];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Triplet(TileKind),
    /// Run starting at the given kind.
    Run(TileKind),
}

impl Group {
    pub fn kinds(self) -> [TileKind; 3] {
        match self {
            Group::Triplet(k) => [k; 3],
            Group::Run(k) => {
                let i = k.index();
                [k, TileKind::from_index(i + 1), TileKind::from_index(i + 2)]
            }
        }
    }

    pub fn contains(self, kind: TileKind) -> bool {
        self.kinds().contains(&kind)
    }
}

/// One way to read a closed part as pair + groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub pair: TileKind,
    pub groups: Vec<Group>,
}

fn run_start_ok(i: usize) -> bool {
    i < 27 && i % 9 <= 6
}

fn sets_only(counts: &mut Counts, start: usize) -> bool {
    let Some(i) = (start..NUM_KINDS).find(|&i| counts[i] > 0) else {
        return true;
    };
    if counts[i] >= 3 {
        counts[i] -= 3;
        let ok = sets_only(counts, i);
        counts[i] += 3;
        if ok {
            return true;
        }
    }
    if run_start_ok(i) && counts[i + 1] > 0 && counts[i + 2] > 0 {
        counts[i] -= 1;
        counts[i + 1] -= 1;
        counts[i + 2] -= 1;
        let ok = sets_only(counts, i);
        counts[i] += 1;
        counts[i + 1] += 1;
        counts[i + 2] += 1;
        return ok;
    }
    false
}

/// Closed part completes as `sets` groups plus one pair.
pub fn is_regular_complete(counts: &Counts, sets: usize) -> bool {
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    if total != sets * 3 + 2 {
        return false;
    }
    let mut c = *counts;
    for i in 0..NUM_KINDS {
        if c[i] >= 2 {
            c[i] -= 2;
            let ok = sets_only(&mut c, 0);
            c[i] += 2;
            if ok {
                return true;
            }
        }
    }
    false
}

pub fn is_chiitoitsu(counts: &Counts) -> bool {
    counts.iter().filter(|&&c| c == 2).count() == 7
}

pub fn is_kokushi(counts: &Counts) -> bool {
    let total: u8 = counts.iter().sum();
    total == 14
        && ORPHANS.iter().all(|&i| counts[i] >= 1)
        && ORPHANS.iter().any(|&i| counts[i] == 2)
}

/// Complete hand given the closed part (winning tile included) and the
/// number of declared melds.
pub fn is_complete(counts: &Counts, meld_count: usize) -> bool {
    if meld_count > 4 {
        return false;
    }
    is_regular_complete(counts, 4 - meld_count)
        || (meld_count == 0 && (is_chiitoitsu(counts) || is_kokushi(counts)))
}

fn check_copies(counts: &Counts) -> Result<(), HandError> {
    match counts.iter().position(|&c| c > 4) {
        Some(i) => Err(HandError::TooManyCopies(TileKind::from_index(i).to_string())),
        None => Ok(()),
    }
}

/// Whether `closed` plus `winning_tile` completes the hand. `closed` excludes
/// the winning tile, so `closed.len() + 3 * melds.len()` must be 13.
pub fn is_winning_hand(closed: &[Tile], melds: &[Meld], winning_tile: Tile) -> Result<bool, HandError> {
    if closed.len() + 3 * melds.len() != 13 {
        return Err(HandError::Size {
            got: closed.len() + 3 * melds.len() + 1,
            expected: "14 with melds counted as 3".into(),
        });
    }
    let mut counts = kind_counts(closed);
    counts[winning_tile.kind().index()] += 1;
    check_copies(&counts)?;
    Ok(is_complete(&counts, melds.len()))
}

fn collect_groups(counts: &mut Counts, start: usize, acc: &mut Vec<Group>, out: &mut Vec<Vec<Group>>) {
    let Some(i) = (start..NUM_KINDS).find(|&i| counts[i] > 0) else {
        out.push(acc.clone());
        return;
    };
    let kind = TileKind::from_index(i);
    if counts[i] >= 3 {
        counts[i] -= 3;
        acc.push(Group::Triplet(kind));
        collect_groups(counts, i, acc, out);
        acc.pop();
        counts[i] += 3;
    }
    if run_start_ok(i) && counts[i + 1] > 0 && counts[i + 2] > 0 {
        for j in i..i + 3 {
            counts[j] -= 1;
        }
        acc.push(Group::Run(kind));
        collect_groups(counts, i, acc, out);
        acc.pop();
        for j in i..i + 3 {
            counts[j] += 1;
        }
    }
}

/// Every pair + groups reading of a complete regular closed part.
pub fn decompositions(counts: &Counts, sets: usize) -> Vec<Decomposition> {
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    let mut out = Vec::new();
    if total != sets * 3 + 2 {
        return out;
    }
    let mut c = *counts;
    for i in 0..NUM_KINDS {
        if c[i] >= 2 {
            c[i] -= 2;
            let mut found = Vec::new();
            collect_groups(&mut c, 0, &mut Vec::new(), &mut found);
            c[i] += 2;
            out.extend(found.into_iter().map(|groups| Decomposition {
                pair: TileKind::from_index(i),
                groups,
            }));
        }
    }
    out
}

// -- shanten -----------------------------------------------------------------

const INF: u8 = 99;

/// Minimum tiles to acquire so that a component holds exactly `m` groups and
/// `p` pairs, indexed `[m][p]`.
type Table = [[u8; 2]; 5];

fn suit_table(counts: &[u8], caps: &[u8]) -> Table {
    // state: (runs started at i-1, runs started at i-2, groups, pairs)
    let idx = |r1: usize, r2: usize, m: usize, p: usize| ((r1 * 5 + r2) * 5 + m) * 2 + p;
    let mut cur = [INF; 250];
    cur[idx(0, 0, 0, 0)] = 0;
    for i in 0..9 {
        let mut next = [INF; 250];
        for r1 in 0..5 {
            for r2 in 0..5 - r1 {
                for m in 0..5 {
                    for p in 0..2 {
                        let cost = cur[idx(r1, r2, m, p)];
                        if cost == INF {
                            continue;
                        }
                        let max_new_runs = if i <= 6 { 4 } else { 0 };
                        for t in 0..2 {
                            for q in 0..2 - p {
                                for r in 0..=max_new_runs {
                                    let m2 = m + t + r;
                                    if m2 > 4 {
                                        break;
                                    }
                                    let need = 3 * t + 2 * q + r + r1 + r2;
                                    if need > caps[i] as usize {
                                        break;
                                    }
                                    let miss = need.saturating_sub(counts[i] as usize) as u8;
                                    let slot = &mut next[idx(r, r1, m2, p + q)];
                                    *slot = (*slot).min(cost + miss);
                                }
                            }
                        }
                    }
                }
            }
        }
        cur = next;
    }
    let mut table = [[INF; 2]; 5];
    for (m, row) in table.iter_mut().enumerate() {
        for (p, v) in row.iter_mut().enumerate() {
            *v = cur[idx(0, 0, m, p)];
        }
    }
    table
}

fn honor_table(counts: &[u8], caps: &[u8]) -> Table {
    let mut table = [[INF; 2]; 5];
    table[0][0] = 0;
    for i in 0..7 {
        let mut next = [[INF; 2]; 5];
        let options = [(0usize, 0usize, 0u8), (1, 0, 3), (0, 1, 2)];
        for m in 0..5 {
            for p in 0..2 {
                if table[m][p] == INF {
                    continue;
                }
                for &(dm, dp, need) in &options {
                    if m + dm > 4 || p + dp > 1 || need > caps[i] {
                        continue;
                    }
                    let miss = need.saturating_sub(counts[i]);
                    let v = &mut next[m + dm][p + dp];
                    *v = (*v).min(table[m][p] + miss);
                }
            }
        }
        table = next;
    }
    table
}

fn combine(a: &Table, b: &Table) -> Table {
    let mut out = [[INF; 2]; 5];
    for m1 in 0..5 {
        for p1 in 0..2 {
            if a[m1][p1] == INF {
                continue;
            }
            for m2 in 0..5 - m1 {
                for p2 in 0..2 - p1 {
                    if b[m2][p2] == INF {
                        continue;
                    }
                    let v = &mut out[m1 + m2][p1 + p2];
                    *v = (*v).min(a[m1][p1] + b[m2][p2]);
                }
            }
        }
    }
    out
}

fn suit_cache() -> &'static [AtomicU64] {
    static CACHE: OnceLock<Box<[AtomicU64]>> = OnceLock::new();
    CACHE.get_or_init(|| (0..5usize.pow(9)).map(|_| AtomicU64::new(0)).collect())
}

fn cached_suit_table(counts: &[u8]) -> Table {
    let key = counts.iter().fold(0usize, |acc, &c| acc * 5 + c as usize);
    let slot = &suit_cache()[key];
    let packed = slot.load(Ordering::Relaxed);
    if packed != 0 {
        let mut t = [[0u8; 2]; 5];
        for (n, v) in t.iter_mut().flatten().enumerate() {
            let x = ((packed >> (n * 6)) & 0x3f) as u8;
            *v = if x == 0x3f { INF } else { x };
        }
        return t;
    }
    let t = suit_table(counts, &[4; 9]);
    let mut packed = 1u64 << 63;
    for (n, v) in t.iter().flatten().enumerate() {
        packed |= u64::from((*v).min(0x3f)) << (n * 6);
    }
    slot.store(packed, Ordering::Relaxed);
    t
}

fn regular_missing(counts: &Counts, caps: &Counts, sets: usize) -> u8 {
    let mut acc = honor_table(&counts[27..], &caps[27..]);
    for s in 0..3 {
        let range = s * 9..s * 9 + 9;
        let t = if caps[range.clone()].iter().all(|&c| c == 4) {
            cached_suit_table(&counts[range])
        } else {
            suit_table(&counts[range.clone()], &caps[range])
        };
        acc = combine(&acc, &t);
    }
    acc[sets][1]
}

fn chiitoitsu_missing(counts: &Counts) -> u8 {
    let mut costs: Vec<u8> = counts.iter().map(|&c| 2u8.saturating_sub(c)).collect();
    costs.sort_unstable();
    costs[..7].iter().sum()
}

fn kokushi_missing(counts: &Counts) -> u8 {
    let absent = ORPHANS.iter().filter(|&&i| counts[i] == 0).count() as u8;
    let has_pair = ORPHANS.iter().any(|&i| counts[i] >= 2);
    absent + u8::from(!has_pair)
}

/// Shanten of a closed part with `meld_count` declared melds. `caps` gives how
/// many copies of each kind remain available after the melds.
pub fn shanten_counts(counts: &Counts, caps: &Counts, meld_count: usize) -> i32 {
    let sets = 4 - meld_count;
    let mut best = regular_missing(counts, caps, sets);
    if meld_count == 0 {
        best = best.min(chiitoitsu_missing(counts)).min(kokushi_missing(counts));
    }
    i32::from(best) - 1
}

fn meld_caps(melds: &[Meld]) -> Counts {
    let mut caps = [4u8; NUM_KINDS];
    for m in melds {
        for t in &m.tiles {
            let c = &mut caps[t.kind().index()];
            *c = c.saturating_sub(1);
        }
    }
    caps
}

/// Shanten of a 13- or 14-tile hand (melds counted as three tiles each);
/// -1 means complete, 0 tenpai.
pub fn shanten(closed: &[Tile], melds: &[Meld]) -> Result<i32, HandError> {
    let total = closed.len() + 3 * melds.len();
    if !(total == 13 || total == 14) || melds.len() > 4 {
        return Err(HandError::Size {
            got: total,
            expected: "13 or 14".into(),
        });
    }
    let counts = kind_counts(closed);
    check_copies(&counts)?;
    Ok(shanten_counts(&counts, &meld_caps(melds), melds.len()))
}

/// Kinds that would complete a 13-tile hand. A kind the hand already uses all
/// four copies of is never a wait.
pub fn waits(closed: &[Tile], melds: &[Meld]) -> Vec<TileKind> {
    let mut counts = kind_counts(closed);
    let caps = meld_caps(melds);
    let mut out = Vec::new();
    for k in 0..NUM_KINDS {
        if counts[k] >= caps[k] {
            continue;
        }
        counts[k] += 1;
        if is_complete(&counts, melds.len()) {
            out.push(TileKind::from_index(k));
        }
        counts[k] -= 1;
    }
    out
}

/// Tenpai in the strict sense: shanten 0 on the 13-tile hand.
pub fn is_tenpai(closed: &[Tile], melds: &[Meld]) -> bool {
    closed.len() + 3 * melds.len() == 13 && !waits(closed, melds).is_empty()
}
