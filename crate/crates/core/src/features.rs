//! The 86-plane encoding of a table view.
//!
//! Every plane is a 34×4 binary matrix: one row per tile kind, four columns.
//! Count planes fill a row from the left ("1100" = two tiles), flag planes
//! are all zeros or all ones, and row-fill planes set whole rows to 1111.
//!
//! | planes | meaning |
//! |---|---|
//! | 0 | own closed hand (14 tiles on own turn, 13 when answering a call) |
//! | 1 | aka fives in hand: the kind's row filled |
//! | 2–5 | discards still on the table: self, right, across, left |
//! | 6–9 | meld tiles, same seat order (kans count 4) |
//! | 10 | dora indicators |
//! | 11–13 | riichi of right, across, left |
//! | 14–17 | own rank 1..4, one-hot |
//! | 18–25 | kyoku East 1..South 4, one-hot (later rounds map to 25) |
//! | 26, 27 | round wind and own wind, row-fill |
//! | 28–40 | previous own discard decision: hand, discards ×4, melds ×4, dora, riichi ×3 |
//! | 41–85 | the five decisions before that: hand, discards ×4, melds ×4 each |
//!
//! Snapshots are taken before each own discard decision, most recent first;
//! missing ones are all zero. Aka fives outside the own hand are not encoded.

use crate::error::DumpError;
use crate::rules::hand::Counts;
use crate::rules::view::{Snapshot, TableView};
use crate::rules::HISTORY_LEN;
use crate::tiles::{kind_counts, NUM_KINDS};

pub const NUM_PLANES: usize = 86;
pub const ROWS: usize = NUM_KINDS;
pub const COLS: usize = 4;
pub const PLANE_CELLS: usize = ROWS * COLS;
/// Values per encoded sample when flattened.
pub const SAMPLE_CELLS: usize = NUM_PLANES * PLANE_CELLS;
pub const LAYOUT_TAG: &str = "mj86-v1";

pub const HAND: usize = 0;
pub const AKA: usize = 1;
pub const DISCARDS: usize = 2;
pub const MELDS: usize = 6;
pub const DORA: usize = 10;
pub const RIICHI: usize = 11;
pub const RANK: usize = 14;
pub const KYOKU: usize = 18;
pub const ROUND_WIND: usize = 26;
pub const OWN_WIND: usize = 27;
pub const PAST1: usize = 28;
pub const PAST_REST: usize = 41;
const PAST1_LEN: usize = 13;
const PAST_LEN: usize = 9;

/// Plane groups in order with their sizes.
pub const GROUPS: [(&str, usize); 12] = [
    ("hand", 1),
    ("aka", 1),
    ("discards", 4),
    ("melds", 4),
    ("dora", 1),
    ("riichi", 3),
    ("rank", 4),
    ("kyoku", 8),
    ("round_wind", 1),
    ("own_wind", 1),
    ("past1", PAST1_LEN),
    ("past2_6", PAST_LEN * 5),
];

/// 86 planes; each row is a 4-bit mask, column `c` at bit `c`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PlaneStack {
    rows: Box<[[u8; ROWS]; NUM_PLANES]>,
}

impl std::fmt::Debug for PlaneStack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PlaneStack({} ones)", self.ones())
    }
}

impl Default for PlaneStack {
    fn default() -> Self {
        PlaneStack::zeros()
    }
}

fn count_mask(n: u8) -> u8 {
    (1u8 << n.min(4)) - 1
}

impl PlaneStack {
    pub fn zeros() -> PlaneStack {
        PlaneStack {
            rows: Box::new([[0; ROWS]; NUM_PLANES]),
        }
    }

    pub fn get(&self, plane: usize, row: usize, col: usize) -> bool {
        self.rows[plane][row] >> col & 1 == 1
    }

    pub fn set(&mut self, plane: usize, row: usize, col: usize, on: bool) {
        let bit = 1 << col;
        if on {
            self.rows[plane][row] |= bit;
        } else {
            self.rows[plane][row] &= !bit;
        }
    }

    /// Row mask of a plane, column 0 in bit 0.
    pub fn row(&self, plane: usize, row: usize) -> u8 {
        self.rows[plane][row]
    }

    pub fn set_row(&mut self, plane: usize, row: usize, mask: u8) {
        self.rows[plane][row] = mask & 0xf;
    }

    /// Number of ones in a row.
    pub fn row_count(&self, plane: usize, row: usize) -> u8 {
        self.rows[plane][row].count_ones() as u8
    }

    pub fn plane_ones(&self, plane: usize) -> usize {
        self.rows[plane].iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> usize {
        (0..NUM_PLANES).map(|p| self.plane_ones(p)).sum()
    }

    fn fill_counts(&mut self, plane: usize, counts: &Counts) {
        for (k, &n) in counts.iter().enumerate() {
            self.rows[plane][k] = count_mask(n);
        }
    }

    fn fill_all(&mut self, plane: usize) {
        self.rows[plane] = [0xf; ROWS];
    }

    /// Row as a string of '1'/'0', column 0 first.
    pub fn row_string(&self, plane: usize, row: usize) -> String {
        (0..COLS).map(|c| if self.get(plane, row, c) { '1' } else { '0' }).collect()
    }

    /// Flatten as `[plane][row][col]` into `out`, which must hold
    /// `SAMPLE_CELLS` values.
    pub fn write_f32(&self, out: &mut [f32]) {
        assert_eq!(out.len(), SAMPLE_CELLS);
        for p in 0..NUM_PLANES {
            for k in 0..ROWS {
                let m = self.rows[p][k];
                let base = (p * ROWS + k) * COLS;
                for c in 0..COLS {
                    out[base + c] = (m >> c & 1) as f32;
                }
            }
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        let mut v = vec![0.0; SAMPLE_CELLS];
        self.write_f32(&mut v);
        v
    }
}

fn encode_snapshot(stack: &mut PlaneStack, base: usize, snap: &Snapshot, with_extras: bool) {
    stack.fill_counts(base, &snap.hand);
    for r in 0..4 {
        stack.fill_counts(base + 1 + r, &snap.discards[r]);
        stack.fill_counts(base + 5 + r, &snap.melds[r]);
    }
    if with_extras {
        stack.fill_counts(base + 9, &snap.dora_indicators);
        for (i, &on) in snap.riichi_others.iter().enumerate() {
            if on {
                stack.fill_all(base + 10 + i);
            }
        }
    }
}

/// Encode a view. Pure: equal views give equal stacks.
pub fn encode(view: &TableView) -> PlaneStack {
    let mut s = PlaneStack::zeros();
    s.fill_counts(HAND, &kind_counts(&view.hand));
    for t in view.hand.iter().filter(|t| t.is_aka()) {
        s.rows[AKA][t.kind().index()] = 0xf;
    }
    for r in 0..4 {
        let mut d = [0u8; NUM_KINDS];
        for x in view.discards[r].iter().filter(|x| !x.called) {
            d[x.tile.kind().index()] += 1;
        }
        s.fill_counts(DISCARDS + r, &d);
        let m = kind_counts(view.melds[r].iter().flat_map(|m| m.tiles.iter()));
        s.fill_counts(MELDS + r, &m);
    }
    s.fill_counts(DORA, &kind_counts(&view.dora_indicators));
    for r in 1..4 {
        if view.riichi[r] {
            s.fill_all(RIICHI + r - 1);
        }
    }
    let rank = view.ranks[0].clamp(1, 4) as usize;
    s.fill_all(RANK + rank - 1);
    let kyoku = view.kyoku.clamp(1, 8) as usize;
    s.fill_all(KYOKU + kyoku - 1);
    s.rows[ROUND_WIND][view.round_wind.index()] = 0xf;
    s.rows[OWN_WIND][view.own_wind.index()] = 0xf;
    for k in 1..=HISTORY_LEN {
        let Some(snap) = view.history.len().checked_sub(k).map(|i| &view.history[i]) else { break };
        if k == 1 {
            encode_snapshot(&mut s, PAST1, snap, true);
        } else {
            encode_snapshot(&mut s, PAST_REST + (k - 2) * PAST_LEN, snap, false);
        }
    }
    s
}

/// Planes whose rows are left-aligned counts.
fn is_count_plane(p: usize) -> bool {
    matches!(p, HAND | 2..=10 | 28..=37 | 41..=85)
}

fn is_flag_plane(p: usize) -> bool {
    matches!(p, 11..=25 | 38..=40)
}

fn is_row_fill_plane(p: usize) -> bool {
    matches!(p, AKA | ROUND_WIND | OWN_WIND)
}

/// Check every structural invariant of an encoded stack; empty when valid.
pub fn validate(s: &PlaneStack) -> Vec<String> {
    let mut out = Vec::new();
    for p in 0..NUM_PLANES {
        if is_count_plane(p) {
            for k in 0..ROWS {
                let m = s.rows[p][k];
                if m & (m + 1) != 0 {
                    out.push(format!("plane {p} row {k} {}: not left-aligned", s.row_string(p, k)));
                }
            }
        } else if is_flag_plane(p) {
            let n = s.plane_ones(p);
            if n != 0 && n != PLANE_CELLS {
                out.push(format!("plane {p}: flag plane neither all-zero nor all-one"));
            }
        } else if is_row_fill_plane(p) {
            for k in 0..ROWS {
                let m = s.rows[p][k];
                if m != 0 && m != 0xf {
                    out.push(format!("plane {p} row {k}: row-fill row is {}", s.row_string(p, k)));
                }
            }
        }
    }
    let full = |p: usize| s.plane_ones(p) == PLANE_CELLS;
    if (RANK..RANK + 4).filter(|&p| full(p)).count() != 1 {
        out.push("rank not one-hot".into());
    }
    if (KYOKU..KYOKU + 8).filter(|&p| full(p)).count() != 1 {
        out.push("kyoku not one-hot".into());
    }
    for (p, what) in [(ROUND_WIND, "round wind"), (OWN_WIND, "own wind")] {
        let filled: Vec<usize> = (0..ROWS).filter(|&k| s.rows[p][k] != 0).collect();
        if filled.len() != 1 || !(27..31).contains(&filled[0]) {
            out.push(format!("{what} plane does not mark exactly one wind"));
        }
    }
    for k in 0..ROWS {
        if s.rows[AKA][k] != 0 && (!matches!(k, 4 | 13 | 22) || s.rows[HAND][k] == 0) {
            out.push(format!("aka row {k} without a five in hand"));
        }
    }
    // At most four tiles of a kind are visible in any one picture.
    let mut bound = |label: &str, planes: &[usize]| {
        for k in 0..ROWS {
            let n: u32 = planes.iter().map(|&p| s.rows[p][k].count_ones()).sum();
            if n > 4 {
                out.push(format!("{label}: kind {k} seen {n} times"));
            }
        }
    };
    bound("present", &(0..=10).filter(|&p| p != AKA).collect::<Vec<_>>());
    bound("past 1", &(PAST1..PAST1 + 10).collect::<Vec<_>>());
    for i in 0..5 {
        let b = PAST_REST + i * PAST_LEN;
        bound(&format!("past {}", i + 2), &(b..b + PAST_LEN).collect::<Vec<_>>());
    }
    out
}

/// Tiles of kind `k` visible in the present picture (hand, discards, melds, dora).
pub fn visible_count(s: &PlaneStack, k: usize) -> u32 {
    (0..=10).filter(|&p| p != AKA).map(|p| s.rows[p][k].count_ones()).sum()
}

// Packed dump: 16-byte header then 1462 bytes per sample. Bit i of a sample
// is cell (plane, row, col) with i = (plane·34 + row)·4 + col, stored at
// byte i/8, bit i%8 (least significant first).

pub const DUMP_MAGIC: [u8; 4] = *b"MJ86";
pub const DUMP_VERSION: u16 = 1;
pub const DUMP_HEADER_LEN: usize = 16;
pub const PACKED_LEN: usize = SAMPLE_CELLS / 8;

/// Append one packed sample.
pub fn pack_into(s: &PlaneStack, out: &mut Vec<u8>) {
    // Each row is 4 bits and rows are contiguous, so two rows form a byte.
    let mut nibbles = s.rows.iter().flat_map(|p| p.iter().copied());
    for _ in 0..PACKED_LEN {
        let lo = nibbles.next().unwrap_or(0);
        let hi = nibbles.next().unwrap_or(0);
        out.push(lo | hi << 4);
    }
}

pub fn unpack(bytes: &[u8]) -> PlaneStack {
    assert_eq!(bytes.len(), PACKED_LEN);
    let mut s = PlaneStack::zeros();
    for (i, b) in bytes.iter().enumerate() {
        for (j, nib) in [b & 0xf, b >> 4].into_iter().enumerate() {
            let n = i * 2 + j;
            s.rows[n / ROWS][n % ROWS] = nib;
        }
    }
    s
}

pub fn dump_header(count: u64) -> [u8; DUMP_HEADER_LEN] {
    let mut h = [0u8; DUMP_HEADER_LEN];
    h[..4].copy_from_slice(&DUMP_MAGIC);
    h[4..6].copy_from_slice(&DUMP_VERSION.to_le_bytes());
    h[8..16].copy_from_slice(&count.to_le_bytes());
    h
}

pub fn write_dump(stacks: &[PlaneStack]) -> Vec<u8> {
    let mut out = Vec::with_capacity(DUMP_HEADER_LEN + stacks.len() * PACKED_LEN);
    out.extend_from_slice(&dump_header(stacks.len() as u64));
    for s in stacks {
        pack_into(s, &mut out);
    }
    out
}

/// Validate a dump header; returns the sample count.
pub fn check_dump(bytes: &[u8]) -> Result<usize, DumpError> {
    if bytes.len() < DUMP_HEADER_LEN {
        return Err(DumpError::Truncated(bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
    if magic != DUMP_MAGIC {
        return Err(DumpError::Magic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != DUMP_VERSION {
        return Err(DumpError::Version(version));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes"));
    let payload = bytes.len() - DUMP_HEADER_LEN;
    if count.checked_mul(PACKED_LEN as u64) != Some(payload as u64) {
        return Err(DumpError::Length { expected: count, got: payload });
    }
    Ok(count as usize)
}

pub fn read_dump(bytes: &[u8]) -> Result<Vec<PlaneStack>, DumpError> {
    let n = check_dump(bytes)?;
    Ok(bytes[DUMP_HEADER_LEN..].chunks_exact(PACKED_LEN).take(n).map(unpack).collect())
}
