//! The seat-side interface and the two baseline bots.

use houou_core::rules::hand::shanten;
use houou_core::rules::{Action, TableView};
use houou_core::tiles::Tile;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a seat is asked to decide. Built only from public information.
#[derive(Clone, Copy, Debug)]
pub struct DecisionPoint<'a> {
    pub view: &'a TableView,
    /// Never empty; never just `Draw` (draws are automatic).
    pub legal: &'a [Action],
    /// Discarding seat (absolute) and tile when this is a call window.
    pub claim: Option<(u8, Tile)>,
}

impl DecisionPoint<'_> {
    pub fn is_claim(&self) -> bool {
        self.claim.is_some()
    }
}

pub trait Player: Send {
    fn name(&self) -> String;
    /// Must return one of `dp.legal` (up to `Action::equivalent`).
    fn decide(&mut self, dp: &DecisionPoint<'_>) -> Action;
}

/// Uniformly random legal action.
pub struct RandomLegal {
    rng: ChaCha8Rng,
}

impl RandomLegal {
    pub fn new(seed: u64) -> RandomLegal {
        RandomLegal {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Player for RandomLegal {
    fn name(&self) -> String {
        "random-legal".into()
    }

    fn decide(&mut self, dp: &DecisionPoint<'_>) -> Action {
        dp.legal.choose(&mut self.rng).expect("non-empty legal set").clone()
    }
}

/// Baseline: wins whenever it can, declares riichi when it can, never calls,
/// and otherwise discards a tile leaving the lowest shanten. Ties go to the
/// least connected tile (see [`connectivity`]), then to honors and
/// terminals, then at random.
pub struct GreedyShanten {
    rng: ChaCha8Rng,
    call_rate: f64,
}

impl GreedyShanten {
    pub fn new(seed: u64) -> GreedyShanten {
        GreedyShanten::with_calls(seed, 0.0)
    }

    /// Variant that takes an offered pon or chi with probability `rate`;
    /// used to generate corpora that contain calls.
    pub fn with_calls(seed: u64, rate: f64) -> GreedyShanten {
        GreedyShanten {
            rng: ChaCha8Rng::seed_from_u64(seed),
            call_rate: rate,
        }
    }
}

impl Player for GreedyShanten {
    fn name(&self) -> String {
        if self.call_rate > 0.0 {
            format!("greedy-shanten-calls-{}", self.call_rate)
        } else {
            "greedy-shanten".into()
        }
    }

    fn decide(&mut self, dp: &DecisionPoint<'_>) -> Action {
        for want in [Action::Tsumo, Action::Ron] {
            if dp.legal.contains(&want) {
                return want;
            }
        }
        if dp.is_claim() {
            let calls: Vec<&Action> = dp.legal.iter().filter(|a| matches!(a, Action::Pon(_) | Action::Chi(_))).collect();
            if !calls.is_empty() && self.rng.gen_bool(self.call_rate) {
                return (*calls.choose(&mut self.rng).expect("non-empty")).clone();
            }
            return Action::Pass;
        }
        let melds = &dp.view.melds[0];
        let score = |t: &Tile| {
            let mut h = dp.view.hand.clone();
            if let Some(i) = h.iter().position(|x| x == t) {
                h.remove(i);
            }
            shanten(&h, melds).unwrap_or(i32::MAX)
        };
        let key = |t: &Tile| (score(t), connectivity(*t, &dp.view.hand), !t.kind().is_terminal_or_honor());
        let mut riichi: Vec<((i32, u32, bool), &Action)> = Vec::new();
        let mut discards: Vec<((i32, u32, bool), &Action)> = Vec::new();
        for a in dp.legal {
            match a {
                Action::Riichi(t) => riichi.push((key(t), a)),
                Action::Discard(t) => discards.push((key(t), a)),
                _ => {}
            }
        }
        let pool = if riichi.is_empty() { discards } else { riichi };
        match pool.iter().map(|p| p.0).min() {
            Some(best) => {
                let top: Vec<&Action> = pool.iter().filter(|p| p.0 == best).map(|p| p.1).collect();
                (*top.choose(&mut self.rng).expect("non-empty")).clone()
            }
            None => dp.legal[0].clone(),
        }
    }
}

/// How much `t` works with the rest of the hand: 2 per other copy of its
/// kind, 2 per same-suit neighbour one rank away, 1 per neighbour two away.
pub fn connectivity(t: Tile, hand: &[Tile]) -> u32 {
    let k = t.kind();
    let mut c = 0;
    for u in hand {
        if *u == t {
            continue;
        }
        let j = u.kind();
        if j == k {
            c += 2;
        } else if let (Some(a), Some(b)) = (k.number(), j.number()) {
            if k.suit() == j.suit() {
                c += match a.abs_diff(b) {
                    1 => 2,
                    2 => 1,
                    _ => 0,
                };
            }
        }
    }
    c
}
