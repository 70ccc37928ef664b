//! The composed network player: rule-based wins and kans, the four heads
//! for everything else, with legality masking and telemetry.
//!
//! Own turn: tsumo → isolated closed kan → riichi head (then the discard
//! head restricted to tenpai-keeping tiles) → discard head.
//! Call window: ron → pon head → chi head → pass. Open and added kans are
//! never declared.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use houou_core::dataset::Task;
use houou_core::features::encode;
use houou_core::rules::{chi_position, Action, ChiPosition, TableView};
use houou_core::tiles::{Tile, TileKind, NUM_KINDS};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::player::{DecisionPoint, Player};
use crate::policies::{argmax, predict, PolicyHead, Preset};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadPaths {
    pub discard: PathBuf,
    pub pon: PathBuf,
    pub chi: PathBuf,
    pub riichi: PathBuf,
}

impl HeadPaths {
    /// `<dir>/<task>.honn` for each task.
    pub fn in_dir(dir: &Path) -> HeadPaths {
        let p = |t: Task| dir.join(format!("{}.honn", t.name()));
        HeadPaths {
            discard: p(Task::Discard),
            pon: p(Task::Pon),
            chi: p(Task::Chi),
            riichi: p(Task::Riichi),
        }
    }
}

/// The four heads, shared read-only between agents.
#[derive(Clone, Debug)]
pub struct PolicySet {
    pub discard: PolicyHead,
    pub pon: PolicyHead,
    pub chi: PolicyHead,
    pub riichi: PolicyHead,
}

impl PolicySet {
    pub fn untrained(preset: Preset, seed: u64) -> PolicySet {
        PolicySet {
            discard: PolicyHead::untrained(Task::Discard, preset, seed),
            pon: PolicyHead::untrained(Task::Pon, preset, seed + 1),
            chi: PolicyHead::untrained(Task::Chi, preset, seed + 2),
            riichi: PolicyHead::untrained(Task::Riichi, preset, seed + 3),
        }
    }

    /// Load and check that each file holds the head for its task.
    pub fn load(paths: &HeadPaths) -> Result<PolicySet, PolicyError> {
        let get = |p: &Path, t: Task| -> Result<PolicyHead, PolicyError> {
            let h = PolicyHead::load(p)?;
            if h.task != t {
                return Err(PolicyError::Task {
                    expected: t.name().into(),
                    found: h.task.name().into(),
                });
            }
            Ok(h)
        };
        Ok(PolicySet {
            discard: get(&paths.discard, Task::Discard)?,
            pon: get(&paths.pon, Task::Pon)?,
            chi: get(&paths.chi, Task::Chi)?,
            riichi: get(&paths.riichi, Task::Riichi)?,
        })
    }

    pub fn head(&self, task: Task) -> &PolicyHead {
        match task {
            Task::Discard => &self.discard,
            Task::Pon => &self.pon,
            Task::Chi => &self.chi,
            Task::Riichi => &self.riichi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Where the CLI and the service load heads from.
    #[serde(default)]
    pub models: Option<HeadPaths>,
    pub mask_discards: bool,
    /// Argmax when true; sample from the (masked) distribution otherwise.
    pub deterministic: bool,
    pub pon_threshold: f64,
    pub riichi_threshold: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            models: None,
            mask_discards: true,
            deterministic: true,
            pon_threshold: 0.5,
            riichi_threshold: 0.5,
            seed: 0,
        }
    }
}

/// Which rule of the priority chain produced the action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Tsumo,
    ClosedKan,
    /// Under riichi the drawn tile is discarded without consulting a head.
    RiichiDiscard,
    Riichi,
    Discard,
    Ron,
    Pon,
    Chi,
    Pass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub rule: Rule,
    /// Probability vectors of every head consulted, in order.
    pub consulted: Vec<(Task, Vec<f32>)>,
    /// A legality mask restricted the choice.
    pub masked: bool,
    /// Discard head argmax before masking, when the head was consulted.
    pub raw_argmax: Option<usize>,
    /// Raw argmax kind was in the hand.
    pub raw_in_hand: Option<bool>,
    /// Masking was off and the raw argmax was not playable, so the best
    /// legal kind was used instead.
    pub fallback: bool,
}

impl Decision {
    fn rule(action: Action, rule: Rule) -> Decision {
        Decision {
            action,
            rule,
            consulted: Vec::new(),
            masked: false,
            raw_argmax: None,
            raw_in_hand: None,
            fallback: false,
        }
    }
}

/// Running discard-head legality statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Telemetry {
    pub discard_decisions: u64,
    pub raw_in_hand: u64,
    pub fallbacks: u64,
}

impl Telemetry {
    /// Share of discard-head decisions whose unmasked argmax was in hand.
    pub fn legality_rate(&self) -> Option<f64> {
        (self.discard_decisions > 0).then(|| self.raw_in_hand as f64 / self.discard_decisions as f64)
    }

    pub fn merge(&mut self, o: &Telemetry) {
        self.discard_decisions += o.discard_decisions;
        self.raw_in_hand += o.raw_in_hand;
        self.fallbacks += o.fallbacks;
    }
}

/// No other tile of the suit within two ranks of `kind` in `hand`; honors
/// are always isolated.
pub fn is_isolated(kind: TileKind, hand: &[Tile]) -> bool {
    let (Some(suit), Some(n)) = (kind.suit(), kind.number()) else {
        return true;
    };
    !hand.iter().any(|t| {
        let k = t.kind();
        k != kind && k.suit() == Some(suit) && k.number().is_some_and(|m| m.abs_diff(n) <= 2)
    })
}

pub struct Agent {
    heads: Arc<PolicySet>,
    pub config: AgentConfig,
    rng: ChaCha8Rng,
    pub telemetry: Telemetry,
    pub last: Option<Decision>,
}

fn prefer_plain<'a>(options: impl Iterator<Item = &'a Action>) -> Option<&'a Action> {
    let opts: Vec<&Action> = options.collect();
    opts.iter()
        .find(|a| a.hand_tiles().iter().all(|t| !t.is_aka()))
        .or(opts.first())
        .copied()
}

impl Agent {
    pub fn new(heads: Arc<PolicySet>, config: AgentConfig) -> Agent {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Agent {
            heads,
            config,
            rng,
            telemetry: Telemetry::default(),
            last: None,
        }
    }

    fn probs(&self, task: Task, view: &TableView) -> Vec<f32> {
        predict(self.heads.head(task), &encode(view)).expect("encoder layout matches the heads").probs
    }

    /// Argmax (or a sample) of `p` restricted to `allowed`.
    fn choose(&mut self, p: &[f32], allowed: &[bool]) -> usize {
        let masked: Vec<f32> = p.iter().zip(allowed).map(|(&v, &a)| if a { v } else { 0.0 }).collect();
        if !self.config.deterministic {
            if let Ok(d) = WeightedIndex::new(&masked) {
                return d.sample(&mut self.rng);
            }
        }
        let mut best: Option<usize> = None;
        for (i, &a) in allowed.iter().enumerate() {
            if a && best.is_none_or(|b| p[i] > p[b]) {
                best = Some(i);
            }
        }
        best.expect("at least one allowed class")
    }

    fn yes(&mut self, p: f32, threshold: f64) -> bool {
        if self.config.deterministic {
            p as f64 >= threshold
        } else {
            self.rng.gen::<f64>() < p as f64
        }
    }

    /// Discard via the discard head among `options` (Discard or Riichi actions).
    fn discard_from(&mut self, view: &TableView, options: &[&Action], rule: Rule, mut consulted: Vec<(Task, Vec<f32>)>, force_mask: bool) -> Decision {
        let p = self.probs(Task::Discard, view);
        let mut allowed = [false; NUM_KINDS];
        for a in options {
            allowed[a.hand_tiles()[0].kind().index()] = true;
        }
        let raw = argmax(&p);
        let in_hand = view.hand.iter().any(|t| t.kind().index() == raw);
        self.telemetry.discard_decisions += 1;
        self.telemetry.raw_in_hand += in_hand as u64;
        let mask = force_mask || self.config.mask_discards;
        let (kind, fallback) = if mask {
            (self.choose(&p, &allowed), false)
        } else if allowed[raw] {
            (raw, false)
        } else {
            self.telemetry.fallbacks += 1;
            (self.choose(&p, &allowed), true)
        };
        let action = prefer_plain(options.iter().copied().filter(|a| a.hand_tiles()[0].kind().index() == kind))
            .expect("chosen kind is allowed")
            .clone();
        consulted.push((Task::Discard, p));
        Decision {
            action,
            rule,
            consulted,
            masked: mask,
            raw_argmax: Some(raw),
            raw_in_hand: Some(in_hand),
            fallback,
        }
    }

    pub fn decide_own_turn(&mut self, view: &TableView, legal: &[Action]) -> Decision {
        if legal.contains(&Action::Tsumo) {
            return Decision::rule(Action::Tsumo, Rule::Tsumo);
        }
        for a in legal {
            if let Action::ClosedKan(k) = a {
                if is_isolated(*k, &view.hand) {
                    return Decision::rule(a.clone(), Rule::ClosedKan);
                }
            }
        }
        let discards: Vec<&Action> = legal.iter().filter(|a| matches!(a, Action::Discard(_))).collect();
        if view.riichi[0] {
            return Decision::rule(discards[0].clone(), Rule::RiichiDiscard);
        }
        let riichi: Vec<&Action> = legal.iter().filter(|a| matches!(a, Action::Riichi(_))).collect();
        let mut consulted = Vec::new();
        if !riichi.is_empty() {
            let p = self.probs(Task::Riichi, view);
            let declare = self.yes(p[1], self.config.riichi_threshold);
            consulted.push((Task::Riichi, p));
            if declare {
                return self.discard_from(view, &riichi, Rule::Riichi, consulted, true);
            }
        }
        self.discard_from(view, &discards, Rule::Discard, consulted, false)
    }

    pub fn decide_on_claim(&mut self, view: &TableView, tile: Tile, legal: &[Action]) -> Decision {
        if legal.contains(&Action::Ron) {
            return Decision::rule(Action::Ron, Rule::Ron);
        }
        let mut consulted = Vec::new();
        let pons: Vec<&Action> = legal.iter().filter(|a| matches!(a, Action::Pon(_))).collect();
        if !pons.is_empty() {
            let p = self.probs(Task::Pon, view);
            let take = self.yes(p[1], self.config.pon_threshold);
            consulted.push((Task::Pon, p));
            if take {
                let mut d = Decision::rule(prefer_plain(pons.into_iter()).expect("non-empty").clone(), Rule::Pon);
                d.consulted = consulted;
                return d;
            }
        }
        let chis: Vec<(usize, &Action)> = legal
            .iter()
            .filter_map(|a| match a {
                Action::Chi(ts) => Some((
                    match chi_position(tile.kind(), *ts) {
                        ChiPosition::Low => 1,
                        ChiPosition::Mid => 2,
                        ChiPosition::High => 3,
                    },
                    a,
                )),
                _ => None,
            })
            .collect();
        if !chis.is_empty() {
            let p = self.probs(Task::Chi, view);
            let mut allowed = [true, false, false, false];
            for (c, _) in &chis {
                allowed[*c] = true;
            }
            let masked = allowed.iter().any(|a| !a);
            let class = self.choose(&p, &allowed);
            consulted.push((Task::Chi, p));
            if class != 0 {
                let action = prefer_plain(chis.iter().filter(|(c, _)| *c == class).map(|(_, a)| *a)).expect("allowed class").clone();
                let mut d = Decision::rule(action, Rule::Chi);
                d.consulted = consulted;
                d.masked = masked;
                return d;
            }
            let mut d = Decision::rule(Action::Pass, Rule::Pass);
            d.consulted = consulted;
            d.masked = masked;
            return d;
        }
        let mut d = Decision::rule(Action::Pass, Rule::Pass);
        d.consulted = consulted;
        d
    }

    /// Decide and remember the full decision in `last`.
    pub fn decide_point(&mut self, dp: &DecisionPoint<'_>) -> Decision {
        let d = match dp.claim {
            Some((_, tile)) => self.decide_on_claim(dp.view, tile, dp.legal),
            None => self.decide_own_turn(dp.view, dp.legal),
        };
        self.last = Some(d.clone());
        d
    }
}

impl Player for Agent {
    fn name(&self) -> String {
        "network".into()
    }

    fn decide(&mut self, dp: &DecisionPoint<'_>) -> Action {
        self.decide_point(dp).action
    }
}
