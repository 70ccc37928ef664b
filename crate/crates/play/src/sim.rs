//! Self-play: full games between four players, duplicate seating,
//! placement statistics, agreement runs and replay checks.

use std::panic::{catch_unwind, AssertUnwindSafe};

use houou_core::dataset::{one_per_subgame, Sample};
use houou_core::error::ReplayError;
use houou_core::records::{replay, Event, EventLog, Recorder, RULESET_DEFAULT};
use houou_core::rules::{Action, GameState, Phase};
use houou_core::tiles::shuffle_and_build_walls;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::player::{DecisionPoint, Player};
use crate::policies::{evaluate, EvalReport, PolicyHead};

/// Points in play: four starting scores.
pub const TOTAL_POINTS: i32 = 100_000;
const MAX_STEPS: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSpec {
    pub ruleset: String,
    /// Display names of the four agents.
    pub agents: [String; 4],
    /// Total games. With duplicate seating, every four consecutive games share
    /// one wall seed with the agents rotated one seat each time.
    pub games: usize,
    pub seed: u64,
    pub duplicate_seating: bool,
    /// Check tile conservation at every step (slower).
    pub check_invariants: bool,
}

impl MatchSpec {
    pub fn new(agents: [&str; 4], games: usize, seed: u64) -> MatchSpec {
        MatchSpec {
            ruleset: RULESET_DEFAULT.to_string(),
            agents: agents.map(String::from),
            games,
            seed,
            duplicate_seating: true,
            check_invariants: false,
        }
    }

    /// Wall seed and rotation of game `g`.
    pub fn schedule(&self, g: usize) -> (u64, usize) {
        let (wall, rotation) = if self.duplicate_seating { (g / 4, g % 4) } else { (g, 0) };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(wall as u128 * 2);
        (rng.gen(), rotation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game: String,
    pub wall_seed: u64,
    pub rotation: usize,
    /// Agent index sitting at each seat.
    pub seating: [usize; 4],
    /// By seat.
    pub final_scores: [i32; 4],
    /// By seat, 1..=4.
    pub placements: [u8; 4],
    /// Transcript; written separately as canonical records.
    #[serde(skip)]
    pub logs: Vec<EventLog>,
    /// Set when the game was aborted (illegal action, panic, broken invariant).
    pub error: Option<String>,
    pub steps: u64,
}

/// Seed of subgame `i`'s wall within a game.
pub fn subgame_wall_seed(wall_seed: u64, i: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(wall_seed);
    rng.set_word_pos(i as u128 * 2);
    rng.gen()
}

/// Ask `player` for a decision, turning a panic into an error.
fn ask(player: &mut dyn Player, dp: &DecisionPoint<'_>) -> Result<Action, String> {
    catch_unwind(AssertUnwindSafe(|| player.decide(dp))).map_err(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        format!("player panicked: {msg}")
    })
}

/// Play one full game. `players` is indexed by seat.
pub fn play_game(players: &mut [Box<dyn Player>], game: &str, wall_seed: u64, names: [String; 4], check_invariants: bool) -> GameRecord {
    assert_eq!(players.len(), 4);
    let mut subgame = 0u32;
    let mut state = GameState::new_game(shuffle_and_build_walls(subgame_wall_seed(wall_seed, 0)));
    let mut rec = Recorder::start(game, subgame, RULESET_DEFAULT, names.clone(), Some(wall_seed), &state);
    let mut logs = Vec::new();
    let mut steps = 0u64;
    let mut error = None;
    loop {
        match state.phase() {
            Phase::GameOver => break,
            Phase::SubgameOver => {
                logs.push(rec.log().clone());
                subgame += 1;
                state = state.next_subgame(shuffle_and_build_walls(subgame_wall_seed(wall_seed, subgame)));
                if state.phase() == Phase::GameOver {
                    break;
                }
                rec = Recorder::start(game, subgame, RULESET_DEFAULT, names.clone(), Some(wall_seed), &state);
                continue;
            }
            _ => {}
        }
        let seat = state.awaiting()[0];
        let legal = state.legal_actions(seat);
        let action = if legal == [Action::Draw] {
            Action::Draw
        } else {
            let view = state.view(seat);
            let dp = DecisionPoint {
                view: &view,
                legal: &legal,
                claim: state.pending_discard(),
            };
            match ask(players[seat as usize].as_mut(), &dp) {
                Ok(a) => a,
                Err(e) => {
                    error = Some(format!("seat {seat}: {e}"));
                    break;
                }
            }
        };
        let before = state.clone();
        if let Err(e) = state.apply_mut(seat, &action) {
            error = Some(format!("seat {seat}: illegal action: {e}"));
            break;
        }
        rec.step(&before, seat, &action, &state);
        steps += 1;
        let total: i32 = state.scores().iter().sum::<i32>() + 1000 * state.pot() as i32;
        if total != TOTAL_POINTS {
            error = Some(format!("score conservation broken after step {steps}: {total}"));
            break;
        }
        if check_invariants {
            let v = state.invariant_violations();
            if !v.is_empty() {
                error = Some(format!("invariants broken after step {steps}: {}", v.join("; ")));
                break;
            }
        }
        if steps > MAX_STEPS {
            error = Some("step limit exceeded".into());
            break;
        }
    }
    if error.is_some() && !rec.log().events.is_empty() {
        logs.push(rec.finish());
    }
    let final_scores = state.scores();
    GameRecord {
        game: game.to_string(),
        wall_seed,
        rotation: 0,
        seating: [0, 1, 2, 3],
        final_scores,
        placements: state.ranks(),
        logs,
        error,
        steps,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentStats {
    pub name: String,
    /// Completed games (aborted games are not counted).
    pub games: u64,
    pub mean_placement: f64,
    pub placement_hist: [u64; 4],
    pub mean_score: f64,
    pub subgames: u64,
    pub wins: u64,
    pub deal_ins: u64,
    pub riichi: u64,
    pub calls: u64,
    pub win_rate: f64,
    pub deal_in_rate: f64,
    pub riichi_rate: f64,
    pub call_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub spec: MatchSpec,
    pub agents: Vec<AgentStats>,
    pub games: Vec<GameRecord>,
    pub aborted: usize,
}

impl MatchReport {
    /// One JSON object per agent.
    pub fn metrics_lines(&self) -> String {
        self.agents.iter().map(|a| serde_json::to_string(a).expect("stats serialize") + "\n").collect()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} games ({} aborted), seed {}, duplicate seating {}\n",
            self.games.len(),
            self.aborted,
            self.spec.seed,
            self.spec.duplicate_seating
        );
        s.push_str("agent                 place   1st  2nd  3rd  4th    score   win%  deal-in%  riichi%  calls/sg\n");
        for a in &self.agents {
            s.push_str(&format!(
                "{:<20} {:>6.3} {:>5}{:>5}{:>5}{:>5} {:>8.0} {:>6.1} {:>9.1} {:>8.1} {:>9.2}\n",
                a.name,
                a.mean_placement,
                a.placement_hist[0],
                a.placement_hist[1],
                a.placement_hist[2],
                a.placement_hist[3],
                a.mean_score,
                100.0 * a.win_rate,
                100.0 * a.deal_in_rate,
                100.0 * a.riichi_rate,
                a.call_rate
            ));
        }
        s
    }
}

/// Run a match. `make(agent, seed)` builds a fresh player for one game.
pub fn run_match<F>(spec: &MatchSpec, mut make: F) -> MatchReport
where
    F: FnMut(usize, u64) -> Box<dyn Player>,
{
    let mut games = Vec::with_capacity(spec.games);
    for g in 0..spec.games {
        let (wall_seed, rotation) = spec.schedule(g);
        // agent k sits at seat (k + rotation) % 4
        let seating: [usize; 4] = std::array::from_fn(|seat| (seat + 4 - rotation) % 4);
        let mut players: Vec<Box<dyn Player>> = seating
            .iter()
            .map(|&k| make(k, spec.seed ^ (g as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ k as u64))
            .collect();
        let names = seating.map(|k| spec.agents[k].clone());
        let mut rec = play_game(&mut players, &format!("m{}-{g}", spec.seed), wall_seed, names, spec.check_invariants);
        rec.rotation = rotation;
        rec.seating = seating;
        games.push(rec);
    }
    let mut agents: Vec<AgentStats> = spec
        .agents
        .iter()
        .map(|n| AgentStats {
            name: n.clone(),
            ..AgentStats::default()
        })
        .collect();
    let mut aborted = 0;
    for g in &games {
        if g.error.is_some() {
            aborted += 1;
            continue;
        }
        for seat in 0..4 {
            let a = &mut agents[g.seating[seat]];
            a.games += 1;
            a.placement_hist[g.placements[seat] as usize - 1] += 1;
            a.mean_placement += g.placements[seat] as f64;
            a.mean_score += g.final_scores[seat] as f64;
        }
        for log in &g.logs {
            for seat in 0..4u8 {
                let a = &mut agents[g.seating[seat as usize]];
                a.subgames += 1;
                for e in &log.events {
                    match e {
                        Event::Win { seat: w, from, .. } => {
                            a.wins += (*w == seat) as u64;
                            a.deal_ins += (*from == Some(seat)) as u64;
                        }
                        Event::Riichi { seat: r } => a.riichi += (*r == seat) as u64,
                        Event::Call { seat: c, meld } => a.calls += (*c == seat && meld.from.is_some()) as u64,
                        _ => {}
                    }
                }
            }
        }
    }
    for a in &mut agents {
        let per = |x: u64, n: u64| if n > 0 { x as f64 / n as f64 } else { 0.0 };
        a.mean_placement = if a.games > 0 { a.mean_placement / a.games as f64 } else { 0.0 };
        a.mean_score = if a.games > 0 { a.mean_score / a.games as f64 } else { 0.0 };
        a.win_rate = per(a.wins, a.subgames);
        a.deal_in_rate = per(a.deal_ins, a.subgames);
        a.riichi_rate = per(a.riichi, a.subgames);
        a.call_rate = per(a.calls, a.subgames);
    }
    MatchReport {
        spec: spec.clone(),
        agents,
        games,
        aborted,
    }
}

/// Replay a log through the rules engine; the first illegal step, if any.
pub fn replay_check(log: &EventLog) -> Result<(), ReplayError> {
    replay(log).map(|_| ())
}

/// Agreement of `head` on a held-out set built with at most one sample per
/// subgame (chosen with `seed`).
pub fn agreement_eval(head: &PolicyHead, samples: Vec<Sample>, seed: u64) -> Result<(f64, EvalReport), PolicyError> {
    let test = one_per_subgame(samples, seed);
    let report = evaluate(head, &test)?;
    Ok((report.agreement(), report))
}
