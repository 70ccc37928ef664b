//! In-memory play sessions: one human seat, bots everywhere else.
//!
//! Every operation on a session runs under its lock, so a session is a
//! single sequential executor. Events go to a history (for late subscribers)
//! and a broadcast channel (for live ones).

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use houou_core::features::{encode, LAYOUT_TAG};
use houou_core::records::{emit_canonical, Corpus, EventLog, Recorder, RULESET_DEFAULT};
use houou_core::rules::{Action, GameState, Phase};
use houou_core::tiles::shuffle_and_build_walls;
use houou_play::policies::predict;
use houou_play::sim::subgame_wall_seed;
use houou_play::{Agent, AgentConfig, DecisionPoint, GreedyShanten, HeadPaths, Player, PolicyHead, PolicySet, RandomLegal};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::wire::*;

#[derive(Debug, Error, PartialEq)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("bad session config: {0}")]
    Config(String),
    #[error("idempotency key is required")]
    MissingKey,
}

/// What `submit` returns: the outcome, and whether it replays an earlier one.
pub struct Submitted {
    pub outcome: SubmitOutcome,
    pub duplicate: bool,
}

pub struct Session {
    id: String,
    seed: u64,
    human: u8,
    state: GameState,
    players: Vec<Option<Box<dyn Player>>>,
    recorder: Recorder,
    subgame: u32,
    finished: Vec<EventLog>,
    game_over: bool,
    events: Vec<StreamItem>,
    tx: broadcast::Sender<StreamItem>,
    submitted: HashMap<String, SubmitOutcome>,
    hints: Option<Arc<PolicySet>>,
    deadline: Option<Duration>,
    waiting_since: Instant,
}

fn names(human: u8, bots: &[String; 3]) -> [String; 4] {
    let mut it = bots.iter();
    std::array::from_fn(|s| if s as u8 == human { "human".to_string() } else { it.next().unwrap().clone() })
}

impl Session {
    fn new(id: String, req: &CreateRequest, seed: u64, heads: Option<Arc<PolicySet>>) -> Result<Session, ServiceError> {
        if req.human_seat > 3 {
            return Err(ServiceError::Config(format!("human seat {} out of range", req.human_seat)));
        }
        if req.hints && req.fair_play {
            return Err(ServiceError::Config("hints are not available in fair-play sessions".into()));
        }
        if req.hints && heads.is_none() {
            return Err(ServiceError::Config("hints need a loaded model set".into()));
        }
        let mut bots = req.bots.iter();
        let mut players: Vec<Option<Box<dyn Player>>> = Vec::new();
        for seat in 0..4u8 {
            if seat == req.human_seat {
                players.push(None);
                continue;
            }
            let bot_seed = seed ^ (seat as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let p: Box<dyn Player> = match bots.next().unwrap().as_str() {
                "random" => Box::new(RandomLegal::new(bot_seed)),
                "greedy" => Box::new(GreedyShanten::new(bot_seed)),
                "network" => {
                    let h = heads.clone().ok_or_else(|| ServiceError::Config("network bots need a loaded model set".into()))?;
                    let cfg = AgentConfig {
                        seed: bot_seed,
                        ..req.agent.clone().unwrap_or_default()
                    };
                    Box::new(Agent::new(h, cfg))
                }
                other => return Err(ServiceError::Config(format!("unknown bot {other:?}"))),
            };
            players.push(Some(p));
        }
        let state = GameState::new_game(shuffle_and_build_walls(subgame_wall_seed(seed, 0)));
        let recorder = Recorder::start(&id, 0, RULESET_DEFAULT, names(req.human_seat, &req.bots), Some(seed), &state);
        let (tx, _) = broadcast::channel(1024);
        let mut s = Session {
            id,
            seed,
            human: req.human_seat,
            state,
            players,
            recorder,
            subgame: 0,
            finished: Vec::new(),
            game_over: false,
            events: Vec::new(),
            tx,
            submitted: HashMap::new(),
            hints: if req.hints { heads } else { None },
            deadline: req.deadline_secs.map(Duration::from_secs),
            waiting_since: Instant::now(),
        };
        s.announce_subgame();
        s.advance();
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn emit(&mut self, event: PublicEvent) {
        let item = StreamItem {
            v: API_VERSION,
            layout: layout(),
            seq: self.events.len() as u64 + 1,
            event,
        };
        self.events.push(item.clone());
        // No subscribers is fine; they can catch up from the history.
        let _ = self.tx.send(item);
    }

    fn announce_subgame(&mut self) {
        let setup = self.state.setup();
        self.emit(PublicEvent::Session(SessionEvent::SubgameStart {
            subgame: self.subgame,
            kyoku: setup.kyoku,
            honba: setup.honba,
            pot: setup.pot,
            dealer: setup.dealer,
            scores: setup.scores,
        }));
        let deal = self.recorder.log().events[0].clone();
        self.emit(redact(&deal, self.human));
    }

    fn step(&mut self, seat: u8, action: &Action) {
        let before = self.state.clone();
        self.state.apply_mut(seat, action).expect("only legal actions are applied");
        let new: Vec<_> = self.recorder.step(&before, seat, action, &self.state).to_vec();
        for e in &new {
            self.emit(redact(e, self.human));
        }
    }

    /// Play automatic and bot moves until the human must act or the game ends.
    fn advance(&mut self) {
        loop {
            match self.state.phase() {
                Phase::GameOver => {
                    self.finish();
                    return;
                }
                Phase::SubgameOver => {
                    self.finished.push(self.recorder.log().clone());
                    self.subgame += 1;
                    self.state = self.state.next_subgame(shuffle_and_build_walls(subgame_wall_seed(self.seed, self.subgame)));
                    if self.state.phase() == Phase::GameOver {
                        self.game_over = true;
                        self.finish();
                        return;
                    }
                    let players = self.finished[0].header.players.clone();
                    self.recorder = Recorder::start(&self.id, self.subgame, RULESET_DEFAULT, players, Some(self.seed), &self.state);
                    self.announce_subgame();
                    continue;
                }
                _ => {}
            }
            let seat = self.state.awaiting()[0];
            let legal = self.state.legal_actions(seat);
            if legal == [Action::Draw] {
                self.step(seat, &Action::Draw);
                continue;
            }
            if seat == self.human {
                self.waiting_since = Instant::now();
                return;
            }
            let view = self.state.view(seat);
            let dp = DecisionPoint {
                view: &view,
                legal: &legal,
                claim: self.state.pending_discard(),
            };
            let player = self.players[seat as usize].as_mut().expect("bot seat");
            let chosen = player.decide(&dp);
            let action = legal.iter().find(|a| a.equivalent(&chosen)).cloned().unwrap_or_else(|| fallback(&legal));
            self.step(seat, &action);
        }
    }

    fn finish(&mut self) {
        if self.game_over && self.events.last().is_some_and(|e| matches!(e.event, PublicEvent::Session(SessionEvent::GameOver { .. }))) {
            return;
        }
        self.game_over = true;
        self.emit(PublicEvent::Session(SessionEvent::GameOver {
            scores: self.state.scores(),
            ranks: self.state.ranks(),
        }));
    }

    fn human_legal(&self) -> Vec<Action> {
        if self.game_over || self.state.is_over() {
            return Vec::new();
        }
        match self.state.awaiting().first() {
            Some(&s) if s == self.human => self.state.legal_actions(s),
            _ => Vec::new(),
        }
    }

    pub fn observation(&self) -> Observation {
        let view = self.state.view(self.human);
        let legal = self.human_legal();
        let claim = self.state.pending_discard().filter(|_| !legal.is_empty()).map(|(from, t)| Claim { from, tile: t.face() });
        let hint = self.hints.as_ref().filter(|_| claim.is_none() && !legal.is_empty()).map(|heads| {
            let kinds = predict(&heads.discard, &encode(&view)).expect("layout checked at load").probs;
            let hand = view.hand.iter().map(|t| kinds[t.kind().index()]).collect();
            Hint { kinds, hand }
        });
        Observation {
            v: API_VERSION,
            layout: layout(),
            session: self.id.clone(),
            seq: self.events.len() as u64,
            status: if legal.is_empty() { Status::GameOver } else { Status::YourTurn },
            view: WireView::from(&view),
            legal: legal.iter().filter_map(WireAction::from_action).collect(),
            claim,
            hint,
            result: self.game_over.then(|| FinalResult {
                scores: self.state.scores(),
                ranks: self.state.ranks(),
                pot: self.state.pot(),
            }),
        }
    }

    /// Play the default for an expired decision.
    fn enforce_deadline(&mut self) {
        let Some(d) = self.deadline else { return };
        let legal = self.human_legal();
        if legal.is_empty() || self.waiting_since.elapsed() < d {
            return;
        }
        let a = fallback(&legal);
        self.step(self.human, &a);
        self.advance();
    }

    pub fn observe(&mut self) -> Observation {
        self.enforce_deadline();
        self.observation()
    }

    pub fn submit(&mut self, req: &SubmitRequest) -> Result<Submitted, ServiceError> {
        if req.idempotency_key.is_empty() {
            return Err(ServiceError::MissingKey);
        }
        if let Some(o) = self.submitted.get(&req.idempotency_key) {
            return Ok(Submitted {
                outcome: o.clone(),
                duplicate: true,
            });
        }
        self.enforce_deadline();
        let legal = self.human_legal();
        let outcome = match req.action.resolve(&legal) {
            Some(a) => {
                self.step(self.human, &a);
                self.advance();
                SubmitOutcome {
                    v: API_VERSION,
                    layout: layout(),
                    accepted: true,
                    error: None,
                    observation: self.observation(),
                }
            }
            None => SubmitOutcome {
                v: API_VERSION,
                layout: layout(),
                accepted: false,
                error: Some(if legal.is_empty() {
                    "no decision is pending for the human seat".to_string()
                } else {
                    "action is not in the legal set".to_string()
                }),
                observation: self.observation(),
            },
        };
        self.submitted.insert(req.idempotency_key.clone(), outcome.clone());
        Ok(Submitted { outcome, duplicate: false })
    }

    /// Events after `after`, and a receiver for everything later.
    pub fn subscribe(&self, after: u64) -> (Vec<StreamItem>, broadcast::Receiver<StreamItem>) {
        (self.events.iter().filter(|e| e.seq > after).cloned().collect(), self.tx.subscribe())
    }

    /// Canonical log of every finished subgame. The running subgame is
    /// withheld because its log holds the other hands.
    pub fn transcript(&self) -> Vec<u8> {
        emit_canonical(&Corpus {
            provenance: None,
            logs: self.finished.clone(),
        })
    }

    pub fn is_over(&self) -> bool {
        self.game_over
    }

    /// Full-state access for audits and tests.
    pub fn state(&self) -> &GameState {
        &self.state
    }
}

/// Pass if possible, otherwise discard the drawn tile (or the last one).
fn fallback(legal: &[Action]) -> Action {
    if legal.contains(&Action::Pass) {
        return Action::Pass;
    }
    legal.iter().rev().find(|a| matches!(a, Action::Discard(_))).or(legal.first()).cloned().expect("non-empty legal set")
}

/// All sessions plus the model set shared by network bots and hints.
pub struct Service {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    heads: Option<Arc<PolicySet>>,
    model_dir: Option<PathBuf>,
    seed: u64,
    created: Mutex<u64>,
}

impl Service {
    /// `model_dir` may hold `discard.honn`, `pon.honn`, `chi.honn`,
    /// `riichi.honn`; network bots and hints need all four.
    pub fn new(model_dir: Option<&Path>, seed: u64) -> Result<Service, houou_play::PolicyError> {
        let heads = match model_dir {
            Some(d) if HeadPaths::in_dir(d).discard.exists() => Some(Arc::new(PolicySet::load(&HeadPaths::in_dir(d))?)),
            _ => None,
        };
        Ok(Service::with_heads(heads, model_dir.map(Path::to_path_buf), seed))
    }

    pub fn with_heads(heads: Option<Arc<PolicySet>>, model_dir: Option<PathBuf>, seed: u64) -> Service {
        Service {
            sessions: Mutex::new(HashMap::new()),
            heads,
            model_dir,
            seed,
            created: Mutex::new(0),
        }
    }

    pub fn create(&self, req: &CreateRequest) -> Result<Created, ServiceError> {
        let seed = req.seed.unwrap_or_else(|| {
            let mut n = self.created.lock().unwrap();
            *n += 1;
            self.seed ^ n.wrapping_mul(0xD1B5_4A32_D192_ED03)
        });
        let id = uuid::Uuid::new_v4().to_string();
        let s = Session::new(id.clone(), req, seed, self.heads.clone())?;
        let observation = s.observation();
        self.sessions.lock().unwrap().insert(id.clone(), Arc::new(Mutex::new(s)));
        Ok(Created {
            v: API_VERSION,
            layout: layout(),
            session: id,
            seed,
            observation,
        })
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn observe(&self, id: &str) -> Result<Observation, ServiceError> {
        Ok(self.session(id)?.lock().unwrap().observe())
    }

    pub fn submit(&self, id: &str, req: &SubmitRequest) -> Result<Submitted, ServiceError> {
        self.session(id)?.lock().unwrap().submit(req)
    }

    pub fn transcript(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        Ok(self.session(id)?.lock().unwrap().transcript())
    }

    pub fn models(&self) -> ModelList {
        let mut models = Vec::new();
        if let Some(dir) = &self.model_dir {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "honn")).collect())
                .unwrap_or_default();
            files.sort();
            for f in files {
                if let Ok(h) = PolicyHead::load(&f) {
                    models.push(ModelInfo {
                        file: f.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                        task: h.task.name().to_string(),
                        layout: LAYOUT_TAG.to_string(),
                        classes: h.model.classes(),
                        parameters: h.model.num_params(),
                        training: h.record.as_ref().and_then(|r| serde_json::to_value(r).ok()),
                    });
                }
            }
        }
        ModelList {
            v: API_VERSION,
            layout: layout(),
            models,
            loaded: self.heads.is_some(),
        }
    }
}
