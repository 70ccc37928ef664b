//! Playing side of the workbench: the four policy heads and their metrics,
//! the composed network agent, baseline bots, and the self-play simulator.

pub mod agent;
pub mod error;
pub mod player;
pub mod policies;
pub mod sim;

pub use agent::{Agent, AgentConfig, Decision, HeadPaths, PolicySet, Telemetry};
pub use error::{MetricsError, PolicyError};
pub use player::{DecisionPoint, GreedyShanten, Player, RandomLegal};
pub use policies::{evaluate, metrics_from_matrix, train_head, EvalReport, Metrics, PolicyHead, Preset, TrainConfig};
pub use sim::{play_game, replay_check, run_match, GameRecord, MatchReport, MatchSpec};
