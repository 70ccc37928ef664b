//! Riichi mahjong core: tiles, the rules engine, game records, and the
//! 86-plane feature encoding.

pub mod dataset;
pub mod error;
pub mod features;
pub mod records;
pub mod rules;
pub mod tiles;
