//! The play service (sessions and their HTTP routes) behind the `houou` CLI.

pub mod http;
pub mod session;
pub mod wire;

pub use session::{Service, ServiceError, Session, Submitted};
