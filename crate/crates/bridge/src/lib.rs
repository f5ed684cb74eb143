//! Live bridge: a running episode behind a versioned JSON protocol.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{
    parse_command, AckStatus, ClientCommand, Command, ProtocolError, ServerBody, ServerMessage, PROTOCOL_VERSION,
};
pub use server::BridgeServer;
pub use session::{Reply, Session};
