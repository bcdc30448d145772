//! Websocket gateway between the simulation core and live clients, plus the
//! headless commands of the `spv-nav` binary.
//!
//! `/subject` receives binary phosphene frames and may hold the control
//! token; `/experimenter` additionally receives JSON state, trial events and
//! break timers and manages the session. Message schemas live in
//! [`messages`] and are described in `docs/protocol.md`.

pub mod cli;
pub mod messages;
pub mod server;
pub mod session;

pub use messages::{ClientMessage, Role, ServerMessage, PROTOCOL_VERSION};
pub use server::{start, Hub, ServeOptions, Server};
pub use session::SimSession;
