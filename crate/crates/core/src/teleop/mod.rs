//! Operator bridge: command protocol, reference smoothing and a websocket
//! session driving a live simulation.

pub mod operator;
pub mod protocol;
pub mod server;
pub mod session;

pub use operator::{Operator, Smoother, SmootherLimits};
pub use protocol::{
    client_json, parse_client, parse_server, ClientMessage, CommandAck, HalfspaceFrame, Hello,
    Obstacle, ProtocolError, ServerMessage, StateFrame, TeleopCommand, MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
};
pub use server::{serve, ServeError, ServerHandle};
pub use session::{Envelope, Session};
