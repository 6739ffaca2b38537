//! Wire format: one UTF-8 JSON object per websocket text message, always
//! carrying `"v": 1` and a `"type"` tag. See `docs/protocol.md`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest state frame the server will send, bytes.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("unsupported protocol version {0:?}")]
    Version(Option<u64>),
    #[error("invalid message: {0}")]
    Schema(String),
}

/// Operator command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TeleopCommand {
    /// Payload velocity setpoint, m/s. Clamped to the configured maximum.
    Velocity { vx: f64, vy: f64, vz: f64 },
    /// One-off displacement of the position target, m.
    Nudge { dx: f64, dy: f64, dz: f64 },
    /// Named formation preset, or `null` to release it.
    Preset { name: Option<String> },
    /// Freezes or resumes the simulation clock.
    Pause { paused: bool },
    /// Returns the target to the start position and stops.
    Reset,
}

impl TeleopCommand {
    pub fn velocity(v: Vector3<f64>) -> Self {
        Self::Velocity {
            vx: v.x,
            vy: v.y,
            vz: v.z,
        }
    }

    fn check(&self) -> Result<(), ProtocolError> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            Self::Velocity { vx, vy, vz } => finite(&[*vx, *vy, *vz]),
            Self::Nudge { dx, dy, dz } => finite(&[*dx, *dy, *dz]),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(ProtocolError::Schema(
                "command values must be finite".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Cmd {
        v: u32,
        /// Client sequence number, echoed back in state frames.
        #[serde(default)]
        seq: Option<u64>,
        cmd: TeleopCommand,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub v: u32,
    pub n: usize,
    pub presets: Vec<String>,
    pub rate_hz: f64,
    pub dt: f64,
    pub max_speed: f64,
    pub safety_radii: Vec<f64>,
    pub cable_lengths: Vec<f64>,
    pub obstacles: Vec<Obstacle>,
}

/// Vertical cylinder, display only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceFrame {
    pub robot: usize,
    /// World-frame force-space normal; the force satisfies `normal·μ ≤ offset`.
    pub normal: [f64; 3],
    pub offset: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandAck {
    pub seq: Option<u64>,
    /// Tick during which the command arrived.
    pub received_tick: u64,
    /// Tick whose reference first reflects it.
    pub applied_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFrame {
    pub v: u32,
    pub tick: u64,
    pub t: f64,
    pub paused: bool,
    pub payload_position: [f64; 3],
    /// Row-major payload rotation.
    pub payload_rotation: [f64; 9],
    pub reference_position: [f64; 3],
    pub reference_velocity: [f64; 3],
    pub robots: Vec<[f64; 3]>,
    /// Unit vectors from each quadrotor toward the payload.
    pub cables: Vec<[f64; 3]>,
    pub mu: Vec<[f64; 3]>,
    pub halfspaces: Vec<HalfspaceFrame>,
    pub min_distance: f64,
    pub preset: Option<String>,
    pub velocity_command: [f64; 3],
    pub last_command: Option<CommandAck>,
    pub obstacles: Vec<Obstacle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Hello),
    State(StateFrame),
    Error { v: u32, message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        Self::Error {
            v: PROTOCOL_VERSION,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

fn check_version(value: &Value) -> Result<(), ProtocolError> {
    match value.get("v").and_then(Value::as_u64) {
        Some(v) if v == PROTOCOL_VERSION as u64 => Ok(()),
        other => Err(ProtocolError::Version(other)),
    }
}

/// Parses and validates a client message.
pub fn parse_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ProtocolError::Json(e.to_string()))?;
    check_version(&value)?;
    let msg: ClientMessage =
        serde_json::from_value(value).map_err(|e| ProtocolError::Schema(e.to_string()))?;
    let ClientMessage::Cmd { cmd, .. } = &msg;
    cmd.check()?;
    Ok(msg)
}

/// Parses and validates a server message; used by clients and tests.
pub fn parse_server(text: &str) -> Result<ServerMessage, ProtocolError> {
    if text.len() > MAX_FRAME_BYTES {
        return Err(ProtocolError::Schema(format!(
            "message of {} bytes exceeds the limit",
            text.len()
        )));
    }
    let value: Value =
        serde_json::from_str(text).map_err(|e| ProtocolError::Json(e.to_string()))?;
    check_version(&value)?;
    let msg: ServerMessage =
        serde_json::from_value(value).map_err(|e| ProtocolError::Schema(e.to_string()))?;
    if let ServerMessage::State(frame) = &msg {
        let n = frame.robots.len();
        if frame.cables.len() != n || frame.mu.len() != n {
            return Err(ProtocolError::Schema(
                "per-robot arrays differ in length".into(),
            ));
        }
        if frame.halfspaces.iter().any(|h| h.robot >= n) {
            return Err(ProtocolError::Schema(
                "half-space robot index out of range".into(),
            ));
        }
    }
    Ok(msg)
}

pub fn client_json(seq: Option<u64>, cmd: TeleopCommand) -> String {
    serde_json::to_string(&ClientMessage::Cmd {
        v: PROTOCOL_VERSION,
        seq,
        cmd,
    })
    .expect("commands always serialize")
}
