//! Lockstep wire protocol between one user simulator and one application.
//!
//! Every exchange is a framed request/response over a reliable ordered byte
//! stream. The user simulator drives simulated time: it sends the sensor
//! poses for `[t_current, t_next)` and blocks until the application has
//! advanced exactly that window and replied with its observation.

pub mod codec;
pub mod coord;
pub mod session;
pub mod transport;
pub mod types;
pub mod wire;

pub use codec::{decode_frame, decode_prefix, encode_frame, DEFAULT_MAX_PAYLOAD, HEADER_LEN};
pub use coord::{map_pose, CoordinateMap};
pub use session::{Application, AppEndpoint, Event, LockstepState, Role, Session};
pub use transport::{
    read_dump, serve_stream, FrameHandler, Loopback, Recorder, StreamTransport, Transport,
};
pub use types::*;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("need {0} more bytes")]
    NeedMoreBytes(usize),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("malformed pose: {0}")]
    MalformedPose(String),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("payload of {len} bytes exceeds maximum {max}")]
    Oversize { len: usize, max: usize },
    #[error("invalid message: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("connection lost")]
    ConnectionLost,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("application error: {0}")]
    App(String),
}

impl BridgeError {
    pub fn is_protocol_violation(&self) -> bool {
        matches!(
            self,
            BridgeError::ProtocolViolation(_) | BridgeError::Decode(DecodeError::ProtocolViolation(_))
        )
    }
}
