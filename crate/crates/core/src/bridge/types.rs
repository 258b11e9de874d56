use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Position (meters) and orientation (unit quaternion, stored w,x,y,z on the wire).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: Quaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self::from_position(Vector3::zeros())
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Self {
            position,
            orientation: Quaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: rotation.into_inner(),
        }
    }

    /// Orientation renormalized to a unit quaternion.
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_quaternion(self.orientation)
    }

    /// `self ∘ local`: express a pose given in this frame in the parent frame.
    pub fn compose(&self, local: &Pose) -> Pose {
        let r = self.rotation();
        Pose::new(self.position + r * local.position, r * local.rotation())
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.rotation() * p
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }

    pub fn quaternion_norm_error(&self) -> f64 {
        (self.orientation.norm() - 1.0).abs()
    }
}

/// Row-major RGB bytes plus linear depth in meters (`+inf` where nothing was hit).
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdImage {
    pub width: u16,
    pub height: u16,
    pub rgb: Vec<u8>,
    pub depth: Vec<f32>,
}

impl RgbdImage {
    pub fn new(width: u16, height: u16) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            rgb: vec![0; n * 3],
            depth: vec![f32::INFINITY; n],
        }
    }

    pub fn empty() -> Self {
        Self::new(0, 0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn rgb_at(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width as usize + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn depth_at(&self, x: usize, y: usize) -> f32 {
        self.depth[y * self.width as usize + x]
    }

    pub fn is_consistent(&self) -> bool {
        self.rgb.len() == self.pixel_count() * 3 && self.depth.len() == self.pixel_count()
    }
}

pub const PROTOCOL_VERSION: u16 = 1;

pub mod channel {
    pub const RED: u8 = 1;
    pub const GREEN: u8 = 1 << 1;
    pub const BLUE: u8 = 1 << 2;
    pub const DEPTH: u8 = 1 << 3;
    pub const ALL: u8 = RED | GREEN | BLUE | DEPTH;
}

/// Session parameters negotiated by HELLO / HELLO_ACK.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub version: u16,
    pub dt: f64,
    pub width: u16,
    pub height: u16,
    pub channel_mask: u8,
}

impl Default for Hello {
    fn default() -> Self {
        Self {
            version: PROTOCOL_VERSION,
            dt: 0.05,
            width: 120,
            height: 80,
            channel_mask: channel::GREEN | channel::DEPTH,
        }
    }
}

impl Hello {
    /// No image is exchanged when no channel is selected.
    pub fn renders(&self) -> bool {
        self.channel_mask & channel::ALL != 0 && self.width > 0 && self.height > 0
    }
}

/// User simulator → application: sensor poses for the window `[t_current, t_next)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateUpdateMsg {
    pub t_current: f64,
    pub t_next: f64,
    pub hmd: Pose,
    pub controllers: Vec<Pose>,
    /// Extension scalars, e.g. the user-side fatigue level used by the effort term.
    pub extras: Vec<(String, f64)>,
}

impl StateUpdateMsg {
    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Application → user simulator: the rendered frame plus step results.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMsg {
    pub image: RgbdImage,
    pub reward: f64,
    pub is_finished: bool,
    pub time_feature: f64,
    pub log_entries: Vec<(String, f64)>,
}

impl ObservationMsg {
    pub fn log(&self, key: &str) -> Option<f64> {
        self.log_entries.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Opaque key-value list carried by RESET.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig(pub Vec<(String, String)>);

impl EpisodeConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.0.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.0.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    HelloAck = 2,
    StateUpdate = 3,
    Observation = 4,
    Reset = 5,
    ResetAck = 6,
    Close = 7,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::Hello,
            2 => Self::HelloAck,
            3 => Self::StateUpdate,
            4 => Self::Observation,
            5 => Self::Reset,
            6 => Self::ResetAck,
            7 => Self::Close,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    HelloAck(Hello),
    StateUpdate(StateUpdateMsg),
    Observation(ObservationMsg),
    Reset(EpisodeConfig),
    /// Carries the initial observation of the new episode.
    ResetAck(ObservationMsg),
    Close,
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::Hello(_) => MsgType::Hello,
            Message::HelloAck(_) => MsgType::HelloAck,
            Message::StateUpdate(_) => MsgType::StateUpdate,
            Message::Observation(_) => MsgType::Observation,
            Message::Reset(_) => MsgType::Reset,
            Message::ResetAck(_) => MsgType::ResetAck,
            Message::Close => MsgType::Close,
        }
    }
}
