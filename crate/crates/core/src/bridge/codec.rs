//! Length-prefixed frame codec.
//!
//! ```text
//! frame   := length:u32le  msg_type:u8  payload[length]
//! pose    := px py pz qw qx qy qz           (7 × f64le)
//! string  := len:u32le utf8[len]
//! ```
//!
//! | type | payload |
//! |------|---------|
//! | HELLO / HELLO_ACK | version:u16 dt:f64 width:u16 height:u16 channel_mask:u8 |
//! | STATE_UPDATE | t_current:f64 t_next:f64 hmd:pose n:u8 (≤2) pose[n] m:u32 (string f64)[m] |
//! | OBSERVATION / RESET_ACK | width:u16 height:u16 rgb[w·h·3] depth:f32[w·h] reward:f64 finished:u8 time_feature:f64 m:u32 (string f64)[m] |
//! | RESET | (string string)* until end of payload |
//! | CLOSE | empty |

use nalgebra::{Quaternion, Vector3};

use super::types::*;
use super::wire::{WireReader, WireWriter};
use super::{DecodeError, EncodeError};

pub const HEADER_LEN: usize = 5;
pub const DEFAULT_MAX_PAYLOAD: usize = 16 * 1024 * 1024;
const POSE_TOLERANCE: f64 = 1e-6;

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    encode_frame_with_limit(msg, DEFAULT_MAX_PAYLOAD)
}

pub fn encode_frame_with_limit(msg: &Message, max_payload: usize) -> Result<Vec<u8>, EncodeError> {
    let mut w = WireWriter::new();
    match msg {
        Message::Hello(h) | Message::HelloAck(h) => put_hello(&mut w, h),
        Message::StateUpdate(u) => put_state_update(&mut w, u)?,
        Message::Observation(o) | Message::ResetAck(o) => put_observation(&mut w, o)?,
        Message::Reset(cfg) => {
            for (k, v) in &cfg.0 {
                w.put_str(k);
                w.put_str(v);
            }
        }
        Message::Close => {}
    }
    let payload = w.into_inner();
    if payload.len() > max_payload || payload.len() > u32::MAX as usize {
        return Err(EncodeError::Oversize {
            len: payload.len(),
            max: max_payload,
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.push(msg.msg_type() as u8);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Decode exactly one frame occupying the whole buffer.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, DecodeError> {
    let (msg, used) = decode_prefix(bytes, DEFAULT_MAX_PAYLOAD)?;
    if used != bytes.len() {
        return Err(DecodeError::Malformed(format!(
            "{} bytes after end of frame",
            bytes.len() - used
        )));
    }
    Ok(msg)
}

/// Parse the header; returns `(payload_len, msg_type)`.
pub fn decode_header(bytes: &[u8], max_payload: usize) -> Result<(usize, MsgType), DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::NeedMoreBytes(HEADER_LEN - bytes.len()));
    }
    let len = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let ty = MsgType::from_u8(bytes[4])
        .ok_or_else(|| DecodeError::ProtocolViolation(format!("unknown msg_type {}", bytes[4])))?;
    if len > max_payload {
        return Err(DecodeError::ProtocolViolation(format!(
            "payload length {len} exceeds maximum {max_payload}"
        )));
    }
    Ok((len, ty))
}

/// Decode the frame at the start of `bytes`, returning it and the number of bytes consumed.
pub fn decode_prefix(bytes: &[u8], max_payload: usize) -> Result<(Message, usize), DecodeError> {
    let (len, ty) = decode_header(bytes, max_payload)?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(DecodeError::NeedMoreBytes(total - bytes.len()));
    }
    let msg = decode_payload(ty, &bytes[HEADER_LEN..total])?;
    Ok((msg, total))
}

pub fn decode_payload(ty: MsgType, payload: &[u8]) -> Result<Message, DecodeError> {
    let mut r = WireReader::new(payload);
    let msg = match ty {
        MsgType::Hello => Message::Hello(get_hello(&mut r)?),
        MsgType::HelloAck => Message::HelloAck(get_hello(&mut r)?),
        MsgType::StateUpdate => Message::StateUpdate(get_state_update(&mut r)?),
        MsgType::Observation => Message::Observation(get_observation(&mut r)?),
        MsgType::ResetAck => Message::ResetAck(get_observation(&mut r)?),
        MsgType::Reset => {
            let mut cfg = EpisodeConfig::new();
            while !r.is_empty() {
                let k = r.get_str()?;
                let v = r.get_str()?;
                cfg.0.push((k, v));
            }
            Message::Reset(cfg)
        }
        MsgType::Close => Message::Close,
    };
    r.finish()?;
    Ok(msg)
}

fn put_hello(w: &mut WireWriter, h: &Hello) {
    w.put_u16(h.version);
    w.put_f64(h.dt);
    w.put_u16(h.width);
    w.put_u16(h.height);
    w.put_u8(h.channel_mask);
}

fn get_hello(r: &mut WireReader) -> Result<Hello, DecodeError> {
    let h = Hello {
        version: r.get_u16()?,
        dt: r.get_f64()?,
        width: r.get_u16()?,
        height: r.get_u16()?,
        channel_mask: r.get_u8()?,
    };
    if !(h.dt.is_finite() && h.dt > 0.0) {
        return Err(DecodeError::Malformed(format!("non-positive dt {}", h.dt)));
    }
    Ok(h)
}

pub fn put_pose(w: &mut WireWriter, p: &Pose) {
    for v in p.position.iter() {
        w.put_f64(*v);
    }
    let q = &p.orientation;
    w.put_f64(q.w);
    w.put_f64(q.i);
    w.put_f64(q.j);
    w.put_f64(q.k);
}

pub fn get_pose(r: &mut WireReader) -> Result<Pose, DecodeError> {
    let position = Vector3::new(r.get_f64()?, r.get_f64()?, r.get_f64()?);
    let (w, x, y, z) = (r.get_f64()?, r.get_f64()?, r.get_f64()?, r.get_f64()?);
    let pose = Pose {
        position,
        orientation: Quaternion::new(w, x, y, z),
    };
    if !pose.is_finite() {
        return Err(DecodeError::MalformedPose("non-finite component".into()));
    }
    let err = pose.quaternion_norm_error();
    if err > POSE_TOLERANCE {
        return Err(DecodeError::MalformedPose(format!(
            "quaternion norm off by {err:e}"
        )));
    }
    Ok(pose)
}

fn put_scalars(w: &mut WireWriter, entries: &[(String, f64)]) {
    w.put_u32(entries.len() as u32);
    for (k, v) in entries {
        w.put_str(k);
        w.put_f64(*v);
    }
}

fn get_scalars(r: &mut WireReader) -> Result<Vec<(String, f64)>, DecodeError> {
    let n = r.get_u32()? as usize;
    // Each entry is at least 12 bytes; refuse counts the payload cannot hold.
    if n.saturating_mul(12) > r.remaining() {
        return Err(DecodeError::Malformed(format!("{n} entries overrun payload")));
    }
    (0..n).map(|_| Ok((r.get_str()?, r.get_f64()?))).collect()
}

fn put_state_update(w: &mut WireWriter, u: &StateUpdateMsg) -> Result<(), EncodeError> {
    if u.controllers.len() > 2 {
        return Err(EncodeError::Invalid(format!(
            "{} controllers (at most 2)",
            u.controllers.len()
        )));
    }
    w.put_f64(u.t_current);
    w.put_f64(u.t_next);
    put_pose(w, &u.hmd);
    w.put_u8(u.controllers.len() as u8);
    for c in &u.controllers {
        put_pose(w, c);
    }
    put_scalars(w, &u.extras);
    Ok(())
}

fn get_state_update(r: &mut WireReader) -> Result<StateUpdateMsg, DecodeError> {
    let t_current = r.get_f64()?;
    let t_next = r.get_f64()?;
    if !(t_current.is_finite() && t_next.is_finite()) {
        return Err(DecodeError::Malformed("non-finite timestamp".into()));
    }
    let hmd = get_pose(r)?;
    let n = r.get_u8()?;
    if n > 2 {
        return Err(DecodeError::Malformed(format!("{n} controllers (at most 2)")));
    }
    let controllers = (0..n).map(|_| get_pose(r)).collect::<Result<_, _>>()?;
    let extras = get_scalars(r)?;
    Ok(StateUpdateMsg {
        t_current,
        t_next,
        hmd,
        controllers,
        extras,
    })
}

fn put_observation(w: &mut WireWriter, o: &ObservationMsg) -> Result<(), EncodeError> {
    if !o.image.is_consistent() {
        return Err(EncodeError::Invalid("image buffers do not match dimensions".into()));
    }
    w.put_u16(o.image.width);
    w.put_u16(o.image.height);
    w.put_bytes(&o.image.rgb);
    for d in &o.image.depth {
        w.put_f32(*d);
    }
    w.put_f64(o.reward);
    w.put_u8(o.is_finished as u8);
    w.put_f64(o.time_feature);
    put_scalars(w, &o.log_entries);
    Ok(())
}

fn get_observation(r: &mut WireReader) -> Result<ObservationMsg, DecodeError> {
    let width = r.get_u16()?;
    let height = r.get_u16()?;
    let n = width as usize * height as usize;
    if n * 7 > r.remaining() {
        return Err(DecodeError::Malformed(format!("{width}x{height} image overruns payload")));
    }
    let rgb = r.take(n * 3)?.to_vec();
    let mut depth = Vec::with_capacity(n);
    for _ in 0..n {
        let d = r.get_f32()?;
        if d.is_nan() || d < 0.0 {
            return Err(DecodeError::Malformed(format!("invalid depth {d}")));
        }
        depth.push(d);
    }
    let reward = r.get_f64()?;
    if !reward.is_finite() {
        return Err(DecodeError::Malformed("non-finite reward".into()));
    }
    let is_finished = match r.get_u8()? {
        0 => false,
        1 => true,
        b => return Err(DecodeError::Malformed(format!("is_finished byte {b}"))),
    };
    let time_feature = r.get_f64()?;
    if !(0.0..=1.0).contains(&time_feature) {
        return Err(DecodeError::Malformed(format!("time_feature {time_feature} outside [0,1]")));
    }
    let log_entries = get_scalars(r)?;
    Ok(ObservationMsg {
        image: RgbdImage {
            width,
            height,
            rgb,
            depth,
        },
        reward,
        is_finished,
        time_feature,
        log_entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_without_config_is_five_bytes() {
        let b = encode_frame(&Message::Reset(EpisodeConfig::new())).unwrap();
        assert_eq!(b, vec![0, 0, 0, 0, 5]);
    }

    #[test]
    fn short_header_needs_more_bytes() {
        assert_eq!(decode_frame(&[0, 0, 0]), Err(DecodeError::NeedMoreBytes(2)));
    }

    #[test]
    fn unknown_type_is_protocol_violation() {
        let err = decode_frame(&[0, 0, 0, 0, 99]).unwrap_err();
        assert!(matches!(err, DecodeError::ProtocolViolation(_)));
    }

    #[test]
    fn truncated_payload_reports_missing_count() {
        let b = encode_frame(&Message::Hello(Hello::default())).unwrap();
        assert_eq!(
            decode_frame(&b[..b.len() - 4]),
            Err(DecodeError::NeedMoreBytes(4))
        );
    }

    #[test]
    fn state_update_round_trip() {
        let m = Message::StateUpdate(StateUpdateMsg {
            t_current: 0.0,
            t_next: 0.05,
            hmd: Pose::identity(),
            controllers: vec![Pose::identity()],
            extras: vec![],
        });
        let b = encode_frame(&m).unwrap();
        assert_eq!(decode_frame(&b).unwrap(), m);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let mut pose = Pose::identity();
        pose.orientation = Quaternion::new(1.0 + 1e-3, 0.0, 0.0, 0.0);
        let m = Message::StateUpdate(StateUpdateMsg {
            t_current: 0.0,
            t_next: 0.05,
            hmd: pose,
            controllers: vec![],
            extras: vec![],
        });
        let b = encode_frame(&m).unwrap();
        assert!(matches!(decode_frame(&b), Err(DecodeError::MalformedPose(_))));
    }

    #[test]
    fn oversized_payload_rejected_on_encode() {
        let m = Message::Reset(EpisodeConfig::new().with("k", "x".repeat(64)));
        assert!(matches!(
            encode_frame_with_limit(&m, 16),
            Err(EncodeError::Oversize { .. })
        ));
    }

    #[test]
    fn oversized_header_rejected_on_decode() {
        let mut b = vec![];
        b.extend_from_slice(&(DEFAULT_MAX_PAYLOAD as u32 + 1).to_le_bytes());
        b.push(MsgType::Close as u8);
        assert!(matches!(decode_frame(&b), Err(DecodeError::ProtocolViolation(_))));
    }
}
