use std::collections::VecDeque;
use std::io::{ErrorKind, Read, Write};

use super::codec::{decode_header, decode_prefix, encode_frame, DEFAULT_MAX_PAYLOAD, HEADER_LEN};
use super::types::Message;
use super::{BridgeError, DecodeError};

/// Moves whole encoded frames between the two endpoints.
pub trait Transport: Send {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), BridgeError>;
    fn recv_frame(&mut self) -> Result<Vec<u8>, BridgeError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), BridgeError> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, BridgeError> {
        (**self).recv_frame()
    }
}

/// Something that answers request frames with reply frames.
pub trait FrameHandler {
    fn handle_frame(&mut self, frame: &[u8]) -> Result<Option<Vec<u8>>, BridgeError>;
}

/// Framing over any reliable ordered byte stream (TCP, Unix socket, pipe).
pub struct StreamTransport<S> {
    stream: S,
    max_payload: usize,
}

impl<S: Read + Write + Send> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        Self {
            stream,
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }

    pub fn with_max_payload(mut self, max: usize) -> Self {
        self.max_payload = max;
        self
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }
}

fn read_exact_or_lost<S: Read>(stream: &mut S, buf: &mut [u8]) -> Result<(), BridgeError> {
    stream.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => {
            BridgeError::ConnectionLost
        }
        _ => BridgeError::Io(e),
    })
}

impl<S: Read + Write + Send> Transport for StreamTransport<S> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), BridgeError> {
        self.stream.write_all(frame).map_err(|e| match e.kind() {
            ErrorKind::BrokenPipe | ErrorKind::ConnectionReset => BridgeError::ConnectionLost,
            _ => BridgeError::Io(e),
        })?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, BridgeError> {
        let mut header = [0u8; HEADER_LEN];
        read_exact_or_lost(&mut self.stream, &mut header)?;
        let (len, _) = decode_header(&header, self.max_payload)?;
        let mut frame = vec![0u8; HEADER_LEN + len];
        frame[..HEADER_LEN].copy_from_slice(&header);
        read_exact_or_lost(&mut self.stream, &mut frame[HEADER_LEN..])?;
        Ok(frame)
    }
}

/// In-process transport: every sent frame is handed to the handler
/// synchronously and its reply queued. Frames are still fully encoded and
/// decoded on both sides.
pub struct Loopback<H> {
    handler: H,
    replies: VecDeque<Vec<u8>>,
}

impl<H: FrameHandler + Send> Loopback<H> {
    pub fn new(handler: H) -> Self {
        Self {
            handler,
            replies: VecDeque::new(),
        }
    }

    pub fn handler(&self) -> &H {
        &self.handler
    }

    pub fn handler_mut(&mut self) -> &mut H {
        &mut self.handler
    }
}

impl<H: FrameHandler + Send> Transport for Loopback<H> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), BridgeError> {
        if let Some(reply) = self.handler.handle_frame(frame)? {
            self.replies.push_back(reply);
        }
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, BridgeError> {
        self.replies.pop_front().ok_or(BridgeError::ConnectionLost)
    }
}

/// Tees every frame crossing the wrapped transport into a dump buffer.
/// A dump is the plain concatenation of frames in wire order.
pub struct Recorder<T> {
    inner: T,
    dump: Vec<u8>,
}

impl<T: Transport> Recorder<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            dump: Vec::new(),
        }
    }

    pub fn dump(&self) -> &[u8] {
        &self.dump
    }

    pub fn take_dump(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.dump)
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut T {
        &mut self.inner
    }
}

impl<T: Transport> Transport for Recorder<T> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), BridgeError> {
        self.dump.extend_from_slice(frame);
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, BridgeError> {
        let f = self.inner.recv_frame()?;
        self.dump.extend_from_slice(&f);
        Ok(f)
    }
}

/// Split a frame dump into `(message, raw frame bytes)`.
pub fn read_dump(bytes: &[u8]) -> Result<Vec<(Message, Vec<u8>)>, (usize, DecodeError)> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let (msg, used) =
            decode_prefix(&bytes[pos..], DEFAULT_MAX_PAYLOAD).map_err(|e| (out.len(), e))?;
        out.push((msg, bytes[pos..pos + used].to_vec()));
        pos += used;
    }
    Ok(out)
}

/// Serve requests arriving on `transport` until the peer closes.
pub fn serve_stream<T: Transport, H: FrameHandler>(
    transport: &mut T,
    handler: &mut H,
) -> Result<(), BridgeError> {
    loop {
        let frame = match transport.recv_frame() {
            Ok(f) => f,
            Err(BridgeError::ConnectionLost) => return Ok(()),
            Err(e) => return Err(e),
        };
        match handler.handle_frame(&frame) {
            Ok(Some(reply)) => transport.send_frame(&reply)?,
            Ok(None) => return Ok(()),
            Err(e) => {
                if let Ok(close) = encode_frame(&Message::Close) {
                    let _ = transport.send_frame(&close);
                }
                return Err(e);
            }
        }
    }
}
