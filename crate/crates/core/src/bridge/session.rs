use super::codec::{decode_frame, encode_frame};
use super::transport::{FrameHandler, Transport};
use super::types::*;
use super::BridgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LockstepState {
    Idle,
    AwaitingHelloAck,
    ReadyToStep,
    AwaitingObservation,
    Resetting,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// The user simulator, which drives time.
    Client,
    /// The application, which only ever replies.
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Sent(MsgType),
    Received(MsgType),
}

impl LockstepState {
    /// The session automaton. Anything not listed is a protocol violation.
    pub fn next(self, role: Role, event: Event) -> Result<LockstepState, BridgeError> {
        use Event::*;
        use LockstepState::*;
        use MsgType as M;
        let next = match (role, self, event) {
            (_, Closed, _) => None,
            (_, _, Sent(M::Close)) | (_, _, Received(M::Close)) => Some(Closed),

            (Role::Client, Idle, Sent(M::Hello)) => Some(AwaitingHelloAck),
            (Role::Client, AwaitingHelloAck, Received(M::HelloAck)) => Some(ReadyToStep),
            (Role::Client, ReadyToStep, Sent(M::StateUpdate)) => Some(AwaitingObservation),
            (Role::Client, ReadyToStep, Sent(M::Reset)) => Some(Resetting),
            (Role::Client, AwaitingObservation, Received(M::Observation)) => Some(ReadyToStep),
            (Role::Client, Resetting, Received(M::ResetAck)) => Some(ReadyToStep),

            (Role::Server, Idle, Received(M::Hello)) => Some(AwaitingHelloAck),
            (Role::Server, AwaitingHelloAck, Sent(M::HelloAck)) => Some(ReadyToStep),
            (Role::Server, ReadyToStep, Received(M::StateUpdate)) => Some(AwaitingObservation),
            (Role::Server, AwaitingObservation, Sent(M::Observation)) => Some(ReadyToStep),
            (Role::Server, ReadyToStep, Received(M::Reset)) => Some(Resetting),
            (Role::Server, Resetting, Sent(M::ResetAck)) => Some(ReadyToStep),
            _ => None,
        };
        next.ok_or_else(|| {
            BridgeError::ProtocolViolation(format!("{event:?} not allowed in {self:?} ({role:?})"))
        })
    }
}

/// Tracks the lockstep clock of one episode: `t_current` must start at 0 and
/// continue exactly where the previous window ended.
#[derive(Debug, Clone, Copy)]
struct Clock {
    expected: f64,
}

impl Clock {
    fn start() -> Self {
        Self { expected: 0.0 }
    }

    fn check(&self, u: &StateUpdateMsg) -> Result<(), BridgeError> {
        if u.t_current != self.expected {
            return Err(BridgeError::ProtocolViolation(format!(
                "t_current {} does not continue from {}",
                u.t_current, self.expected
            )));
        }
        if !(u.t_next > u.t_current) {
            return Err(BridgeError::ProtocolViolation(format!(
                "t_next {} not after t_current {}",
                u.t_next, u.t_current
            )));
        }
        Ok(())
    }
}

/// User-simulator side of a session.
pub struct Session<T: Transport> {
    transport: T,
    state: LockstepState,
    hello: Hello,
    clock: Clock,
    needs_reset: bool,
    undelivered: Option<ObservationMsg>,
    steps: u64,
}

impl<T: Transport> Session<T> {
    /// Send HELLO and wait for the application's acknowledgement.
    pub fn connect(transport: T, hello: Hello) -> Result<Self, BridgeError> {
        let mut s = Self {
            transport,
            state: LockstepState::Idle,
            hello,
            clock: Clock::start(),
            needs_reset: false,
            undelivered: None,
            steps: 0,
        };
        s.send(&Message::Hello(hello))?;
        match s.recv()? {
            Message::HelloAck(ack) => {
                if ack.version != hello.version {
                    return Err(BridgeError::ProtocolViolation(format!(
                        "peer speaks version {}, we speak {}",
                        ack.version, hello.version
                    )));
                }
                s.hello = ack;
            }
            other => return Err(unexpected(&other)),
        }
        Ok(s)
    }

    pub fn state(&self) -> LockstepState {
        self.state
    }

    /// Parameters as acknowledged by the application.
    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn needs_reset(&self) -> bool {
        self.needs_reset
    }

    /// Next `t_current` the session will accept.
    pub fn expected_time(&self) -> f64 {
        self.clock.expected
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn into_transport(self) -> T {
        self.transport
    }

    fn send(&mut self, msg: &Message) -> Result<(), BridgeError> {
        let next = self.state.next(Role::Client, Event::Sent(msg.msg_type()))?;
        let frame = encode_frame(msg)?;
        self.transport.send_frame(&frame)?;
        self.state = next;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, BridgeError> {
        let frame = self.transport.recv_frame()?;
        let msg = decode_frame(&frame)?;
        if msg == Message::Close {
            self.state = LockstepState::Closed;
            return Err(BridgeError::ConnectionLost);
        }
        self.state = self.state.next(Role::Client, Event::Received(msg.msg_type()))?;
        Ok(msg)
    }

    /// Send one STATE_UPDATE and block for the matching OBSERVATION.
    pub fn step_exchange(&mut self, update: StateUpdateMsg) -> Result<ObservationMsg, BridgeError> {
        self.begin_step(update)?;
        self.finish_step()
    }

    pub fn begin_step(&mut self, update: StateUpdateMsg) -> Result<(), BridgeError> {
        if self.needs_reset {
            return Err(BridgeError::ProtocolViolation(
                "episode finished; reset before stepping".into(),
            ));
        }
        if self.state != LockstepState::ReadyToStep {
            return Err(BridgeError::ProtocolViolation(format!(
                "step in state {:?}",
                self.state
            )));
        }
        self.clock.check(&update)?;
        let t_next = update.t_next;
        self.send(&Message::StateUpdate(update))?;
        self.clock.expected = t_next;
        Ok(())
    }

    pub fn finish_step(&mut self) -> Result<ObservationMsg, BridgeError> {
        match self.recv()? {
            Message::Observation(obs) => {
                self.steps += 1;
                self.needs_reset = obs.is_finished;
                Ok(obs)
            }
            other => Err(unexpected(&other)),
        }
    }

    /// Observation of a step that was still in flight when a reset was requested.
    pub fn take_undelivered(&mut self) -> Option<ObservationMsg> {
        self.undelivered.take()
    }

    /// Return both endpoints to `t = 0` and fetch the initial observation.
    /// A reset requested mid-step waits for the outstanding observation first.
    pub fn reset_handshake(&mut self, config: &EpisodeConfig) -> Result<ObservationMsg, BridgeError> {
        if self.state == LockstepState::AwaitingObservation {
            let obs = self.finish_step()?;
            self.undelivered = Some(obs);
        }
        self.send(&Message::Reset(config.clone()))?;
        match self.recv()? {
            Message::ResetAck(obs) => {
                self.clock = Clock::start();
                self.needs_reset = false;
                Ok(obs)
            }
            other => Err(unexpected(&other)),
        }
    }

    pub fn close(&mut self) -> Result<(), BridgeError> {
        if self.state == LockstepState::Closed {
            return Ok(());
        }
        self.send(&Message::Close)
    }
}

fn unexpected(msg: &Message) -> BridgeError {
    BridgeError::ProtocolViolation(format!("unexpected {:?}", msg.msg_type()))
}

/// Application-side callbacks driven by [`AppEndpoint`].
pub trait Application {
    /// Accept (and possibly adjust) the session parameters.
    fn hello(&mut self, hello: &Hello) -> Result<Hello, BridgeError>;
    fn reset(&mut self, config: &EpisodeConfig) -> Result<ObservationMsg, BridgeError>;
    fn step(&mut self, update: &StateUpdateMsg) -> Result<ObservationMsg, BridgeError>;
}

/// Server half of the automaton wrapped around an [`Application`].
pub struct AppEndpoint<A> {
    app: A,
    state: LockstepState,
    clock: Clock,
}

impl<A: Application> AppEndpoint<A> {
    pub fn new(app: A) -> Self {
        Self {
            app,
            state: LockstepState::Idle,
            clock: Clock::start(),
        }
    }

    pub fn app(&self) -> &A {
        &self.app
    }

    pub fn app_mut(&mut self) -> &mut A {
        &mut self.app
    }

    pub fn state(&self) -> LockstepState {
        self.state
    }

    fn advance(&mut self, event: Event) -> Result<(), BridgeError> {
        match self.state.next(Role::Server, event) {
            Ok(s) => {
                self.state = s;
                Ok(())
            }
            Err(e) => {
                self.state = LockstepState::Closed;
                Err(e)
            }
        }
    }

    /// Process one decoded request; `None` means no reply (CLOSE). Any
    /// error, including one raised by the application, closes the session.
    pub fn handle(&mut self, msg: Message) -> Result<Option<Message>, BridgeError> {
        let out = self.handle_inner(msg);
        if out.is_err() {
            self.state = LockstepState::Closed;
        }
        out
    }

    fn handle_inner(&mut self, msg: Message) -> Result<Option<Message>, BridgeError> {
        self.advance(Event::Received(msg.msg_type()))?;
        let reply = match msg {
            Message::Hello(h) => Message::HelloAck(self.app.hello(&h)?),
            Message::StateUpdate(u) => {
                if let Err(e) = self.clock.check(&u) {
                    self.state = LockstepState::Closed;
                    return Err(e);
                }
                self.clock.expected = u.t_next;
                Message::Observation(self.app.step(&u)?)
            }
            Message::Reset(cfg) => {
                let obs = self.app.reset(&cfg)?;
                self.clock = Clock::start();
                Message::ResetAck(obs)
            }
            Message::Close => return Ok(None),
            // The automaton already rejected every other type.
            other => return Err(unexpected(&other)),
        };
        self.advance(Event::Sent(reply.msg_type()))?;
        Ok(Some(reply))
    }
}

impl<A: Application> FrameHandler for AppEndpoint<A> {
    fn handle_frame(&mut self, frame: &[u8]) -> Result<Option<Vec<u8>>, BridgeError> {
        let msg = match decode_frame(frame) {
            Ok(m) => m,
            Err(e) => {
                self.state = LockstepState::Closed;
                return Err(e.into());
            }
        };
        match self.handle(msg)? {
            Some(reply) => Ok(Some(encode_frame(&reply)?)),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use LockstepState::*;
    use MsgType as M;

    #[test]
    fn client_happy_path() {
        let mut s = Idle;
        for ev in [
            Event::Sent(M::Hello),
            Event::Received(M::HelloAck),
            Event::Sent(M::StateUpdate),
            Event::Received(M::Observation),
            Event::Sent(M::Reset),
            Event::Received(M::ResetAck),
            Event::Sent(M::Close),
        ] {
            s = s.next(Role::Client, ev).unwrap();
        }
        assert_eq!(s, Closed);
    }

    #[test]
    fn step_before_hello_is_rejected() {
        assert!(Idle.next(Role::Client, Event::Sent(M::StateUpdate)).is_err());
        assert!(Idle.next(Role::Server, Event::Received(M::StateUpdate)).is_err());
    }

    #[test]
    fn nothing_leaves_closed() {
        for t in 1..=7 {
            let ty = MsgType::from_u8(t).unwrap();
            assert!(Closed.next(Role::Client, Event::Sent(ty)).is_err());
            assert!(Closed.next(Role::Server, Event::Received(ty)).is_err());
        }
    }

    #[test]
    fn server_never_accepts_its_own_message_types() {
        for ty in [M::HelloAck, M::Observation, M::ResetAck] {
            for st in [Idle, AwaitingHelloAck, ReadyToStep, AwaitingObservation, Resetting] {
                assert!(st.next(Role::Server, Event::Received(ty)).is_err());
            }
        }
    }
}
