//! Application servers and client transports for training runs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;

use anyhow::{anyhow, bail, Context, Result};
use vrloop::bridge::{serve_stream, AppEndpoint, BridgeError, StreamTransport, Transport};
use vrloop::trainer::env::{loopback_transport, BoxedTransport};
use vrloop::whacapp::{GameConfig, WhacApp};

use crate::config::{BridgeKind, RunConfig, ServerMode};

/// Printed by `vrloop serve` once it is accepting connections.
pub const LISTENING: &str = "listening on ";

/// Tees every frame crossing the wrapped transport into a file.
pub struct FileRecorder<T> {
    inner: T,
    out: BufWriter<File>,
}

impl<T> FileRecorder<T> {
    pub fn create(inner: T, path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(Self {
            inner,
            out: BufWriter::new(file),
        })
    }
}

impl<T: Transport> Transport for FileRecorder<T> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), BridgeError> {
        self.out.write_all(frame)?;
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, BridgeError> {
        let f = self.inner.recv_frame()?;
        self.out.write_all(&f)?;
        self.out.flush()?;
        Ok(f)
    }
}

pub fn bind(addr: &str) -> Result<TcpListener> {
    TcpListener::bind(addr).with_context(|| format!("cannot listen on {addr} (address in use?)"))
}

fn serve_connection(stream: TcpStream, game: GameConfig) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut transport = StreamTransport::new(stream);
    let mut endpoint = AppEndpoint::new(WhacApp::new(game)?);
    serve_stream(&mut transport, &mut endpoint)?;
    Ok(())
}

/// Accept connections, each served by a fresh application on its own
/// thread. Returns after `limit` connections have finished, or never.
pub fn serve(listener: TcpListener, game: &GameConfig, limit: Option<usize>) -> Result<()> {
    let mut workers = Vec::new();
    for (i, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let game = game.clone();
        workers.push(std::thread::spawn(move || serve_connection(stream, game)));
        if limit.is_some_and(|n| i + 1 >= n) {
            break;
        }
    }
    let mut first_err = None;
    for w in workers {
        match w.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                first_err.get_or_insert(e);
            }
            Err(_) => {
                first_err.get_or_insert(anyhow!("server worker panicked"));
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

enum Server {
    Thread(JoinHandle<Result<()>>),
    Process(Child),
}

/// A server owned by a training run; a spawned child is killed on drop.
#[derive(Default)]
pub struct ServerHandle(Option<Server>);

impl ServerHandle {
    /// Wait for the server to finish after its clients closed.
    pub fn finish(mut self) -> Result<()> {
        match self.0.take() {
            Some(Server::Thread(h)) => h.join().map_err(|_| anyhow!("server thread panicked"))?,
            Some(Server::Process(mut c)) => {
                let status = c.wait()?;
                if !status.success() {
                    bail!("application server exited with {status}");
                }
                Ok(())
            }
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(Server::Process(c)) = &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn spawn_process(exe: &Path, config_path: &Path, addr: &str, n: usize) -> Result<(SocketAddr, Child)> {
    let mut child = Command::new(exe)
        .arg("--config")
        .arg(config_path)
        .args(["serve", "--addr", addr, "--connections", &n.to_string()])
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .with_context(|| format!("cannot start application server {}", exe.display()))?;
    let stdout = child.stdout.take().expect("piped stdout");
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line)?;
    let Some(bound) = line.trim().strip_prefix(LISTENING) else {
        let _ = child.kill();
        let status = child.wait()?;
        bail!("application server failed to start ({status})");
    };
    Ok((bound.parse().context("server printed a bad address")?, child))
}

/// What a run needs to reach its applications.
pub struct Connector {
    pub transports: Vec<BoxedTransport>,
    pub server: ServerHandle,
}

/// Open `n` application sessions as the run config describes. `config_path`
/// is the effective config handed to a spawned server; `record_dir`
/// receives one frame dump per session.
pub fn connect(
    cfg: &RunConfig,
    game: &GameConfig,
    n: usize,
    config_path: &Path,
    record_dir: Option<&Path>,
) -> Result<Connector> {
    let (mut transports, server): (Vec<BoxedTransport>, ServerHandle) = match cfg.bridge.transport {
        BridgeKind::Loopback => (
            (0..n).map(|_| loopback_transport(game.clone())).collect::<Result<_, _>>()?,
            ServerHandle::default(),
        ),
        BridgeKind::Tcp => {
            let (addr, server) = match cfg.bridge.server {
                ServerMode::External => {
                    let addr: SocketAddr = cfg.bridge.addr.parse().context("bridge.addr")?;
                    (addr, ServerHandle::default())
                }
                ServerMode::Thread => {
                    let listener = bind(&cfg.bridge.addr)?;
                    let addr = listener.local_addr()?;
                    let game = game.clone();
                    (addr, ServerHandle(Some(Server::Thread(std::thread::spawn(move || serve(listener, &game, Some(n)))))))
                }
                ServerMode::Process => {
                    let exe = server_executable()?;
                    let (addr, child) = spawn_process(&exe, config_path, &cfg.bridge.addr, n)?;
                    (addr, ServerHandle(Some(Server::Process(child))))
                }
            };
            let mut ts: Vec<BoxedTransport> = Vec::with_capacity(n);
            for _ in 0..n {
                let s = TcpStream::connect(addr).with_context(|| format!("cannot connect to {addr}"))?;
                s.set_nodelay(true)?;
                ts.push(Box::new(StreamTransport::new(s)));
            }
            (ts, server)
        }
    };
    if let Some(dir) = record_dir {
        std::fs::create_dir_all(dir)?;
        transports = transports
            .into_iter()
            .enumerate()
            .map(|(i, t)| -> Result<BoxedTransport> {
                Ok(Box::new(FileRecorder::create(t, &dir.join(format!("env_{i:02}.frames")))?))
            })
            .collect::<Result<_>>()?;
    }
    Ok(Connector { transports, server })
}

/// The `vrloop` binary: this executable, or `VRLOOP_SERVER_EXE` when set
/// (tests embedding the library run from a different executable).
fn server_executable() -> Result<PathBuf> {
    if let Ok(p) = std::env::var("VRLOOP_SERVER_EXE") {
        return Ok(p.into());
    }
    std::env::current_exe().context("cannot locate the vrloop executable")
}
