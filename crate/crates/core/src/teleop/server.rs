//! Websocket transport. The session thread owns the simulation and paces it
//! against the wall clock. One connection thread at a time reads commands
//! into an inbound queue and writes frames from an outbound queue. Frames
//! are dropped when the outbound queue is full, so the simulation never
//! waits on the network.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TryRecvError, TrySendError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;
use tungstenite::{Message, WebSocket};

use super::protocol::{parse_client, ClientMessage, Hello, ServerMessage};
use super::session::{Envelope, Session};
use crate::harness::{HarnessError, Scenario};

/// Frames buffered toward a slow client before new ones are dropped.
const OUTBOUND_CAPACITY: usize = 4;
/// Most control ticks run per pacing round when catching up.
const MAX_CATCH_UP: usize = 200;
const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

enum Inbound {
    Command(Envelope),
    /// Text that failed validation, with the reason.
    Rejected(String),
    Connected,
    Disconnected,
}

/// Handle to a running server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Starts serving `scenario` on `addr` (use port 0 for an ephemeral port).
pub fn serve(scenario: &Scenario, addr: &str) -> Result<ServerHandle, ServeError> {
    let session = Session::new(scenario)?;
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let tick = Arc::new(AtomicU64::new(0));
    let (in_tx, in_rx) = mpsc::channel();
    let (out_tx, out_rx) = mpsc::sync_channel(OUTBOUND_CAPACITY);
    let hello = session.hello();
    let period = Duration::from_secs_f64(1.0 / scenario.teleop.rate_hz);
    let speed = scenario.teleop.speed_factor;

    let owner = {
        let (shutdown, tick) = (shutdown.clone(), tick.clone());
        thread::Builder::new()
            .name("teleop-session".into())
            .spawn(move || run_session(session, in_rx, out_tx, period, speed, &shutdown, &tick))?
    };
    let conn = {
        let shutdown = shutdown.clone();
        thread::Builder::new()
            .name("teleop-conn".into())
            .spawn(move || accept_loop(listener, hello, in_tx, out_rx, &shutdown, &tick))?
    };
    log::info!("teleop listening on ws://{addr}");
    Ok(ServerHandle {
        addr,
        shutdown,
        threads: vec![owner, conn],
    })
}

fn run_session(
    mut session: Session,
    inbound: Receiver<Inbound>,
    outbound: SyncSender<String>,
    period: Duration,
    speed: f64,
    shutdown: &AtomicBool,
    tick: &AtomicU64,
) {
    let dt = session.dt();
    // Simulated time owed to the wall clock.
    let mut owed = 0.0;
    let mut last = Instant::now();
    let mut next_frame = Instant::now();
    while !shutdown.load(Ordering::SeqCst) {
        loop {
            match inbound.try_recv() {
                Ok(Inbound::Command(env)) => {
                    if let Err(e) = session.apply(env) {
                        let _ = outbound.try_send(ServerMessage::error(e).to_json());
                    }
                }
                Ok(Inbound::Rejected(e)) => {
                    let _ = outbound.try_send(ServerMessage::error(e).to_json());
                }
                Ok(Inbound::Connected) => {}
                Ok(Inbound::Disconnected) => session.disconnect(),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return,
            }
        }

        let now = Instant::now();
        owed += (now - last).as_secs_f64() * speed;
        last = now;
        let mut ran = 0;
        while owed >= dt && ran < MAX_CATCH_UP {
            owed -= dt;
            ran += 1;
            match session.step() {
                Ok(_) => {}
                Err(reason) => {
                    let msg = format!(
                        "run aborted: {}",
                        serde_json::to_string(&reason).unwrap_or_default()
                    );
                    let _ = outbound.try_send(ServerMessage::error(msg).to_json());
                }
            }
        }
        if ran == MAX_CATCH_UP {
            // Fell behind; slow down rather than spiral.
            owed = owed.min(dt);
        }
        tick.store(session.tick(), Ordering::SeqCst);

        if now >= next_frame {
            next_frame += period;
            if next_frame < now {
                next_frame = now + period;
            }
            match outbound.try_send(ServerMessage::State(session.frame()).to_json()) {
                Ok(()) | Err(TrySendError::Full(_)) => {}
                Err(TrySendError::Disconnected(_)) => return,
            }
        }
        thread::sleep(Duration::from_micros(500));
    }
}

fn accept_loop(
    listener: TcpListener,
    hello: Hello,
    inbound: Sender<Inbound>,
    outbound: Receiver<String>,
    shutdown: &AtomicBool,
    tick: &AtomicU64,
) {
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("operator connected from {peer}");
                let _ = inbound.send(Inbound::Connected);
                if let Err(e) = connection(stream, &hello, &inbound, &outbound, shutdown, tick) {
                    log::warn!("connection from {peer} ended: {e}");
                }
                let _ = inbound.send(Inbound::Disconnected);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                // Nobody listening; keep the frame queue from holding stale state.
                while outbound.try_recv().is_ok() {}
                thread::sleep(POLL);
            }
            Err(e) => {
                log::error!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn connection(
    stream: TcpStream,
    hello: &Hello,
    inbound: &Sender<Inbound>,
    outbound: &Receiver<String>,
    shutdown: &AtomicBool,
    tick: &AtomicU64,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;
    while outbound.try_recv().is_ok() {}
    ws.send(Message::text(ServerMessage::Hello(hello.clone()).to_json()))?;

    while !shutdown.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let received_tick = tick.load(Ordering::SeqCst);
                let event = match parse_client(text.as_str()) {
                    Ok(ClientMessage::Cmd { seq, cmd, .. }) => Inbound::Command(Envelope {
                        seq,
                        cmd,
                        received_tick,
                    }),
                    Err(e) => Inbound::Rejected(e.to_string()),
                };
                if inbound.send(event).is_err() {
                    break;
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = inbound.send(Inbound::Rejected(
                    "binary messages are not part of the protocol".into(),
                ));
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e),
        }
        flush_frames(&mut ws, outbound)?;
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

fn flush_frames(
    ws: &mut WebSocket<TcpStream>,
    outbound: &Receiver<String>,
) -> Result<(), tungstenite::Error> {
    loop {
        match outbound.try_recv() {
            Ok(frame) => ws.send(Message::text(frame))?,
            Err(_) => return Ok(()),
        }
    }
}
