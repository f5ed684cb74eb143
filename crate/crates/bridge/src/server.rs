//! WebSocket transport. A dedicated thread owns the session; connection
//! tasks talk to it through channels.

use std::collections::BTreeMap;
use std::io;
use std::net::SocketAddr;
use std::sync::mpsc as std_mpsc;
use std::thread;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{parse_command, ClientCommand, ProtocolError, ServerBody, ServerMessage};
use crate::session::Session;

enum Inbound {
    Connect(u64, mpsc::UnboundedSender<String>),
    Disconnect(u64),
    Command(u64, ClientCommand),
    Shutdown,
}

const IDLE_POLL: Duration = Duration::from_millis(200);

fn sim_loop(mut session: Session, rx: std_mpsc::Receiver<Inbound>) {
    let mut clients: BTreeMap<u64, mpsc::UnboundedSender<String>> = BTreeMap::new();
    let broadcast = |clients: &BTreeMap<u64, mpsc::UnboundedSender<String>>, msgs: &[ServerMessage]| {
        for m in msgs {
            let text = m.to_json();
            for tx in clients.values() {
                let _ = tx.send(text.clone());
            }
        }
    };
    let mut next_tick = Instant::now();
    loop {
        let running = !session.paused() && !session.is_done();
        let wait = if running {
            next_tick.saturating_duration_since(Instant::now())
        } else {
            IDLE_POLL
        };
        match rx.recv_timeout(wait) {
            Ok(Inbound::Connect(id, tx)) => {
                let _ = tx.send(session.state_message().to_json());
                clients.insert(id, tx);
            }
            Ok(Inbound::Disconnect(id)) => {
                clients.remove(&id);
            }
            Ok(Inbound::Command(id, cmd)) => {
                let was_paused = session.paused();
                let reply = session.handle(cmd);
                if let Some(tx) = clients.get(&id) {
                    let _ = tx.send(reply.ack.to_json());
                }
                broadcast(&clients, &reply.broadcast);
                if was_paused && !session.paused() {
                    next_tick = Instant::now();
                }
            }
            Ok(Inbound::Shutdown) | Err(std_mpsc::RecvTimeoutError::Disconnected) => break,
            Err(std_mpsc::RecvTimeoutError::Timeout) => {
                if running && Instant::now() >= next_tick {
                    let msgs = session.tick().unwrap_or_else(|e| {
                        vec![ServerMessage::new(
                            session.episode_id(),
                            ServerBody::Error { message: e.to_string() },
                        )]
                    });
                    broadcast(&clients, &msgs);
                    next_tick = Instant::now() + Duration::from_secs_f64(1.0 / session.ticks_per_s());
                }
            }
        }
    }
}

async fn connection(stream: TcpStream, id: u64, inbound: std_mpsc::Sender<Inbound>) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    if inbound.send(Inbound::Connect(id, tx)).is_err() {
        return;
    }
    loop {
        tokio::select! {
            out = rx.recv() => match out {
                Some(text) => {
                    if sink.send(Message::text(text)).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            frame = source.next() => match frame {
                Some(Ok(Message::Text(text))) => match parse_command(&text) {
                    Ok(cmd) => {
                        let _ = inbound.send(Inbound::Command(id, cmd));
                    }
                    Err(e @ ProtocolError::VersionMismatch(_)) => {
                        let close = CloseFrame {
                            code: CloseCode::Protocol,
                            reason: e.to_string().into(),
                        };
                        let _ = sink.send(Message::Close(Some(close))).await;
                        break;
                    }
                    Err(e) => {
                        let msg = ServerMessage::new(0, ServerBody::Error { message: e.to_string() });
                        if sink.send(Message::text(msg.to_json())).await.is_err() {
                            break;
                        }
                    }
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = inbound.send(Inbound::Disconnect(id));
}

/// A running server.
pub struct BridgeServer {
    addr: SocketAddr,
    inbound: std_mpsc::Sender<Inbound>,
    accept: JoinHandle<()>,
    sim: Option<thread::JoinHandle<()>>,
}

impl BridgeServer {
    /// Binds `addr` and starts serving `session`.
    pub async fn start(addr: &str, session: Session) -> io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        let (tx, rx) = std_mpsc::channel();
        let sim = thread::Builder::new()
            .name("awarenav-sim".into())
            .spawn(move || sim_loop(session, rx))?;
        let accept_tx = tx.clone();
        let accept = tokio::spawn(async move {
            let mut next_id = 0u64;
            while let Ok((stream, _)) = listener.accept().await {
                tokio::spawn(connection(stream, next_id, accept_tx.clone()));
                next_id += 1;
            }
        });
        Ok(Self {
            addr: local,
            inbound: tx,
            accept,
            sim: Some(sim),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, then stops the simulation thread.
    pub async fn shutdown(mut self) {
        self.accept.abort();
        let _ = self.inbound.send(Inbound::Shutdown);
        if let Some(h) = self.sim.take() {
            let _ = tokio::task::spawn_blocking(move || h.join()).await;
        }
    }
}
