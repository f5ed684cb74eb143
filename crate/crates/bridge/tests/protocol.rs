use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use awarenav::grid::GridIndex;
use awarenav::sim::{Scenario, ScenarioConfig};
use awarenav_bridge::protocol::{AckStatus, Command, ServerBody, ServerMessage};
use awarenav_bridge::{BridgeServer, ClientCommand, Session};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

const SCENARIO: &str = r#"{
  "name": "bridge",
  "map": { "empty": { "width": 10, "height": 10 } },
  "start": [0, 0],
  "goal": [9, 0],
  "pedestrians": [
    { "kind": { "type": "random_walk" }, "start": [3, 3], "g_true": -1 },
    { "kind": { "type": "random_walk" }, "start": [6, 4], "g_true": -1 }
  ],
  "belief": { "k_particles": 300 },
  "solver": { "k_scenarios": 30, "max_trials": 20, "time_budget_ms": 10000 }
}"#;

fn scenario() -> Arc<Scenario> {
    let cfg = ScenarioConfig::from_json(SCENARIO).unwrap();
    Arc::new(Scenario::from_config(cfg, Path::new(".")).unwrap())
}

fn session(paused: bool) -> Session {
    Session::new(scenario(), Path::new("."), 11, paused).unwrap()
}

fn cmd(id: u64, c: Command) -> ClientCommand {
    ClientCommand::new(id, c)
}

fn state_ticks(msgs: &[ServerMessage]) -> Vec<u32> {
    msgs.iter()
        .filter_map(|m| match m.body {
            ServerBody::State { tick, .. } => Some(tick),
            _ => None,
        })
        .collect()
}

fn status(m: &ServerMessage) -> AckStatus {
    match &m.body {
        ServerBody::Ack { status, .. } => *status,
        other => panic!("expected ack, got {other:?}"),
    }
}

#[test]
fn pause_then_three_steps_gives_three_states() {
    let mut s = session(false);
    let mut out = Vec::new();
    let r = s.handle(cmd(1, Command::Pause));
    assert_eq!(status(&r.ack), AckStatus::Applied);
    out.extend(r.broadcast);
    for k in 0..3 {
        let r = s.handle(cmd(2 + k, Command::Step));
        assert_eq!(status(&r.ack), AckStatus::Applied);
        out.extend(r.broadcast);
    }
    assert_eq!(state_ticks(&out), vec![1, 2, 3]);
}

#[test]
fn gaze_toggle_shows_next_state_and_latches() {
    let mut s = session(true);
    let r = s.handle(cmd(1, Command::ToggleGaze { id: 0, on: true }));
    assert_eq!(status(&r.ack), AckStatus::Applied);
    let gaze_of = |m: &ServerMessage| match &m.body {
        ServerBody::State { peds, .. } => (peds[0].gaze, peds[0].latched),
        _ => unreachable!(),
    };
    assert!(gaze_of(&s.state_message()).0);
    // two ticks of 0.75/0.22 s exceed the 5 s threshold
    let mut latched = Vec::new();
    for k in 0..2 {
        let r = s.handle(cmd(2 + k, Command::Step));
        latched.push(gaze_of(&r.broadcast[0]).1);
    }
    assert_eq!(latched, vec![false, true]);
}

#[test]
fn bad_targets_are_rejected() {
    let mut s = session(true);
    let occupied = s.handle(cmd(1, Command::SetPedTarget { id: 0, cell: GridIndex::new(6, 4) }));
    assert_eq!(status(&occupied.ack), AckStatus::Rejected);
    let robot = s.handle(cmd(2, Command::SetPedTarget { id: 0, cell: GridIndex::new(0, 0) }));
    assert_eq!(status(&robot.ack), AckStatus::Rejected);
    let unknown = s.handle(cmd(3, Command::ToggleGaze { id: 9, on: true }));
    assert_eq!(status(&unknown.ack), AckStatus::Rejected);
    let ok = s.handle(cmd(4, Command::SetPedTarget { id: 0, cell: GridIndex::new(5, 5) }));
    assert_eq!(status(&ok.ack), AckStatus::Applied);
    let speed = s.handle(cmd(5, Command::SetSpeed { ticks_per_s: 0.0 }));
    assert_eq!(status(&speed.ack), AckStatus::Rejected);
}

fn script() -> Vec<ClientCommand> {
    vec![
        cmd(1, Command::Pause),
        cmd(2, Command::Step),
        cmd(3, Command::ToggleGaze { id: 1, on: true }),
        cmd(4, Command::Step),
        cmd(5, Command::SetPedTarget { id: 0, cell: GridIndex::new(2, 1) }),
        cmd(6, Command::Step),
        cmd(7, Command::Step),
        cmd(8, Command::Reset { scenario: None, seed: Some(3) }),
        cmd(9, Command::Step),
    ]
}

fn replay() -> Vec<String> {
    let mut s = session(true);
    let mut out = vec![s.state_message().to_json()];
    for c in script() {
        let r = s.handle(c);
        out.push(r.ack.to_json());
        out.extend(r.broadcast.iter().map(ServerMessage::to_json));
    }
    out
}

#[test]
fn replay_is_byte_identical() {
    let a = replay();
    assert_eq!(a, replay());
    let eps: Vec<u64> = a.iter().map(|t| serde_json::from_str::<ServerMessage>(t).unwrap().episode).collect();
    assert_eq!(*eps.last().unwrap(), 1);
}

#[test]
fn ticks_increase_until_episode_end() {
    let mut s = session(true);
    let mut ticks = Vec::new();
    let mut ended = false;
    for k in 0..200 {
        let r = s.handle(cmd(k, Command::Step));
        if status(&r.ack) == AckStatus::Rejected {
            break;
        }
        for m in &r.broadcast {
            assert_eq!(m.v, 1);
            match &m.body {
                ServerBody::State { tick, .. } => ticks.push(*tick),
                ServerBody::EpisodeEnd { .. } => ended = true,
                _ => {}
            }
        }
    }
    assert!(ended);
    assert!(ticks.windows(2).all(|w| w[0] < w[1]));
}

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(20), ws.next())
            .await
            .expect("server replied in time")
            .expect("stream open")
            .expect("frame ok");
        if let Message::Text(t) = frame {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn send(ws: &mut Ws, text: String) {
    ws.send(Message::text(text)).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn websocket_session() {
    let server = BridgeServer::start("127.0.0.1:0", session(true)).await.unwrap();
    let url = format!("ws://{}", server.local_addr());
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();

    let hello = recv(&mut ws).await;
    assert!(matches!(hello.body, ServerBody::State { tick: 0, paused: true, .. }));

    let mut states = Vec::new();
    for k in 0..3 {
        send(&mut ws, cmd(k, Command::Step).to_json()).await;
        let ack = recv(&mut ws).await;
        assert!(matches!(ack.body, ServerBody::Ack { command_id, status: AckStatus::Applied, .. } if command_id == k));
        states.push(recv(&mut ws).await);
    }
    assert_eq!(state_ticks(&states), vec![1, 2, 3]);

    send(&mut ws, "{\"v\":1,\"type\":".into()).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Error { .. }));

    send(&mut ws, cmd(10, Command::SetPedTarget { id: 7, cell: GridIndex::new(1, 1) }).to_json()).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Ack { status: AckStatus::Rejected, .. }));

    send(&mut ws, r#"{"v":2,"command_id":11,"type":"pause"}"#.into()).await;
    let closed = loop {
        match tokio::time::timeout(Duration::from_secs(20), ws.next()).await.unwrap() {
            Some(Ok(Message::Close(frame))) => break frame,
            Some(Ok(_)) => continue,
            other => panic!("expected close, got {other:?}"),
        }
    };
    let reason = closed.expect("close frame").reason.to_string();
    assert!(reason.contains("version"), "{reason}");
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn running_server_broadcasts_to_every_client() {
    let server = BridgeServer::start("127.0.0.1:0", session(true)).await.unwrap();
    let url = format!("ws://{}", server.local_addr());
    let (mut a, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let (mut b, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    recv(&mut a).await;
    recv(&mut b).await;
    send(&mut a, cmd(1, Command::SetSpeed { ticks_per_s: 20.0 }).to_json()).await;
    recv(&mut a).await;
    send(&mut a, cmd(2, Command::Resume).to_json()).await;
    assert!(matches!(recv(&mut a).await.body, ServerBody::Ack { .. }));
    let mut ta = Vec::new();
    while ta.len() < 2 {
        if let ServerBody::State { tick, .. } = recv(&mut a).await.body {
            ta.push(tick);
        }
    }
    let mut tb = Vec::new();
    while tb.len() < 2 {
        if let ServerBody::State { tick, .. } = recv(&mut b).await.body {
            tb.push(tick);
        }
    }
    assert_eq!(ta, vec![1, 2]);
    assert_eq!(tb, vec![1, 2]);
    server.shutdown().await;
}
