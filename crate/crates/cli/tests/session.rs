mod common;

use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use easy_iil::collect::{run_collect, CollectInputs, CollectSpec};
use easy_iil::log::read_log;
use easy_iil::replay::replay;
use easy_iil::session::{serve_session, ClientMsg, ServerFrame, SessionOptions};
use easy_iil::train::train_from_logs;
use easy_iil::ExperimentConfig;
use easy_iil_core::assistant::Demonstration;
use easy_iil_core::dataset::DeployLabel;
use easy_iil_core::env::{Env, SourceLabel};
use easy_iil_core::gating::ScriptedHuman;
use tungstenite::Message;

fn spec(label: DeployLabel, round: u32, first_id: u32, episodes: u32) -> CollectSpec {
    CollectSpec {
        label,
        round,
        first_id,
        episodes,
    }
}

fn headless(cfg: &ExperimentConfig, spec: &CollectSpec, inputs: CollectInputs) -> Vec<u8> {
    let mut human = ScriptedHuman::new(cfg.human_hysteresis);
    run_collect(cfg, 5, spec, inputs, &mut human, Vec::new()).unwrap().1
}

fn demo(cfg: &ExperimentConfig) -> (Vec<u8>, Demonstration) {
    let bytes = headless(cfg, &spec(DeployLabel::OneDemo, 0, 0, 1), CollectInputs::default());
    let log = read_log(&bytes[..]).unwrap();
    let d = easy_iil::collect::demo_from_log(&log, &Env::new(cfg.env.clone())).unwrap();
    (bytes, d)
}

fn served(cfg: &ExperimentConfig, spec: &CollectSpec, inputs: CollectInputs, opts: SessionOptions) -> (u16, thread::JoinHandle<Vec<u8>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let (cfg, spec) = (cfg.clone(), *spec);
    let h = thread::spawn(move || serve_session(&cfg, 5, &spec, inputs, listener, opts, Vec::new()).unwrap().1);
    (port, h)
}

fn unpaced() -> SessionOptions {
    SessionOptions {
        tick_hz: 0.0,
        wait_for_client: false,
    }
}

#[test]
fn served_without_clients_matches_headless() {
    let cfg = common::tiny();
    let (one_bytes, d) = demo(&cfg);
    let (_, h) = served(&cfg, &spec(DeployLabel::OneDemo, 0, 0, 1), CollectInputs::default(), unpaced());
    assert_eq!(h.join().unwrap(), one_bytes);

    let rest = spec(DeployLabel::RestDemo, 0, 1, 2);
    let inputs = CollectInputs { demo: Some(d.clone()), novice: None };
    let want = headless(&cfg, &rest, inputs.clone());
    let (_, h) = served(&cfg, &rest, inputs, unpaced());
    assert_eq!(h.join().unwrap(), want);

    // A correction round needs a novice; any checkpoint will do.
    let logs = [read_log(&one_bytes[..]).unwrap(), read_log(&want[..]).unwrap()];
    let ck = train_from_logs(&logs, 0, None).unwrap().0;
    let corr = spec(DeployLabel::Correction, 1, 3, 2);
    let inputs = CollectInputs {
        demo: Some(d),
        novice: Some(ck.policy().unwrap()),
    };
    let want = headless(&cfg, &corr, inputs.clone());
    let (_, h) = served(&cfg, &corr, inputs, unpaced());
    assert_eq!(h.join().unwrap(), want);
    assert!(replay(&read_log(&want[..]).unwrap()).clean());
}

type Client = tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>;

fn connect(port: u16) -> Client {
    for _ in 0..200 {
        if let Ok((ws, _)) = tungstenite::connect(format!("ws://127.0.0.1:{port}")) {
            return ws;
        }
        thread::sleep(Duration::from_millis(10));
    }
    panic!("server never came up");
}

fn send(ws: &mut Client, msg: &ClientMsg) {
    ws.send(Message::text(serde_json::to_string(msg).unwrap())).unwrap();
}

/// Read frames until the server closes or `stop` says so.
fn read_until(ws: &mut Client, mut stop: impl FnMut(&ServerFrame) -> bool) -> Vec<ServerFrame> {
    let mut frames = Vec::new();
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let f: ServerFrame = serde_json::from_str(t.as_str()).unwrap();
                let done = stop(&f);
                frames.push(f);
                if done {
                    return frames;
                }
            }
            Ok(Message::Close(_)) | Err(_) => return frames,
            Ok(_) => {}
        }
    }
}

#[test]
fn claim_and_ten_teleops_give_ten_human_actions() {
    let cfg = common::tiny();
    let (_, d) = demo(&cfg);
    let opts = SessionOptions {
        tick_hz: 100.0,
        wait_for_client: true,
    };
    let inputs = CollectInputs { demo: Some(d), novice: None };
    let (port, h) = served(&cfg, &spec(DeployLabel::RestDemo, 0, 1, 2), inputs, opts);
    let mut ws = connect(port);
    send(&mut ws, &ClientMsg::Claim);
    for _ in 0..10 {
        send(&mut ws, &ClientMsg::Teleop { dx: 0.0, dy: 0.0, dtheta: 0.0, grip: 0.0 });
    }
    send(&mut ws, &ClientMsg::Release);
    let frames = read_until(&mut ws, |f| matches!(f, ServerFrame::Event { event, .. } if event == "session_end"));
    drop(ws);
    let bytes = h.join().unwrap();

    let log = read_log(&bytes[..]).unwrap();
    let human: usize = log
        .episodes
        .iter()
        .map(|e| e.steps.iter().filter(|s| s.action.source == SourceLabel::Human).count())
        .sum();
    assert_eq!(human, 10);
    let ui: usize = log.episodes.iter().map(|e| e.end.ui_steps.len()).sum();
    assert_eq!(ui, 10);
    assert!(replay(&log).clean());

    let events: Vec<&str> = frames
        .iter()
        .filter_map(|f| match f {
            ServerFrame::Event { event, .. } => Some(event.as_str()),
            _ => None,
        })
        .collect();
    for e in ["connected", "claimed", "released", "episode_start", "episode_end", "session_end"] {
        assert!(events.contains(&e), "missing {e} in {events:?}");
    }
    let ticks: Vec<u64> = frames
        .iter()
        .filter_map(|f| match f {
            ServerFrame::State(s) => Some(s.tick),
            _ => None,
        })
        .collect();
    assert!(!ticks.is_empty() && ticks.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn malformed_commands_get_error_frames() {
    let cfg = common::tiny();
    let opts = SessionOptions {
        tick_hz: 50.0,
        wait_for_client: true,
    };
    let (port, h) = served(&cfg, &spec(DeployLabel::OneDemo, 0, 0, 1), CollectInputs::default(), opts);
    let mut ws = connect(port);
    ws.send(Message::text("{not json")).unwrap();
    let frames = read_until(&mut ws, |f| matches!(f, ServerFrame::Error { .. }));
    assert!(matches!(frames.last(), Some(ServerFrame::Error { .. })));
    ws.send(Message::text(r#"{"type":"teleop","dx":1.5,"dy":0,"dtheta":0,"grip":0}"#)).unwrap();
    let frames = read_until(&mut ws, |f| matches!(f, ServerFrame::Error { .. }));
    match frames.last() {
        Some(ServerFrame::Error { message }) => assert!(message.contains("dx"), "{message}"),
        other => panic!("{other:?}"),
    }
    // Teleop without a claim is refused too.
    send(&mut ws, &ClientMsg::Teleop { dx: 0.0, dy: 0.0, dtheta: 0.0, grip: 0.0 });
    let frames = read_until(&mut ws, |f| matches!(f, ServerFrame::Error { .. }));
    assert!(matches!(frames.last(), Some(ServerFrame::Error { .. })));
    drop(ws);
    let bytes = h.join().unwrap();
    assert!(replay(&read_log(&bytes[..]).unwrap()).clean());
}

#[test]
fn client_messages_parse_and_validate() {
    assert_eq!(ClientMsg::parse(r#"{"type":"claim"}"#), Ok(ClientMsg::Claim));
    assert_eq!(ClientMsg::parse(r#"{"type":"release"}"#), Ok(ClientMsg::Release));
    assert_eq!(
        ClientMsg::parse(r#"{"type":"teleop","dx":-1,"dy":1,"dtheta":0.5,"grip":0}"#),
        Ok(ClientMsg::Teleop { dx: -1.0, dy: 1.0, dtheta: 0.5, grip: 0.0 })
    );
    assert!(ClientMsg::parse(r#"{"type":"teleop","dx":0,"dy":0,"dtheta":-1.01,"grip":0}"#).is_err());
    assert!(ClientMsg::parse(r#"{"type":"dance"}"#).is_err());
}
