use std::net::TcpStream;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use approx::assert_relative_eq;
use hoist_core::harness::metrics::line_deviation;
use hoist_core::harness::Scenario;
use hoist_core::teleop::*;
use nalgebra::Vector3;
use proptest::prelude::*;
use serde_json::json;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

fn passage() -> Scenario {
    Scenario::load(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../../scenarios/narrow_passage_teleop.toml"),
    )
    .unwrap()
}

fn env(seq: u64, cmd: TeleopCommand, tick: u64) -> Envelope {
    Envelope {
        seq: Some(seq),
        cmd,
        received_tick: tick,
    }
}

fn run_for(session: &mut Session, seconds: f64) {
    let ticks = (seconds / session.dt()).round() as usize;
    for _ in 0..ticks {
        session.step().unwrap();
    }
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

// ---------------------------------------------------------------- protocol

#[test]
fn client_messages_parse() {
    let msg = parse_client(
        r#"{"type":"cmd","v":1,"seq":7,"cmd":{"kind":"velocity","vx":0.1,"vy":0,"vz":-0.2}}"#,
    )
    .unwrap();
    assert_eq!(
        msg,
        ClientMessage::Cmd {
            v: 1,
            seq: Some(7),
            cmd: TeleopCommand::Velocity {
                vx: 0.1,
                vy: 0.0,
                vz: -0.2
            }
        }
    );
    let cases = [
        json!({"kind": "nudge", "dx": 0.0, "dy": 0.1, "dz": 0.0}),
        json!({"kind": "preset", "name": "line"}),
        json!({"kind": "preset", "name": null}),
        json!({"kind": "pause", "paused": true}),
        json!({"kind": "reset"}),
    ];
    for cmd in cases {
        let text = json!({"type": "cmd", "v": 1, "cmd": cmd}).to_string();
        let ClientMessage::Cmd { seq, .. } = parse_client(&text).unwrap();
        assert_eq!(seq, None);
    }
    let cmd = TeleopCommand::Preset {
        name: Some("line".into()),
    };
    assert_eq!(
        parse_client(&client_json(Some(3), cmd.clone())).unwrap(),
        ClientMessage::Cmd {
            v: 1,
            seq: Some(3),
            cmd
        }
    );
}

#[test]
fn client_messages_reject_bad_input() {
    assert!(matches!(
        parse_client("not json"),
        Err(ProtocolError::Json(_))
    ));
    assert!(matches!(
        parse_client(r#"{"type":"cmd","v":2,"cmd":{"kind":"reset"}}"#),
        Err(ProtocolError::Version(Some(2)))
    ));
    assert!(matches!(
        parse_client(r#"{"type":"cmd","cmd":{"kind":"reset"}}"#),
        Err(ProtocolError::Version(None))
    ));
    for bad in [
        r#"{"type":"cmd","v":1,"cmd":{"kind":"fly"}}"#,
        r#"{"type":"cmd","v":1,"cmd":{"kind":"velocity","vx":1}}"#,
        r#"{"type":"cmd","v":1,"cmd":{"kind":"pause","paused":true,"extra":1}}"#,
        r#"{"type":"state","v":1}"#,
        r#"{"type":"cmd","v":1,"cmd":{"kind":"velocity","vx":1e999,"vy":0,"vz":0}}"#,
    ] {
        assert!(
            matches!(
                parse_client(bad),
                Err(ProtocolError::Schema(_) | ProtocolError::Json(_))
            ),
            "{bad}"
        );
    }
}

#[test]
fn server_messages_round_trip() {
    let mut s = Session::new(&passage()).unwrap();
    run_for(&mut s, 0.05);
    let hello = ServerMessage::Hello(s.hello());
    assert_eq!(parse_server(&hello.to_json()).unwrap(), hello);
    let state = ServerMessage::State(s.frame());
    let text = state.to_json();
    assert!(text.len() < MAX_FRAME_BYTES);
    assert_eq!(parse_server(&text).unwrap(), state);
    let err = ServerMessage::error("nope");
    assert_eq!(parse_server(&err.to_json()).unwrap(), err);

    let ServerMessage::Hello(h) = hello else {
        unreachable!()
    };
    assert_eq!(h.n, 3);
    assert!(h.presets.contains(&"line".to_string()) && h.presets.contains(&"triangle".to_string()));
    assert_eq!(h.obstacles.len(), 2);
}

#[test]
fn server_parser_checks_consistency() {
    let s = Session::new(&passage()).unwrap();
    let mut frame = s.frame();
    frame.mu.pop();
    assert!(parse_server(&ServerMessage::State(frame).to_json()).is_err());
    let mut frame = s.frame();
    if let Some(h) = frame.halfspaces.first_mut() {
        h.robot = 9;
        assert!(parse_server(&ServerMessage::State(frame).to_json()).is_err());
    }
    let huge = format!(
        r#"{{"type":"error","v":1,"message":"{}"}}"#,
        "x".repeat(MAX_FRAME_BYTES)
    );
    assert!(parse_server(&huge).is_err());
}

// ---------------------------------------------------------------- smoother

proptest! {
    #[test]
    fn smoother_respects_limits(
        cmds in prop::collection::vec((prop::array::uniform3(-2.0..2.0f64), 1usize..400, any::<bool>()), 1..8),
    ) {
        let limits = SmootherLimits::default();
        let mut s = Smoother::new(Vector3::zeros(), limits);
        let dt = 1e-3;
        let mut prev_a = Vector3::zeros();
        for (v, ticks, nudge) in cmds {
            if nudge {
                s.nudge(Vector3::from(v) * 0.1);
            } else {
                let set = s.set_velocity(Vector3::from(v));
                prop_assert!(set.norm() <= limits.max_speed + 1e-12);
            }
            for _ in 0..ticks {
                s.advance(dt);
                let r = s.setpoint(1);
                prop_assert!(r.ddp0r.norm() <= limits.max_accel + 1e-9);
                // Jerk limit holds except where the acceleration clamp bites.
                prop_assert!((r.ddp0r - prev_a).norm() <= limits.max_jerk * dt + 1e-9);
                prop_assert!(r.dp0r.norm() <= limits.max_speed + limits.max_accel * dt * 4.0);
                prev_a = r.ddp0r;
            }
        }
    }
}

#[test]
fn smoother_reaches_commanded_velocity_and_target() {
    let mut s = Smoother::new(Vector3::zeros(), SmootherLimits::default());
    s.set_velocity(Vector3::new(0.3, 0.0, 0.0));
    for _ in 0..5000 {
        s.advance(1e-3);
    }
    assert_relative_eq!(
        s.setpoint(1).dp0r,
        Vector3::new(0.3, 0.0, 0.0),
        epsilon = 1e-6
    );
    let stop = s.position();
    s.hold();
    s.nudge(Vector3::new(0.0, 0.1, 0.0));
    let mut last_x = stop.x;
    for _ in 0..15000 {
        s.advance(1e-3);
        // Brakes without backing up along the old direction of travel.
        assert!(
            s.position().x >= last_x - 1e-6,
            "{} {}",
            s.position().x - stop.x,
            last_x - stop.x
        );
        last_x = s.position().x;
    }
    let held = s.hold_point().unwrap();
    // Braking from 0.3 m/s at 1 m/s² takes at least 4.5 cm.
    assert!(
        held.x - stop.x > 0.045 && held.x - stop.x < 0.1,
        "{}",
        held.x - stop.x
    );
    assert_relative_eq!(held.y, stop.y + 0.1, epsilon = 1e-9);
    assert_relative_eq!(s.position(), held, epsilon = 1e-4);
    assert!(s.setpoint(1).dp0r.norm() < 1e-4);
}

#[test]
fn smoother_holds_start_and_follows_nudges() {
    let mut s = Smoother::new(Vector3::new(1.0, 2.0, 3.0), SmootherLimits::default());
    s.nudge(Vector3::new(0.0, 0.0, 0.05));
    for _ in 0..10000 {
        s.advance(1e-3);
    }
    assert_relative_eq!(s.position(), Vector3::new(1.0, 2.0, 3.05), epsilon = 1e-4);
    s.retarget(Vector3::new(1.0, 2.0, 3.0));
    for _ in 0..10000 {
        s.advance(1e-3);
    }
    assert_relative_eq!(s.position(), Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-4);
}

// ---------------------------------------------------------------- session

#[test]
fn session_without_commands_holds_home() {
    let mut s = Session::new(&passage()).unwrap();
    run_for(&mut s, 2.0);
    let f = s.frame();
    assert_relative_eq!(
        vec3(f.reference_position),
        Vector3::new(0.0, 0.0, 1.0),
        epsilon = 1e-12
    );
    assert!((vec3(f.payload_position) - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-3);
    assert_eq!(f.velocity_command, [0.0; 3]);
    assert!(f.last_command.is_none());
}

#[test]
fn line_preset_converges_in_session() {
    let mut s = Session::new(&passage()).unwrap();
    s.apply(env(
        1,
        TeleopCommand::Preset {
            name: Some("line".into()),
        },
        0,
    ))
    .unwrap();
    run_for(&mut s, 3.0);
    let f = s.frame();
    let robots: Vec<_> = f.robots.iter().copied().map(vec3).collect();
    assert!(
        line_deviation(&robots) < 0.02,
        "{}",
        line_deviation(&robots)
    );
    assert_eq!(f.preset.as_deref(), Some("line"));
}

#[test]
fn unknown_preset_is_rejected_without_effect() {
    let mut s = Session::new(&passage()).unwrap();
    s.apply(env(
        1,
        TeleopCommand::Preset {
            name: Some("line".into()),
        },
        0,
    ))
    .unwrap();
    let err = s
        .apply(env(
            2,
            TeleopCommand::Preset {
                name: Some("spiral".into()),
            },
            0,
        ))
        .unwrap_err();
    assert!(err.contains("spiral"), "{err}");
    assert_eq!(s.operator().preset(), Some("line"));
    assert_eq!(s.frame().last_command.unwrap().seq, Some(1));
}

#[test]
fn disconnect_stops_and_holds() {
    let mut s = Session::new(&passage()).unwrap();
    s.apply(env(
        1,
        TeleopCommand::Velocity {
            vx: 0.3,
            vy: 0.0,
            vz: 0.0,
        },
        0,
    ))
    .unwrap();
    run_for(&mut s, 2.0);
    assert!(s.frame().reference_velocity[0] > 0.25);
    s.disconnect();
    run_for(&mut s, 3.0);
    let a = s.frame();
    run_for(&mut s, 1.0);
    let b = s.frame();
    assert_eq!(a.velocity_command, [0.0; 3]);
    assert!(vec3(b.reference_velocity).norm() < 1e-3);
    assert!((vec3(a.reference_position) - vec3(b.reference_position)).norm() < 1e-3);
    assert!((vec3(b.payload_position) - vec3(b.reference_position)).norm() < 5e-3);
}

#[test]
fn pause_freezes_the_simulation() {
    let mut s = Session::new(&passage()).unwrap();
    s.apply(env(1, TeleopCommand::Pause { paused: true }, 0))
        .unwrap();
    assert!(!s.step().unwrap());
    assert_eq!(s.tick(), 0);
    assert!(s.frame().paused);
    s.apply(env(2, TeleopCommand::Pause { paused: false }, 0))
        .unwrap();
    assert!(s.step().unwrap());
    assert_eq!(s.tick(), 1);
}

#[test]
fn reset_returns_home() {
    let mut s = Session::new(&passage()).unwrap();
    s.apply(env(
        1,
        TeleopCommand::Nudge {
            dx: 0.0,
            dy: 0.2,
            dz: 0.0,
        },
        0,
    ))
    .unwrap();
    run_for(&mut s, 3.0);
    assert!(s.frame().payload_position[1] > 0.15);
    s.apply(env(2, TeleopCommand::Reset, s.tick())).unwrap();
    run_for(&mut s, 5.0);
    assert!(s.frame().payload_position[1].abs() < 5e-3);
}

// ---------------------------------------------------------------- websocket

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn connect(addr: std::net::SocketAddr) -> Client {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(20))).unwrap();
    }
    ws
}

/// Reads one text message, if any arrives before the timeout. Every message
/// must pass schema validation.
fn read(ws: &mut Client) -> Option<ServerMessage> {
    match ws.read() {
        Ok(Message::Text(t)) => {
            Some(parse_server(t.as_str()).unwrap_or_else(|e| panic!("invalid frame: {e}: {t}")))
        }
        Ok(_) => None,
        Err(tungstenite::Error::Io(e))
            if matches!(
                e.kind(),
                std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
            ) =>
        {
            None
        }
        Err(e) => panic!("read failed: {e}"),
    }
}

fn read_until<T>(
    ws: &mut Client,
    within: Duration,
    mut pick: impl FnMut(&ServerMessage) -> Option<T>,
) -> T {
    let end = Instant::now() + within;
    while Instant::now() < end {
        if let Some(m) = read(ws) {
            if let Some(t) = pick(&m) {
                return t;
            }
        }
    }
    panic!("nothing matched within {within:?}");
}

#[test]
fn loopback_tracks_commands() {
    let server = serve(&passage(), "127.0.0.1:0").unwrap();
    let mut ws = connect(server.addr);
    let hello = read_until(&mut ws, Duration::from_secs(5), |m| match m {
        ServerMessage::Hello(h) => Some(h.clone()),
        _ => None,
    });
    assert_eq!(hello.v, PROTOCOL_VERSION);
    let dt = hello.dt;

    // Velocity square wave, then a preset switch.
    let mut script: Vec<TeleopCommand> = (0..6)
        .map(|k| {
            let vx = if k % 2 == 0 { 0.2 } else { -0.2 };
            TeleopCommand::Velocity {
                vx,
                vy: 0.0,
                vz: 0.0,
            }
        })
        .collect();
    script.push(TeleopCommand::velocity(Vector3::zeros()));
    script.push(TeleopCommand::Preset {
        name: Some("line".into()),
    });

    let mut frames = 0;
    for (seq, cmd) in script.iter().enumerate() {
        let seq = seq as u64 + 1;
        ws.send(Message::text(client_json(Some(seq), cmd.clone())))
            .unwrap();
        let frame = read_until(&mut ws, Duration::from_secs(5), |m| match m {
            ServerMessage::State(f)
                if f.last_command.as_ref().is_some_and(|c| c.seq == Some(seq)) =>
            {
                Some(f.clone())
            }
            ServerMessage::Error { message, .. } => panic!("server error: {message}"),
            _ => None,
        });
        frames += 1;
        let ack = frame.last_command.clone().unwrap();
        // Applied before the tick after it was read.
        assert!(
            ack.applied_tick >= ack.received_tick && ack.applied_tick - ack.received_tick <= 1,
            "{ack:?}"
        );
        assert!(frame.tick >= ack.applied_tick);
        match cmd {
            TeleopCommand::Velocity { vx, vy, vz } => {
                assert_eq!(frame.velocity_command, [*vx, *vy, *vz])
            }
            TeleopCommand::Preset { name } => assert_eq!(&frame.preset, name),
            _ => unreachable!(),
        }
        // Hold each level for a few frames.
        let until = frame.t + 0.2;
        read_until(&mut ws, Duration::from_secs(5), |m| match m {
            ServerMessage::State(f) if f.t >= until => Some(()),
            _ => None,
        });
    }
    assert_eq!(frames, script.len());

    // A malformed message gets an error frame, and the session keeps running.
    ws.send(Message::text(
        r#"{"type":"cmd","v":1,"cmd":{"kind":"warp"}}"#,
    ))
    .unwrap();
    let msg = read_until(&mut ws, Duration::from_secs(5), |m| match m {
        ServerMessage::Error { message, .. } => Some(message.clone()),
        _ => None,
    });
    assert!(msg.contains("warp") || msg.contains("variant"), "{msg}");
    ws.send(Message::text(client_json(
        Some(99),
        TeleopCommand::Preset {
            name: Some("spiral".into()),
        },
    )))
    .unwrap();
    read_until(&mut ws, Duration::from_secs(5), |m| match m {
        ServerMessage::Error { message, .. } if message.contains("spiral") => Some(()),
        _ => None,
    });
    let f = read_until(&mut ws, Duration::from_secs(5), |m| match m {
        ServerMessage::State(f) => Some(f.clone()),
        _ => None,
    });
    assert_eq!(f.preset.as_deref(), Some("line"));
    assert!(f.t > 0.0 && dt > 0.0);
    let _ = ws.close(None);
    server.stop();
}

#[test]
fn loopback_hold_without_client() {
    let server = serve(&passage(), "127.0.0.1:0").unwrap();
    // Commands from a first client, then it vanishes.
    {
        let mut ws = connect(server.addr);
        ws.send(Message::text(client_json(
            Some(1),
            TeleopCommand::Velocity {
                vx: 0.3,
                vy: 0.0,
                vz: 0.0,
            },
        )))
        .unwrap();
        read_until(&mut ws, Duration::from_secs(5), |m| match m {
            ServerMessage::State(f) if f.velocity_command[0] == 0.3 => Some(()),
            _ => None,
        });
        drop(ws);
    }
    std::thread::sleep(Duration::from_millis(300));
    let mut ws = connect(server.addr);
    let f = read_until(&mut ws, Duration::from_secs(5), |m| match m {
        ServerMessage::State(f) => Some(f.clone()),
        _ => None,
    });
    assert_eq!(f.velocity_command, [0.0; 3]);
    let x = f.reference_position[0];
    let later = read_until(&mut ws, Duration::from_secs(10), |m| match m {
        ServerMessage::State(g) if g.t > f.t + 2.5 => Some(g.clone()),
        _ => None,
    });
    // Braked to a stop near where the operator left it.
    assert!(vec3(later.reference_velocity).norm() < 1e-2);
    assert!((later.reference_position[0] - x).abs() < 0.15);
    server.stop();
}
