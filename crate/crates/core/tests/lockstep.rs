use std::net::TcpListener;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrloop::armsim::{ArmConfig, SimulatedUser};
use vrloop::bridge::*;
use vrloop::tools::depths_from_dump;
use vrloop::whacapp::{GameConfig, WhacApp};

type Local = Loopback<AppEndpoint<WhacApp>>;

fn local_app() -> Local {
    Loopback::new(AppEndpoint::new(WhacApp::new(GameConfig::default()).unwrap()))
}

/// Play `rounds` full rounds with seeded random controls.
fn drive<T: Transport>(transport: T, seed: u64, rounds: u64) -> T {
    let mut session = Session::connect(transport, Hello::default()).unwrap();
    let mut user = SimulatedUser::new(&ArmConfig::default(), 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for round in 0..rounds {
        user.reset();
        session
            .reset_handshake(&EpisodeConfig::new().with("seed", seed + round))
            .unwrap();
        loop {
            let controls = std::array::from_fn(|_| rng.random::<f64>());
            let obs = session.step_exchange(user.step(&controls).unwrap()).unwrap();
            if obs.is_finished {
                break;
            }
        }
    }
    session.close().unwrap();
    session.into_transport()
}

fn frames_of(dump: &[u8], ty: MsgType) -> Vec<Vec<u8>> {
    read_dump(dump)
        .unwrap()
        .into_iter()
        .filter(|(m, _)| m.msg_type() == ty)
        .map(|(_, raw)| raw)
        .collect()
}

#[test]
fn identical_seeds_give_identical_observation_dumps() {
    let a = drive(Recorder::new(local_app()), 11, 2).take_dump();
    let b = drive(Recorder::new(local_app()), 11, 2).take_dump();
    let (oa, ob) = (frames_of(&a, MsgType::Observation), frames_of(&b, MsgType::Observation));
    assert_eq!(oa.len(), 2 * 1200);
    assert!(oa == ob, "observation dumps differ");
    assert_eq!(a, b);
    let c = drive(Recorder::new(local_app()), 12, 1).take_dump();
    assert_ne!(frames_of(&c, MsgType::Observation), oa[..1200].to_vec());
}

#[test]
fn tcp_session_matches_loopback_byte_for_byte() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut transport = StreamTransport::new(stream);
        let mut endpoint = AppEndpoint::new(WhacApp::new(GameConfig::default()).unwrap());
        serve_stream(&mut transport, &mut endpoint).unwrap();
        endpoint.app().records().len()
    });
    let stream = std::net::TcpStream::connect(addr).unwrap();
    let remote = drive(Recorder::new(StreamTransport::new(stream)), 5, 1).take_dump();
    assert_eq!(server.join().unwrap(), 1);
    let local = drive(Recorder::new(local_app()), 5, 1).take_dump();
    assert!(remote == local, "tcp and loopback sessions differ");
}

/// Re-run the requests of `dump` against a fresh application and return the
/// index of the first reply that differs from the recording.
fn first_divergence(dump: &[(Message, Vec<u8>)]) -> Option<usize> {
    let mut endpoint = AppEndpoint::new(WhacApp::new(GameConfig::default()).unwrap());
    let mut i = 0;
    while i < dump.len() {
        match endpoint.handle_frame(&dump[i].1) {
            Ok(Some(reply)) => {
                if dump.get(i + 1).map(|f| &f.1) != Some(&reply) {
                    return Some(i + 1);
                }
                i += 2;
            }
            Ok(None) => return None,
            Err(_) => return Some(i),
        }
    }
    None
}

#[test]
fn replay_diverges_exactly_at_injected_corruption() {
    let dump = read_dump(&drive(Recorder::new(local_app()), 3, 1).take_dump()).unwrap();
    assert_eq!(first_divergence(&dump), None);
    let updates: Vec<usize> = (0..dump.len())
        .filter(|&i| dump[i].0.msg_type() == MsgType::StateUpdate)
        .collect();
    for &k in [updates[0], updates[7], updates[600], updates[updates.len() - 1]].iter() {
        let mut corrupted = dump.clone();
        let Message::StateUpdate(mut u) = corrupted[k].0.clone() else {
            unreachable!()
        };
        u.controllers[0].position += Vector3::new(0.0, 0.0, 0.01);
        let msg = Message::StateUpdate(u);
        corrupted[k] = (msg.clone(), encode_frame(&msg).unwrap());
        assert_eq!(first_divergence(&corrupted), Some(k + 1), "corruption at frame {k}");
    }
}

#[test]
fn depths_from_dump_agree_with_application_records() {
    let rec = drive(Recorder::new(local_app()), 8, 2);
    let depths = depths_from_dump(rec.dump(), &GameConfig::default()).unwrap();
    let records = rec.inner().handler().app().records();
    assert_eq!(depths.len(), 2);
    for (d, r) in depths.iter().zip(records) {
        assert_eq!(d.len(), r.hammer_depths.len());
        for (a, b) in d.iter().zip(&r.hammer_depths) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
