mod common;

use std::io::{BufRead, BufReader, Cursor, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use scenemem::provider::{self, EndpointProvider, Provider, Response, SyntheticProvider};
use scenemem::synth::{presets, NoiseModel, World};
use scenemem_core::{AssociationOracle, FeatureProbe, PixelRect};

fn spawn_server(world: World, connections: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let mut p = SyntheticProvider::new(world);
        for stream in listener.incoming().take(connections) {
            let stream = stream.unwrap();
            let reader = BufReader::new(stream.try_clone().unwrap());
            provider::serve_connection(&mut p, reader, stream).unwrap();
        }
    });
    addr
}

fn kitchen_world() -> World {
    World::new(presets::kitchen(2, NoiseModel::default())).unwrap()
}

#[test]
fn endpoint_matches_builtin() {
    let world = kitchen_world();
    let addr = spawn_server(world.clone(), 1);
    let mut remote = EndpointProvider::connect(&addr).unwrap();
    let mut local = SyntheticProvider::new(world.clone());
    let mut compared = 0;
    for frame in [0u64, 12, 30, 79] {
        let (obs, _, _) = world.observe(frame);
        let mut rects: Vec<PixelRect> = obs.detections.iter().map(|o| o.detection.bbox).collect();
        rects.push(PixelRect::new(0.0, 0.0, 40.5, 33.25));
        for r in &rects {
            let a = local.embed_region(frame, r).unwrap();
            let b = remote.embed_region(frame, r).unwrap();
            for (x, y) in a.clip.iter().zip(&b.clip).chain(a.dino.iter().zip(&b.dino)) {
                assert!((x - y).abs() <= 1e-5);
            }
            assert_eq!((a.clip.len(), a.dino.len()), (b.clip.len(), b.dino.len()));
            compared += 1;
        }
    }
    assert!(compared > 10);

    for ann in world.annotations() {
        let frame = (ann.timestamp_s / world.spec.frame_dt).floor() as u64;
        let (obs, _, _) = world.observe(frame);
        for o in &obs.detections {
            let r = o.detection.bbox;
            assert_eq!(local.is_target(frame, &r, &ann.text).unwrap(), remote.is_target(frame, &r, &ann.text).unwrap());
        }
    }
    let v = remote.embed_text("where is the green cup").unwrap();
    let w = local.embed_text("where is the green cup").unwrap();
    assert!(v.iter().zip(&w).all(|(a, b)| (a - b).abs() <= 1e-6));

    // errors travel back as errors
    assert!(remote.embed_region(500, &PixelRect::new(0.0, 0.0, 1.0, 1.0)).is_err());
    assert!(remote.is_target(3, &PixelRect::new(0.0, 0.0, 1.0, 1.0), "C juggles the cup").is_err());
    assert!(remote.embed_text("a sofa").is_err());
    // and the connection is still usable
    assert!(remote.embed_text("bowl").is_ok());
}

#[test]
fn malformed_lines_keep_the_connection_open() {
    let addr = spawn_server(kitchen_world(), 1);
    let stream = TcpStream::connect(&addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let mut ask = |line: &str| -> Response {
        writer.write_all(line.as_bytes()).unwrap();
        writer.write_all(b"\n").unwrap();
        let mut buf = String::new();
        reader.read_line(&mut buf).unwrap();
        serde_json::from_str(&buf).unwrap()
    };
    for bad in [
        "not json",
        r#"{"kind":"embed_region"}"#,
        r#"{"kind":"embed_region","frame_id":"x","bbox2d":["0","0","1","1"]}"#,
        r#"{"kind":"embed_region","frame_id":"1","bbox2d":["0","0","NaN","1"]}"#,
        r#"{"kind":"embed_region","frame_id":"1","bbox2d":[0,0,1,1]}"#,
        r#"{"kind":"teleport","frame_id":"1"}"#,
        r#"{"kind":"embed_text","text":"cup","extra":1}"#,
    ] {
        assert!(matches!(ask(bad), Response::Error { .. }), "{bad}");
    }
    assert!(matches!(ask(r#"{"kind":"embed_text","text":"cup"}"#), Response::Ok { vector: Some(_), .. }));
}

#[test]
fn golden_transcript() {
    let world = World::new(presets::cube(0)).unwrap();
    let mut p = SyntheticProvider::new(world.clone());
    let input = concat!(
        r#"{"kind":"embed_text","text":"the cube"}"#,
        "\n\n",
        r#"{"kind":"is_target","frame_id":"0","region":["0","0","10","10"],"text":"C opens the cube"}"#,
        "\n",
        r#"{"kind":"embed_region","frame_id":"0","bbox2d":["0","0","4","4"]}"#,
        "\n",
        "{\n",
    );
    let mut out = Vec::new();
    provider::serve_connection(&mut p, Cursor::new(input), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let clip = provider::encode_vector(&world.features[0].clip);
    assert_eq!(lines[0], format!(r#"{{"status":"ok","vector":"{clip}"}}"#));
    assert_eq!(
        lines[1],
        r#"{"status":"error","message":"association oracle unavailable: no scripted action \"C opens the cube\" at frame 0"}"#
    );
    let bg = (provider::encode_vector(&world.background.clip), provider::encode_vector(&world.background.dino));
    assert_eq!(lines[2], format!(r#"{{"status":"ok","clip":"{}","dino":"{}"}}"#, bg.0, bg.1));
    assert!(lines[3].starts_with(r#"{"status":"error","message":"malformed request"#));
}

#[test]
fn vector_codec() {
    let v = vec![0.5, -1.25, 3.0e-3, 0.0];
    let s = provider::encode_vector(&v);
    let back = provider::decode_vector(&s).unwrap();
    assert!(v.iter().zip(&back).all(|(a, b)| (a - b).abs() <= 1e-7));
    assert_eq!(provider::decode_vector("AAAAAA==").unwrap(), vec![0.0]);
    assert!(provider::decode_vector("AAAA").is_err());
    assert!(provider::decode_vector("***").is_err());
}
