//! Ready-made worlds used by tests, the acceptance suite and `simulate`.

use scenemem_core::memory::FeatureDims;
use scenemem_core::{CameraIntrinsics, Vec3};

use super::{CameraKey, EventSpec, NoiseModel, ObjectSpec, Placement, RoomSpec, Verb, WorldSpec};

pub const PRESETS: [&str; 4] = ["cube", "static-room", "move", "kitchen"];

pub fn by_name(name: &str, seed: u64) -> Option<WorldSpec> {
    Some(match name {
        "cube" => cube(seed),
        "static-room" => static_room(seed),
        "move" => move_scene(seed),
        "kitchen" => kitchen(seed, NoiseModel::default()),
        _ => return None,
    })
}

fn dims() -> FeatureDims {
    FeatureDims { clip: 64, dino: 96, ctx: 32 }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn obj(name: &str, category: &str, size: [f64; 3], position: [f64; 2], on: Option<&str>) -> ObjectSpec {
    ObjectSpec {
        name: name.into(),
        category: category.into(),
        size: Vec3(size),
        position,
        on: on.map(Into::into),
        receptacle: false,
    }
}

fn receptacle(name: &str, category: &str, size: [f64; 3], position: [f64; 2]) -> ObjectSpec {
    ObjectSpec { receptacle: true, ..obj(name, category, size, position, None) }
}

fn event(t: f64, verb: Verb, object: &str, to: Option<(&str, [f64; 2])>) -> EventSpec {
    EventSpec { t, verb, object: object.into(), to: to.map(|(on, position)| Placement { on: on.into(), position }) }
}

/// One key per frame: a fixed viewpoint with a small deterministic sway.
fn swaying(frames: u32, eye: Vec3, target: Vec3, amp: f64) -> Vec<CameraKey> {
    (0..frames)
        .map(|k| {
            let t = k as f64;
            let d = v(amp * (0.37 * t).sin(), 0.6 * amp * (0.23 * t).sin(), 0.3 * amp * (0.51 * t).sin());
            CameraKey { frame: k, eye: eye + d, target }
        })
        .collect()
}

/// A single 0.4 m cube on the floor seen at close range from near-diagonal
/// azimuths, three rings of four views.
///
/// Views close to a face normal lose the far edge of the top face to distance
/// trimming; diagonal views keep every extreme of the box.
pub fn cube(seed: u64) -> WorldSpec {
    let frames = 12;
    let camera = (0..frames)
        .map(|k| {
            let ring = (k / 4) as f64;
            let a = (45.0 + 90.0 * (k % 4) as f64 + 8.0 * (ring - 1.0)).to_radians();
            CameraKey { frame: k, eye: v(1.6 * a.cos(), 1.6 * a.sin(), 1.2 + 0.2 * ring), target: v(0.0, 0.0, 0.2) }
        })
        .collect();
    WorldSpec {
        seed,
        intrinsics: CameraIntrinsics::new(300.0, 300.0, 160.0, 120.0, 320, 240).unwrap(),
        dims: dims(),
        frame_count: frames,
        frame_dt: 1.0,
        objects: vec![obj("cube", "cube", [0.4, 0.4, 0.4], [0.0, 0.0], None)],
        rooms: vec![RoomSpec { name: "room".into(), min: [-5.0, -5.0], max: [5.0, 5.0] }],
        camera,
        events: vec![],
        noise: NoiseModel::default(),
        settle_frames: 8,
        min_pixels: 30,
        min_visible_frac: 0.9,
        locate_queries: 0,
    }
}

/// A table holding three items plus a box on the floor, seen from ten views
/// along an arc.
pub fn static_room(seed: u64) -> WorldSpec {
    let frames = 10;
    let camera = (0..frames)
        .map(|k| {
            let a = (-0.5 + k as f64 / (frames - 1) as f64) * 1.6 - std::f64::consts::FRAC_PI_2;
            CameraKey { frame: k, eye: v(3.0 * a.cos(), 3.0 * a.sin(), 2.3), target: v(0.3, -0.1, 0.45) }
        })
        .collect();
    WorldSpec {
        seed,
        intrinsics: CameraIntrinsics::new(440.0, 440.0, 320.0, 240.0, 640, 480).unwrap(),
        dims: dims(),
        frame_count: frames,
        frame_dt: 1.0,
        objects: vec![
            receptacle("table", "table", [1.2, 0.8, 0.75], [0.0, 0.0]),
            obj("cup", "cup", [0.15, 0.15, 0.18], [-0.35, 0.1], Some("table")),
            obj("bottle", "bottle", [0.12, 0.12, 0.3], [0.0, 0.15], Some("table")),
            obj("book", "book", [0.28, 0.2, 0.08], [0.35, -0.1], Some("table")),
            obj("box", "box", [0.4, 0.3, 0.3], [1.3, -0.7], None),
        ],
        rooms: vec![RoomSpec { name: "room".into(), min: [-5.0, -5.0], max: [5.0, 5.0] }],
        camera,
        events: vec![],
        noise: NoiseModel::default(),
        settle_frames: 8,
        min_pixels: 30,
        min_visible_frac: 0.85,
        locate_queries: 0,
    }
}

/// Two tables; the cup is moved from the first to the second at t = 10.5.
pub fn move_scene(seed: u64) -> WorldSpec {
    let frames = 36;
    WorldSpec {
        seed,
        intrinsics: CameraIntrinsics::new(440.0, 440.0, 320.0, 240.0, 640, 480).unwrap(),
        dims: dims(),
        frame_count: frames,
        frame_dt: 1.0,
        objects: vec![
            receptacle("table_a", "table", [1.2, 0.8, 0.75], [-1.0, 0.0]),
            receptacle("table_b", "table", [1.2, 0.8, 0.75], [1.0, 0.0]),
            obj("cup", "cup", [0.15, 0.15, 0.18], [-1.0, 0.0], Some("table_a")),
        ],
        rooms: vec![RoomSpec { name: "room".into(), min: [-6.0, -6.0], max: [6.0, 6.0] }],
        camera: swaying(frames, v(0.0, -3.5, 2.4), v(0.0, 0.0, 0.5), 0.15),
        events: vec![event(10.5, Verb::Move, "cup", Some(("table_b", [1.0, 0.1])))],
        noise: NoiseModel::default(),
        settle_frames: 8,
        min_pixels: 30,
        min_visible_frac: 0.85,
        locate_queries: 0,
    }
}

/// Two tables, a shelf and a fridge with four small items and a ten-action
/// script of picks, placements, moves and door operations.
pub fn kitchen(seed: u64, noise: NoiseModel) -> WorldSpec {
    let frames = 80;
    WorldSpec {
        seed,
        intrinsics: CameraIntrinsics::new(440.0, 440.0, 320.0, 240.0, 640, 480).unwrap(),
        dims: dims(),
        frame_count: frames,
        frame_dt: 1.0,
        objects: vec![
            receptacle("table_a", "table", [1.2, 0.8, 0.75], [-1.0, 0.0]),
            receptacle("table_b", "table", [1.2, 0.8, 0.75], [1.0, 0.0]),
            receptacle("shelf", "shelf", [0.6, 0.4, 0.5], [0.0, 1.0]),
            receptacle("fridge", "fridge", [0.7, 0.7, 1.8], [-2.6, 1.0]),
            obj("cup", "cup", [0.15, 0.15, 0.18], [-1.3, 0.0], Some("table_a")),
            obj("book", "book", [0.28, 0.2, 0.08], [-0.75, 0.1], Some("table_a")),
            obj("bottle", "bottle", [0.12, 0.12, 0.3], [0.55, 0.0], Some("table_b")),
            obj("bowl", "bowl", [0.22, 0.22, 0.1], [1.3, 0.0], Some("table_b")),
        ],
        rooms: vec![RoomSpec { name: "kitchen".into(), min: [-6.0, -6.0], max: [6.0, 6.0] }],
        camera: swaying(frames, v(0.0, -4.0, 3.4), v(0.0, 0.4, 0.5), 0.12),
        events: vec![
            event(3.5, Verb::Open, "fridge", None),
            event(7.5, Verb::Close, "fridge", None),
            event(11.5, Verb::Pick, "cup", None),
            event(13.5, Verb::Place, "cup", Some(("table_b", [0.9, 0.1]))),
            event(24.5, Verb::Move, "bottle", Some(("shelf", [-0.15, 1.0]))),
            event(35.5, Verb::Pick, "book", None),
            event(37.5, Verb::Place, "book", Some(("table_b", [0.6, -0.2]))),
            event(48.5, Verb::Move, "bowl", Some(("table_a", [-1.2, 0.0]))),
            event(59.5, Verb::Pick, "cup", None),
            event(61.5, Verb::Place, "cup", Some(("shelf", [0.15, 1.0]))),
        ],
        noise,
        settle_frames: 8,
        min_pixels: 30,
        min_visible_frac: 0.85,
        locate_queries: 100,
    }
}
