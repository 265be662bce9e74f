mod common;

use std::fs;
use std::path::Path;

use scenemem::synth::{self, presets, KeyError, NoiseModel, SynthError, Verb, World, WorldSpec};
use scenemem_core::similarity::visual_similarity;
use scenemem_core::{Box3D, Vec3};

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_writes_identical_files() {
    let (a, ka) = common::generate(&presets::move_scene(7));
    let (b, kb) = common::generate(&presets::move_scene(7));
    assert_eq!(files(a.path()), files(b.path()));
    assert_eq!(ka, kb);
    let (c, kc) = common::generate(&presets::move_scene(8));
    assert_ne!(files(a.path()), files(c.path()));
    assert_ne!(ka.episode_digest, kc.episode_digest);
}

#[test]
fn move_key_tracks_the_cup() {
    let spec = presets::move_scene(1);
    let (_dir, key) = common::generate(&spec);
    let before = synth::gt_locate(&key, "cup", 10.0).unwrap();
    let after = synth::gt_locate(&key, "cup", 11.0).unwrap();
    let close = |b: Box3D, c: [f64; 3]| b.center().distance(&Vec3(c)) < 1e-12;
    assert!(close(before, [-1.0, 0.0, 0.75 + 0.09]));
    assert!(close(after, [1.0, 0.1, 0.75 + 0.09]));
    assert_eq!(synth::gt_locate(&key, "cup", 0.0).unwrap(), before);
    assert_eq!(synth::gt_locate(&key, "cup", 1e6).unwrap(), after);
    assert_eq!(key.final_receptacles["cup"].as_deref(), Some("table_b"));
    assert!(!key.final_receptacles.contains_key("table_a"));
    assert_eq!(synth::gt_locate(&key, "saucer", 1.0), Err(KeyError::UnknownObject("saucer".into())));
}

#[test]
fn picked_object_is_in_hand() {
    let (_dir, key) = common::generate(&presets::kitchen(3, NoiseModel::default()));
    assert!(matches!(synth::gt_locate(&key, "cup", 12.0), Err(KeyError::InHand(..))));
    assert!(synth::gt_locate(&key, "cup", 11.0).is_ok());
    assert!(synth::gt_locate(&key, "cup", 14.0).is_ok());
    assert_eq!(key.events.len(), 10);
    assert_eq!(key.events[3].verb, "place");
    assert_eq!(key.events[3].annotation_t, 13.5 + 8.0);
    assert_eq!(key.events[3].text, "C places the cup on the table");
}

fn rejects(spec: WorldSpec) -> String {
    match World::new(spec) {
        Err(SynthError::InvalidSpec(m)) => m,
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("spec accepted"),
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let base = presets::move_scene(0);

    let mut s = base.clone();
    s.objects[2].name = "table_a".into();
    rejects(s);

    let mut s = base.clone();
    s.objects[2].on = Some("cup".into());
    rejects(s);

    let mut s = base.clone();
    s.objects[2].position = [3.0, 3.0];
    assert!(rejects(s).contains("does not rest on"));

    let mut s = base.clone();
    s.events[0].to.as_mut().unwrap().on = "sofa".into();
    assert!(rejects(s).contains("sofa"));

    let mut s = base.clone();
    s.events[0].verb = Verb::Place;
    assert!(rejects(s).contains("not in hand"));

    let mut s = base.clone();
    s.events[0].to = None;
    assert!(rejects(s).contains("destination"));

    let mut s = base.clone();
    s.camera[0].frame = 1;
    rejects(s);

    let mut s = base.clone();
    s.frame_count = 0;
    rejects(s);

    let mut s = base.clone();
    s.objects[0].size = Vec3::new(1.2, 0.0, 0.75);
    rejects(s);

    let mut s = presets::kitchen(0, NoiseModel::default());
    s.events[0].t = 8.0;
    assert!(rejects(s).contains("after"));

    // a placement narrated after the next grasp
    let mut s = presets::kitchen(0, NoiseModel::default());
    s.settle_frames = 30;
    assert!(rejects(s).contains("settle_frames"));
}

/// Slab test written out independently of the library.
fn slab(o: [f64; 3], d: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<f64> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
            continue;
        }
        let (a, b) = ((lo[k] - o[k]) / d[k], (hi[k] - o[k]) / d[k]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

#[test]
fn rendered_depth_matches_analytic_rays() {
    for spec in [presets::static_room(0), presets::kitchen(0, NoiseModel::default())] {
        let world = World::new(spec.clone()).unwrap();
        let intr = spec.intrinsics;
        for frame in [0u64, 5, 9] {
            let (_, depth, _) = world.observe(frame);
            let pose = world.true_pose(frame);
            let boxes = world.boxes_at(world.frame_time(frame));
            let o = pose.center().0;
            let mut checked = 0;
            for row in (0..intr.height).step_by(7) {
                for col in (0..intr.width).step_by(5) {
                    let d = pose.rotate(intr.pixel_ray(col, row)).0;
                    let mut best = if d[2] < 0.0 { -o[2] / d[2] } else { f64::INFINITY };
                    for b in boxes.iter().flatten() {
                        if let Some(t) = slab(o, d, b.min.0, b.max.0) {
                            best = best.min(t);
                        }
                    }
                    let got = depth.get(col, row) as f64;
                    if best.is_finite() {
                        assert!((got - best).abs() <= 1e-5 * best.max(1.0), "frame {frame} ({col},{row}): {got} vs {best}");
                    } else {
                        assert_eq!(got, 0.0);
                    }
                    checked += 1;
                }
            }
            assert!(checked > 1000);
        }
    }
}

#[test]
fn detections_carry_planted_features() {
    let spec = presets::static_room(4);
    let world = World::new(spec).unwrap();
    let (obs, _, detected) = world.observe(3);
    assert_eq!(obs.detections.len(), detected.len());
    for (o, i) in obs.detections.iter().zip(&detected) {
        let s = visual_similarity(&o.features, &world.features[*i]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(o.detection.category, world.spec.objects[*i].category);
    }
}

#[test]
fn feature_noise_stays_close() {
    for eta in [0.05, 0.1, 0.2] {
        let mut spec = presets::static_room(4);
        spec.noise.feature_eta = eta;
        let world = World::new(spec).unwrap();
        for frame in 0..10 {
            let (obs, _, detected) = world.observe(frame);
            for (o, i) in obs.detections.iter().zip(&detected) {
                let s = visual_similarity(&o.features, &world.features[*i]).unwrap();
                assert!(s > 1.0 - 2.0 * eta && s < 1.0, "eta {eta}: {s}");
            }
        }
    }
}

#[test]
fn depth_noise_leaves_holes_alone() {
    let mut spec = presets::cube(0);
    spec.noise.depth_sigma = 0.01;
    let world = World::new(spec.clone()).unwrap();
    let clean = World::new(presets::cube(0)).unwrap();
    let (_, noisy, _) = world.observe(2);
    let (_, exact, _) = clean.observe(2);
    let diffs: Vec<f64> =
        noisy.values.iter().zip(&exact.values).filter(|(_, e)| **e > 0.0).map(|(n, e)| (*n - *e) as f64).collect();
    assert!(noisy.values.iter().zip(&exact.values).all(|(n, e)| (*e == 0.0) == (*n == 0.0) || *n == 0.0));
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
    assert!(mean.abs() < 1e-3 && (sd - 0.01).abs() < 1e-3, "mean {mean} sd {sd}");
}

#[test]
fn pose_noise_perturbs_only_the_recorded_pose() {
    let mut spec = presets::cube(0);
    spec.noise.pose_sigma_t = 0.01;
    spec.noise.pose_sigma_r_deg = 0.5;
    let world = World::new(spec).unwrap();
    let mut dt = 0.0;
    for f in 0..12 {
        let (obs, _, _) = world.observe(f);
        assert_eq!(world.true_pose(f), World::new(presets::cube(0)).unwrap().true_pose(f));
        dt += obs.pose.center().distance(&world.true_pose(f).center());
    }
    assert!(dt > 0.0 && dt / 12.0 < 0.05);
}
