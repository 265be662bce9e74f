mod common;

use std::fs;

use scenemem::episode::{self, Episode, EpisodeError, EpisodeManifest, FrameRecord, ViolationKind};
use scenemem::synth::{presets, World};

#[test]
fn ten_frame_round_trip() {
    let mut spec = presets::static_room(4);
    spec.frame_count = 10;
    let (dir, _) = common::generate(&spec);
    let world = World::new(spec).unwrap();
    let ep = Episode::open(dir.path()).unwrap();
    assert_eq!(ep.records.len(), 10);
    for (k, item) in ep.frames().unwrap().enumerate() {
        let (frame, depth) = item.unwrap();
        let (want, want_depth, _) = world.observe(k as u64);
        assert_eq!(frame.pose, want.pose, "frame {k}");
        assert_eq!(frame.ctx_feat, want.ctx_feat, "frame {k}");
        assert_eq!(frame.timestamp_s, want.timestamp_s);
        assert_eq!(frame.detections.len(), want.detections.len());
        for (a, b) in frame.detections.iter().zip(&want.detections) {
            assert_eq!(a.detection, b.detection, "frame {k}");
            assert_eq!(a.features, b.features, "frame {k}");
        }
        assert!(depth == want_depth, "frame {k} depth");
    }
    assert!(episode::validate_episode(dir.path()).is_clean());
}

#[test]
fn truncated_depth_blob_names_frame() {
    let (dir, _) = common::generate(&presets::cube(1));
    let ep = Episode::open(dir.path()).unwrap();
    let path = dir.path().join(&ep.records[3].depth);
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 6]).unwrap();
    let err = ep.frames().unwrap().map(|r| r.map(|_| ())).collect::<Result<Vec<_>, _>>().unwrap_err();
    assert!(matches!(err, EpisodeError::CorruptBlob { frame_id: 3, .. }), "{err}");
    let report = episode::validate_episode(dir.path());
    assert_eq!(report.violations.len(), 1);
    assert_eq!(report.violations[0].kind, ViolationKind::BlobLength);
    assert_eq!(report.violations[0].frame_id, Some(3));
}

#[test]
fn unknown_schema_version_is_rejected() {
    let (dir, _) = common::generate(&presets::cube(1));
    let path = dir.path().join(episode::MANIFEST_FILE);
    let mut m: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    m["schema_version"] = 99.into();
    fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
    assert!(matches!(Episode::open(dir.path()), Err(EpisodeError::SchemaMismatch { found: 99 })));
    assert_eq!(episode::validate_episode(dir.path()).violations[0].kind, ViolationKind::SchemaMismatch);
}

#[test]
fn missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(Episode::open(dir.path()), Err(EpisodeError::MissingFile(_))));
    let (dir, _) = common::generate(&presets::cube(1));
    fs::remove_file(dir.path().join("depth/000002.f32")).unwrap();
    let ep = Episode::open(dir.path()).unwrap();
    assert!(ep.frames().unwrap().any(|r| matches!(r, Err(EpisodeError::MissingFile(_)))));
}

fn rewrite_records(dir: &std::path::Path, f: impl FnOnce(&mut Vec<FrameRecord>)) {
    let m: EpisodeManifest = episode::read_json(&dir.join(episode::MANIFEST_FILE)).unwrap();
    let path = dir.join(&m.paths.frames);
    let mut recs: Vec<FrameRecord> = episode::read_jsonl(&path).unwrap();
    f(&mut recs);
    episode::write_jsonl(&path, &recs).unwrap();
}

#[test]
fn one_non_unit_feature_is_one_violation() {
    let (dir, _) = common::generate(&presets::static_room(2));
    let ep = Episode::open(dir.path()).unwrap();
    // scale one dino vector in place
    let rec = &ep.records[4];
    let det = &rec.detections[2];
    let path = dir.path().join(&ep.manifest.paths.features);
    let mut bytes = fs::read(&path).unwrap();
    let start = det.dino_offset as usize * 4;
    for i in 0..ep.manifest.dims.dino {
        let at = start + 4 * i;
        let v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) * 1.5;
        bytes[at..at + 4].copy_from_slice(&v.to_le_bytes());
    }
    fs::write(&path, bytes).unwrap();
    let report = episode::validate_episode(dir.path());
    assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
    let v = &report.violations[0];
    assert_eq!((v.kind, v.frame_id, v.detection), (ViolationKind::NonUnitFeature, Some(4), Some(2)));
}

#[test]
fn non_monotone_timestamps_are_time_order() {
    let (dir, _) = common::generate(&presets::cube(1));
    rewrite_records(dir.path(), |recs| recs[5].timestamp_s = recs[3].timestamp_s);
    let report = episode::validate_episode(dir.path());
    assert!(report.violations.iter().any(|v| v.kind == ViolationKind::TimeOrder && v.frame_id == Some(5)));
    assert!(report.violations.iter().all(|v| v.kind == ViolationKind::TimeOrder));
}

#[test]
fn bbox_out_of_bounds_is_reported() {
    let (dir, _) = common::generate(&presets::cube(1));
    rewrite_records(dir.path(), |recs| recs[0].detections[0].bbox[2] = 1e4);
    let report = episode::validate_episode(dir.path());
    assert!(report
        .violations
        .iter()
        .any(|v| v.kind == ViolationKind::BboxBounds && v.frame_id == Some(0) && v.detection == Some(0)));
}

#[test]
fn frame_count_mismatch() {
    let (dir, _) = common::generate(&presets::cube(1));
    rewrite_records(dir.path(), |recs| {
        recs.pop();
    });
    assert!(matches!(Episode::open(dir.path()), Err(EpisodeError::Invalid(_))));
    assert!(episode::validate_episode(dir.path()).violations.iter().any(|v| v.kind == ViolationKind::FrameCount));
}
