use std::collections::BTreeSet;
use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenemem::episode::EpisodeError;
use scenemem::snapshot::MemorySnapshot;
use scenemem_core::memory::FeatureDims;
use scenemem_core::{
    ActionRecord, Box3D, FeaturePair, MemoryConfig, Mobility, ObjectEntry, ObjectState, Relation, SceneMemory, UpAxis, Vec3,
    VisibleRecord,
};

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / s).collect()
}

fn random_memory(n: usize, seed: u64) -> SceneMemory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = FeatureDims { clip: 8, dino: 12, ctx: 4 };
    let mut m = SceneMemory::new(UpAxis::PosZ, dims);
    let states = [ObjectState::Open, ObjectState::Close, ObjectState::InHand, ObjectState::Normal];
    let mut ids = Vec::new();
    for i in 0..n {
        let c = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0));
        let s = Vec3::new(rng.random_range(0.05..1.0), rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        ids.push(m.insert(ObjectEntry {
            id: 0,
            category: format!("cat{}", i % 7),
            state: states[i % 4],
            related: BTreeSet::new(),
            box3d: Box3D::from_center_size(c, s),
            obj_feat: FeaturePair::new(unit(&mut rng, 8), unit(&mut rng, 12)),
            ctx_feat: unit(&mut rng, 4),
            mobility: if i % 5 == 0 { Mobility::Dynamic } else { Mobility::Static },
            obs_count: rng.random_range(1..50),
            last_seen: rng.random_range(0..1000),
        }));
    }
    for w in ids.windows(3).step_by(3) {
        m.link(w[0], Relation::On, w[1]);
        m.link(w[2], Relation::In, w[1]);
    }
    for t in 0..40 {
        let id = ids[t % n];
        m.history
            .append_visible(VisibleRecord {
                timestamp_s: t as f64 * 0.5,
                frame_id: t as u64,
                object_id: id,
                box3d: m.get(id).unwrap().box3d,
            })
            .unwrap();
    }
    for t in 0..5 {
        m.history
            .append_action(ActionRecord {
                timestamp_s: t as f64 * 3.5,
                verb: "pick".into(),
                raw_text: format!("C picks up the cat{t}"),
                target_ids: vec![ids[t % n]],
                frame_feat: unit(&mut rng, 4),
                frame_id: Some(t as u64),
                directed: t % 2 == 0,
            })
            .unwrap();
    }
    m.report.frames_processed = 40;
    m.report.detections_skipped = 3;
    m
}

#[test]
fn hundred_entries_round_trip_field_by_field() {
    let m = random_memory(100, 11);
    assert!(m.relations_consistent());
    let snap = MemorySnapshot::new(m.clone(), MemoryConfig::default(), Some("abc".into()));
    let back = MemorySnapshot::from_bytes(&snap.to_bytes()).unwrap();
    assert_eq!(back.memory.len(), 100);
    for (a, b) in m.entries().zip(back.memory.entries()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.category, b.category);
        assert_eq!(a.state, b.state);
        assert_eq!(a.related, b.related);
        assert_eq!(a.box3d, b.box3d);
        assert_eq!(a.obj_feat, b.obj_feat);
        assert_eq!(a.ctx_feat, b.ctx_feat);
        assert_eq!(a.mobility, b.mobility);
        assert_eq!((a.obs_count, a.last_seen), (b.obs_count, b.last_seen));
    }
    assert_eq!(back.memory.history, m.history);
    assert_eq!(back.memory.report, m.report);
    assert_eq!(back.memory, m);
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
    MemorySnapshot::new(random_memory(30, 2), MemoryConfig::default(), None).save(&p1).unwrap();
    MemorySnapshot::load(&p1).unwrap().save(&p2).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
}

#[test]
fn equal_memories_have_equal_bytes() {
    let a = MemorySnapshot::new(random_memory(20, 5), MemoryConfig::default(), None).to_bytes();
    let b = MemorySnapshot::new(random_memory(20, 5), MemoryConfig::default(), None).to_bytes();
    let c = MemorySnapshot::new(random_memory(20, 6), MemoryConfig::default(), None).to_bytes();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn empty_memory_loads_empty() {
    let m = SceneMemory::new(UpAxis::PosY, FeatureDims { clip: 3, dino: 3, ctx: 3 });
    let back = MemorySnapshot::from_bytes(&MemorySnapshot::new(m.clone(), MemoryConfig::default(), None).to_bytes()).unwrap();
    assert!(back.memory.is_empty());
    assert_eq!(back.memory, m);
}

#[test]
fn tampered_config_and_missing_file_are_errors() {
    let snap = MemorySnapshot::new(random_memory(3, 1), MemoryConfig::default(), None);
    let mut v: serde_json::Value = serde_json::from_slice(&snap.to_bytes()).unwrap();
    v["config"]["static_iou"] = serde_json::json!(0.3);
    assert!(matches!(MemorySnapshot::from_bytes(&serde_json::to_vec(&v).unwrap()), Err(EpisodeError::Invalid(_))));
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(MemorySnapshot::load(&dir.path().join("none.json")), Err(EpisodeError::MissingFile(_))));
}

#[test]
fn readers_see_whole_published_memories() {
    use scenemem::shared::SharedMemory;
    use std::sync::Arc;
    let shared = Arc::new(SharedMemory::new(random_memory(3, 0)));
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let s = Arc::clone(&shared);
            std::thread::spawn(move || {
                let mut last = 0;
                for _ in 0..2000 {
                    let m = s.snapshot();
                    assert!(m.relations_consistent());
                    assert!(m.len() >= last, "published sizes only grow");
                    last = m.len();
                }
            })
        })
        .collect();
    for n in 4..40 {
        shared.publish(random_memory(n, n as u64));
    }
    for r in readers {
        r.join().unwrap();
    }
    assert_eq!(shared.snapshot().len(), 39);
}
