//! Persistent object memory and its per-frame update.
//!
//! Each frame is processed in a fixed order:
//!
//! 1. every detection is lifted to a world box (failures are skipped and counted);
//! 2. memory is split into static and dynamic entries by probing the appearance
//!    of each unoccluded entry at the place it is expected to be;
//! 3. each lifted candidate is matched against static entries, then against
//!    dynamic ones, and merged with a moving average or inserted as new;
//! 4. On/Upholds and In/Contains relations are recomputed among the entries
//!    seen in this frame.
//!
//! Candidate lists are always walked in ascending id order so replays are
//! reproducible.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::MemoryConfig;
use crate::geometry::{self, Box3D, CameraIntrinsics, DepthMap, Detection2D, GeometryError, PixelRect, Pose, UpAxis};
use crate::history::{HistoryBuffers, HistoryError, VisibleRecord};
use crate::similarity::{self, FeaturePair};
use crate::FrameId;

pub type ObjectId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectState {
    Open,
    Close,
    InHand,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    On,
    Upholds,
    In,
    Contains,
}

impl Relation {
    pub fn inverse(self) -> Relation {
        match self {
            Relation::On => Relation::Upholds,
            Relation::Upholds => Relation::On,
            Relation::In => Relation::Contains,
            Relation::Contains => Relation::In,
        }
    }

    /// True for the side that rests on or sits in something else.
    pub fn is_supported(self) -> bool {
        matches!(self, Relation::On | Relation::In)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mobility {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: ObjectId,
    pub category: String,
    pub state: ObjectState,
    /// `(r, other)` means "this object r other", e.g. `(On, table)`.
    pub related: BTreeSet<(Relation, ObjectId)>,
    pub box3d: Box3D,
    pub obj_feat: FeaturePair,
    pub ctx_feat: Vec<f64>,
    pub mobility: Mobility,
    pub obs_count: u32,
    pub last_seen: FrameId,
}

impl ObjectEntry {
    /// Ids this entry rests on or is contained in.
    pub fn supports(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.related.iter().filter(|(r, _)| r.is_supported()).map(|(_, id)| *id)
    }
}

/// A lifted detection before it is matched against memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub category: String,
    pub box3d: Box3D,
    pub obj_feat: FeaturePair,
    pub ctx_feat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub detection: Detection2D,
    pub features: FeaturePair,
}

/// One timestep of input. The depth map travels separately so that it can be
/// loaded lazily.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub frame_id: FrameId,
    pub timestamp_s: f64,
    pub pose: Pose,
    pub ctx_feat: Vec<f64>,
    pub detections: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("probe failed: {0}")]
pub struct ProbeError(pub String);

/// Embeds an image region of an already-seen frame.
pub trait FeatureProbe {
    fn embed_region(&mut self, frame_id: FrameId, region: &PixelRect) -> Result<FeaturePair, ProbeError>;
}

impl<F> FeatureProbe for F
where
    F: FnMut(FrameId, &PixelRect) -> Result<FeaturePair, ProbeError>,
{
    fn embed_region(&mut self, frame_id: FrameId, region: &PixelRect) -> Result<FeaturePair, ProbeError> {
        self(frame_id, region)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub clip: usize,
    pub dino: usize,
    pub ctx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLog {
    pub frame_id: FrameId,
    pub timestamp_s: f64,
    pub ctx_feat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MobilityEvent {
    pub frame_id: FrameId,
    pub object_id: ObjectId,
    pub mobility: Mobility,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub frames_processed: u64,
    pub detections_seen: u64,
    pub detections_skipped: u64,
    pub entries_created: u64,
    pub static_merges: u64,
    pub dynamic_merges: u64,
    pub probe_failures: u64,
    pub actions_processed: u64,
    pub oracle_failures: u64,
    pub mobility_events: Vec<MobilityEvent>,
}

impl IngestReport {
    /// Number of Static→Dynamic transitions.
    pub fn dynamic_transitions(&self) -> usize {
        self.mobility_events.iter().filter(|e| e.mobility == Mobility::Dynamic).count()
    }
}

/// What happened to each detection of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectionOutcome {
    Skipped,
    Created(ObjectId),
    MergedStatic(ObjectId),
    MergedDynamic(ObjectId),
}

impl DetectionOutcome {
    pub fn object_id(&self) -> Option<ObjectId> {
        match self {
            DetectionOutcome::Skipped => None,
            DetectionOutcome::Created(id) | DetectionOutcome::MergedStatic(id) | DetectionOutcome::MergedDynamic(id) => Some(*id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameUpdate {
    pub frame_id: FrameId,
    pub statics: Vec<ObjectId>,
    pub dynamics: Vec<ObjectId>,
    pub outcomes: Vec<DetectionOutcome>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UpdateError {
    #[error("frame {0} was already ingested")]
    DuplicateFrame(FrameId),
    #[error("frame timestamp {got} is not after {last}")]
    NonMonotoneTimestamp { last: f64, got: f64 },
    #[error("frame context feature has dimension {got}, memory expects {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(#[from] GeometryError),
    #[error("history: {0}")]
    History(#[from] HistoryError),
}

/// Object memory plus the frame log and history buffers it feeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMemory {
    pub up_axis: UpAxis,
    pub dims: FeatureDims,
    next_id: ObjectId,
    #[serde(with = "entry_list")]
    objects: BTreeMap<ObjectId, ObjectEntry>,
    frames: Vec<FrameLog>,
    pub history: HistoryBuffers,
    pub report: IngestReport,
}

mod entry_list {
    use super::*;
    use serde::de::Error;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<ObjectId, ObjectEntry>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<ObjectId, ObjectEntry>, D::Error> {
        let list = Vec::<ObjectEntry>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for e in list {
            let id = e.id;
            if map.insert(id, e).is_some() {
                return Err(D::Error::custom(alloc::format!("duplicate object id {id}")));
            }
        }
        Ok(map)
    }
}

/// Algorithm-1 static re-identification: first entry (in iteration order) with
/// IoU above the threshold, or MaxIoS above its threshold and the same category.
pub fn static_reid<'a>(
    cand: &Candidate,
    statics: impl IntoIterator<Item = &'a ObjectEntry>,
    cfg: &MemoryConfig,
) -> Option<ObjectId> {
    statics
        .into_iter()
        .find(|s| {
            similarity::spatial_iou(&cand.box3d, &s.box3d) > cfg.static_iou
                || (similarity::spatial_maxios(&cand.box3d, &s.box3d) > cfg.static_maxios && cand.category == s.category)
        })
        .map(|s| s.id)
}

/// Algorithm-2 dynamic re-identification: first entry with volume similarity
/// and visual similarity both strictly above their thresholds.
pub fn dynamic_reid<'a>(
    cand: &Candidate,
    dynamics: impl IntoIterator<Item = &'a ObjectEntry>,
    cfg: &MemoryConfig,
) -> Option<ObjectId> {
    dynamics
        .into_iter()
        .find(|d| {
            similarity::spatial_vol_sim(&cand.box3d, &d.box3d) > cfg.dynamic_vol_sim
                && similarity::visual_similarity(&cand.obj_feat, &d.obj_feat).is_ok_and(|v| v > cfg.dynamic_visual)
        })
        .map(|d| d.id)
}

/// `v ← ((N−1)·v + x) / N`
#[inline]
pub fn moving_average(v: f64, x: f64, window: u32) -> f64 {
    let n = window as f64;
    ((n - 1.0) * v + x) / n
}

fn blend(v: &mut [f64], x: &[f64], window: u32) {
    v.iter_mut().zip(x).for_each(|(a, b)| *a = moving_average(*a, *b, window));
}

fn normalize(v: &mut [f64]) {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Blends an observation into an existing entry with window `window`.
/// Category, id, state and relations are left untouched.
pub fn merge_entry(existing: &mut ObjectEntry, obs: &Candidate, window: u32, frame_id: FrameId) {
    blend(&mut existing.box3d.min.0, &obs.box3d.min.0, window);
    blend(&mut existing.box3d.max.0, &obs.box3d.max.0, window);
    blend(&mut existing.obj_feat.clip, &obs.obj_feat.clip, window);
    blend(&mut existing.obj_feat.dino, &obs.obj_feat.dino, window);
    blend(&mut existing.ctx_feat, &obs.ctx_feat, window);
    normalize(&mut existing.obj_feat.clip);
    normalize(&mut existing.obj_feat.dino);
    normalize(&mut existing.ctx_feat);
    existing.obs_count = existing.obs_count.saturating_add(1);
    existing.last_seen = frame_id;
}

/// On/Upholds and In/Contains among `entries`, returned as
/// `(subject, On|In, object)` triples in deterministic order.
pub fn detect_relations(entries: &[&ObjectEntry], up: UpAxis, cfg: &MemoryConfig) -> Vec<(ObjectId, Relation, ObjectId)> {
    let mut out = Vec::new();
    let eps = cfg.contact_eps;
    for b in entries {
        for a in entries {
            if a.id == b.id {
                continue;
            }
            let (bb, ab) = (&b.box3d, &a.box3d);
            let (b_bottom, b_top) = up.vertical_extent(bb);
            let (_, a_top) = up.vertical_extent(ab);
            let footprint_inside =
                up.horizontal().iter().all(|&k| bb.min.0[k] >= ab.min.0[k] - eps && bb.max.0[k] <= ab.max.0[k] + eps);
            if (b_bottom - a_top).abs() <= eps && b_top > a_top && footprint_inside {
                out.push((b.id, Relation::On, a.id));
            }
            let (vb, va) = (bb.volume(), ab.volume());
            let contained = if vb > 0.0 { bb.intersection_volume(ab) / vb >= cfg.containment } else { ab.contains_box(bb) };
            if contained && vb < va {
                out.push((b.id, Relation::In, a.id));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

impl SceneMemory {
    pub fn new(up_axis: UpAxis, dims: FeatureDims) -> Self {
        SceneMemory {
            up_axis,
            dims,
            next_id: 1,
            objects: BTreeMap::new(),
            frames: Vec::new(),
            history: HistoryBuffers::new(),
            report: IngestReport::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: ObjectId) -> Option<&ObjectEntry> {
        self.objects.get(&id)
    }

    pub fn get_mut(&mut self, id: ObjectId) -> Option<&mut ObjectEntry> {
        self.objects.get_mut(&id)
    }

    /// Entries in ascending id order.
    pub fn entries(&self) -> impl Iterator<Item = &ObjectEntry> {
        self.objects.values()
    }

    pub fn frames(&self) -> &[FrameLog] {
        &self.frames
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.objects.values().map(|e| e.category.as_str()).collect()
    }

    /// Inserts a fully formed entry, assigning the next id. Used by the update
    /// loop and by tools that build memories directly.
    pub fn insert(&mut self, mut entry: ObjectEntry) -> ObjectId {
        let id = self.next_id;
        self.next_id += 1;
        entry.id = id;
        entry.related.retain(|(_, other)| *other != id);
        self.objects.insert(id, entry);
        id
    }

    fn insert_candidate(&mut self, cand: Candidate, frame_id: FrameId) -> ObjectId {
        self.insert(ObjectEntry {
            id: 0,
            category: cand.category,
            state: ObjectState::Normal,
            related: BTreeSet::new(),
            box3d: cand.box3d,
            obj_feat: cand.obj_feat,
            ctx_feat: cand.ctx_feat,
            mobility: Mobility::Static,
            obs_count: 1,
            last_seen: frame_id,
        })
    }

    /// Adds `a rel b` and its mirror `b rel⁻¹ a`.
    pub fn link(&mut self, a: ObjectId, rel: Relation, b: ObjectId) {
        if a == b || !self.objects.contains_key(&a) || !self.objects.contains_key(&b) {
            return;
        }
        self.objects.get_mut(&a).unwrap().related.insert((rel, b));
        self.objects.get_mut(&b).unwrap().related.insert((rel.inverse(), a));
    }

    /// Removes every relation of `id` together with the mirrored pairs.
    pub fn clear_relations(&mut self, id: ObjectId) {
        let Some(e) = self.objects.get_mut(&id) else { return };
        let pairs = core::mem::take(&mut e.related);
        for (rel, other) in pairs {
            if let Some(o) = self.objects.get_mut(&other) {
                o.related.remove(&(rel.inverse(), id));
            }
        }
    }

    /// Checks that every stored relation has its mirror.
    pub fn relations_consistent(&self) -> bool {
        self.objects.values().all(|e| {
            e.related.iter().all(|(rel, other)| {
                *other != e.id && self.objects.get(other).is_some_and(|o| o.related.contains(&(rel.inverse(), e.id)))
            })
        })
    }

    /// Partitions memory into static and dynamic ids, marking as dynamic every
    /// unoccluded entry whose probed appearance no longer matches.
    pub fn split_static_dynamic(
        &mut self,
        frame: &FrameObservation,
        depth: &DepthMap,
        intr: &CameraIntrinsics,
        probe: &mut dyn FeatureProbe,
        cfg: &MemoryConfig,
    ) -> (Vec<ObjectId>, Vec<ObjectId>) {
        let ids: Vec<ObjectId> = self.objects.keys().copied().collect();
        for id in ids {
            let entry = &self.objects[&id];
            let status =
                geometry::check_visibility(&entry.box3d, depth, &frame.pose, intr, cfg.occlusion_margin, cfg.occluded_frac);
            let geometry::VisibilityStatus::Visible(region) = status else { continue };
            let sim = probe
                .embed_region(frame.frame_id, &region)
                .ok()
                .and_then(|f| similarity::visual_similarity(&entry.obj_feat, &f).ok());
            match sim {
                None => self.report.probe_failures += 1,
                Some(s) if s < cfg.split_visual => {
                    let e = self.objects.get_mut(&id).unwrap();
                    if e.mobility != Mobility::Dynamic {
                        e.mobility = Mobility::Dynamic;
                        self.report.mobility_events.push(MobilityEvent {
                            frame_id: frame.frame_id,
                            object_id: id,
                            mobility: Mobility::Dynamic,
                        });
                    }
                }
                Some(_) => {}
            }
        }
        self.partition()
    }

    fn partition(&self) -> (Vec<ObjectId>, Vec<ObjectId>) {
        let (s, d): (Vec<&ObjectEntry>, Vec<&ObjectEntry>) = self.objects.values().partition(|e| e.mobility == Mobility::Static);
        (s.iter().map(|e| e.id).collect(), d.iter().map(|e| e.id).collect())
    }

    fn lift(
        &self,
        obs: &Observation,
        frame: &FrameObservation,
        depth: &DepthMap,
        intr: &CameraIntrinsics,
        cfg: &MemoryConfig,
    ) -> Option<Candidate> {
        if obs.features.dims() != (self.dims.clip, self.dims.dino) {
            return None;
        }
        let box3d = geometry::lift_detection(&obs.detection, depth, &frame.pose, intr, cfg.lift_trim).ok()?;
        Some(Candidate {
            category: obs.detection.category.clone(),
            box3d,
            obj_feat: obs.features.clone(),
            ctx_feat: frame.ctx_feat.clone(),
        })
    }

    /// Ingests one frame. Per-detection failures are skipped and counted in
    /// [`SceneMemory::report`]; only frame-level contract violations error.
    pub fn update(
        &mut self,
        frame: &FrameObservation,
        depth: &DepthMap,
        intr: &CameraIntrinsics,
        probe: &mut dyn FeatureProbe,
        cfg: &MemoryConfig,
    ) -> Result<FrameUpdate, UpdateError> {
        if self.frames.iter().any(|f| f.frame_id == frame.frame_id) {
            return Err(UpdateError::DuplicateFrame(frame.frame_id));
        }
        if let Some(last) = self.frames.last() {
            if frame.timestamp_s <= last.timestamp_s {
                return Err(UpdateError::NonMonotoneTimestamp { last: last.timestamp_s, got: frame.timestamp_s });
            }
        }
        if frame.ctx_feat.len() != self.dims.ctx {
            return Err(UpdateError::DimensionMismatch { got: frame.ctx_feat.len(), want: self.dims.ctx });
        }
        frame.pose.validate()?;
        intr.validate()?;
        if depth.width != intr.width || depth.height != intr.height {
            return Err(GeometryError::DepthSizeMismatch {
                got_w: depth.width,
                got_h: depth.height,
                want_w: intr.width,
                want_h: intr.height,
            }
            .into());
        }

        let candidates: Vec<Option<Candidate>> = frame.detections.iter().map(|d| self.lift(d, frame, depth, intr, cfg)).collect();
        let (statics, dynamics) = self.split_static_dynamic(frame, depth, intr, probe, cfg);

        let mut outcomes = Vec::with_capacity(candidates.len());
        let mut seen_ids: Vec<ObjectId> = Vec::new();
        for cand in candidates {
            self.report.detections_seen += 1;
            let Some(cand) = cand else {
                self.report.detections_skipped += 1;
                outcomes.push(DetectionOutcome::Skipped);
                continue;
            };
            let lifted = cand.box3d;
            let statics_now = self.objects.values().filter(|e| e.mobility == Mobility::Static);
            let outcome = if let Some(id) = static_reid(&cand, statics_now, cfg) {
                merge_entry(self.objects.get_mut(&id).unwrap(), &cand, cfg.static_window, frame.frame_id);
                self.report.static_merges += 1;
                DetectionOutcome::MergedStatic(id)
            } else {
                let dynamics_now = self.objects.values().filter(|e| e.mobility == Mobility::Dynamic);
                if let Some(id) = dynamic_reid(&cand, dynamics_now, cfg) {
                    let e = self.objects.get_mut(&id).unwrap();
                    merge_entry(e, &cand, cfg.dynamic_window, frame.frame_id);
                    e.mobility = Mobility::Static;
                    self.report.dynamic_merges += 1;
                    self.report.mobility_events.push(MobilityEvent {
                        frame_id: frame.frame_id,
                        object_id: id,
                        mobility: Mobility::Static,
                    });
                    DetectionOutcome::MergedDynamic(id)
                } else {
                    self.report.entries_created += 1;
                    DetectionOutcome::Created(self.insert_candidate(cand, frame.frame_id))
                }
            };
            let id = outcome.object_id().unwrap();
            self.history.append_visible(VisibleRecord {
                timestamp_s: frame.timestamp_s,
                frame_id: frame.frame_id,
                object_id: id,
                box3d: lifted,
            })?;
            if !seen_ids.contains(&id) {
                seen_ids.push(id);
            }
            outcomes.push(outcome);
        }

        self.refresh_relations(&seen_ids, cfg);
        self.frames.push(FrameLog { frame_id: frame.frame_id, timestamp_s: frame.timestamp_s, ctx_feat: frame.ctx_feat.clone() });
        self.report.frames_processed += 1;
        Ok(FrameUpdate { frame_id: frame.frame_id, statics, dynamics, outcomes })
    }

    /// Replaces the relations of `ids` by those detected among them.
    pub fn refresh_relations(&mut self, ids: &[ObjectId], cfg: &MemoryConfig) {
        for id in ids {
            self.clear_relations(*id);
        }
        let present: Vec<&ObjectEntry> = ids.iter().filter_map(|id| self.objects.get(id)).collect();
        for (a, rel, b) in detect_relations(&present, self.up_axis, cfg) {
            self.link(a, rel, b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use alloc::string::ToString;
    use alloc::vec;

    fn fp(c: f64) -> FeaturePair {
        let s = libm::sqrt(1.0 - c * c);
        FeaturePair::new(vec![c, s], vec![c, s])
    }

    fn entry(id: ObjectId, cat: &str, b: Box3D) -> ObjectEntry {
        ObjectEntry {
            id,
            category: cat.to_string(),
            state: ObjectState::Normal,
            related: BTreeSet::new(),
            box3d: b,
            obj_feat: fp(1.0),
            ctx_feat: vec![1.0, 0.0],
            mobility: Mobility::Static,
            obs_count: 1,
            last_seen: 0,
        }
    }

    fn cand(cat: &str, b: Box3D, f: FeaturePair) -> Candidate {
        Candidate { category: cat.to_string(), box3d: b, obj_feat: f, ctx_feat: vec![1.0, 0.0] }
    }

    fn bx(min: [f64; 3], max: [f64; 3]) -> Box3D {
        Box3D::new(Vec3(min), Vec3(max)).unwrap()
    }

    #[test]
    fn static_reid_iou_any_category() {
        // IoU of [0,1]^3 with [0,1]x[0,1]x[0.6,1.6] is 0.4/1.6 = 0.25
        let chair = entry(4, "chair", bx([0.0; 3], [1.0; 3]));
        let c = cand("sofa", bx([0.0, 0.0, 0.6], [1.0, 1.0, 1.6]), fp(0.0));
        assert_eq!(static_reid(&c, [&chair], &MemoryConfig::default()), Some(4));
    }

    #[test]
    fn static_reid_maxios_needs_category() {
        let tbl = entry(2, "table", bx([0.0; 3], [1.0, 1.0, 1.0]));
        let inside_half = bx([0.0, 0.0, 0.5], [1.0, 0.2, 1.5]);
        let iou = similarity::spatial_iou(&inside_half, &tbl.box3d);
        let maxios = similarity::spatial_maxios(&inside_half, &tbl.box3d);
        assert!((iou - 0.1 / 1.1).abs() < 1e-12 && (maxios - 0.5).abs() < 1e-12);
        let cfg = MemoryConfig::default();
        assert_eq!(static_reid(&cand("table", inside_half, fp(0.0)), [&tbl], &cfg), Some(2));
        assert_eq!(static_reid(&cand("lamp", inside_half, fp(0.0)), [&tbl], &cfg), None);
    }

    #[test]
    fn static_reid_first_match_wins() {
        let a = entry(1, "x", bx([0.0; 3], [1.0; 3]));
        let b = entry(2, "x", bx([0.0; 3], [1.0; 3]));
        let c = cand("x", bx([0.0; 3], [1.0; 3]), fp(1.0));
        assert_eq!(static_reid(&c, [&a, &b], &MemoryConfig::default()), Some(1));
    }

    #[test]
    fn dynamic_reid_thresholds() {
        let cfg = MemoryConfig::default();
        let d = entry(5, "cup", bx([0.0; 3], [1.0; 3]));
        let vol = |v: f64| bx([10.0, 0.0, 0.0], [10.0 + v, 1.0, 1.0]);
        // visual of fp(c) vs fp(1) is c
        assert_eq!(dynamic_reid(&cand("cup", vol(0.8), fp(0.5)), [&d], &cfg), Some(5));
        assert_eq!(dynamic_reid(&cand("cup", vol(0.65), fp(0.9)), [&d], &cfg), None);
        assert_eq!(dynamic_reid(&cand("cup", vol(0.9), fp(0.45)), [&d], &cfg), None);
    }

    #[test]
    fn merge_windows() {
        let mut e = entry(1, "x", bx([0.0; 3], [2.0; 3]));
        let obs = cand("y", bx([1.0; 3], [2.0; 3]), fp(0.0));
        merge_entry(&mut e, &obs, 10, 7);
        assert!((e.box3d.min.x() - 0.1).abs() < 1e-12);
        assert_eq!(e.category, "x");
        assert_eq!((e.obs_count, e.last_seen), (2, 7));
        let mut e = entry(1, "x", bx([0.0; 3], [2.0; 3]));
        merge_entry(&mut e, &obs, 2, 7);
        assert!((e.box3d.min.x() - 0.5).abs() < 1e-12);
        let n = libm::sqrt(e.obj_feat.clip.iter().map(|v| v * v).sum());
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn merge_identical_is_fixed_point() {
        let mut e = entry(1, "x", bx([0.0; 3], [2.0; 3]));
        let before = e.clone();
        let obs = cand("x", e.box3d, e.obj_feat.clone());
        merge_entry(&mut e, &obs, 10, 3);
        assert_eq!(e.box3d, before.box3d);
        assert_eq!(e.obj_feat, before.obj_feat);
        assert_eq!(e.obs_count, 2);
    }

    #[test]
    fn relations_on_and_in() {
        let cfg = MemoryConfig::default();
        let table = entry(1, "table", bx([0.0, 0.0, 0.0], [1.0, 1.0, 0.75]));
        let cup = entry(2, "cup", bx([0.4, 0.4, 0.75], [0.5, 0.5, 0.85]));
        let fridge = entry(3, "fridge", bx([3.0, 0.0, 0.0], [4.0, 1.0, 2.0]));
        let bottle = entry(4, "bottle", bx([3.2, 0.2, 0.5], [3.3, 0.3, 0.8]));
        let rels = detect_relations(&[&table, &cup, &fridge, &bottle], UpAxis::PosZ, &cfg);
        assert_eq!(rels, vec![(2, Relation::On, 1), (4, Relation::In, 3)]);
        let floor_a = entry(5, "box", bx([10.0, 0.0, 0.0], [11.0, 1.0, 1.0]));
        let floor_b = entry(6, "box", bx([12.0, 0.0, 0.0], [13.0, 1.0, 1.0]));
        assert!(detect_relations(&[&floor_a, &floor_b], UpAxis::PosZ, &cfg).is_empty());
    }

    #[test]
    fn link_and_clear_are_mirrored() {
        let mut m = SceneMemory::new(UpAxis::PosZ, FeatureDims { clip: 2, dino: 2, ctx: 2 });
        let a = m.insert(entry(0, "cup", bx([0.0; 3], [1.0; 3])));
        let b = m.insert(entry(0, "table", bx([0.0; 3], [1.0; 3])));
        m.link(a, Relation::On, b);
        assert!(m.get(b).unwrap().related.contains(&(Relation::Upholds, a)));
        assert!(m.relations_consistent());
        m.clear_relations(b);
        assert!(m.get(a).unwrap().related.is_empty());
        assert!(m.relations_consistent());
    }
}
