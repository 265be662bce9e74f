//! Box-world generator with exact ground truth.
//!
//! A [`WorldSpec`] places boxes on an infinite floor (z = 0, +z up), scripts
//! object events, and fixes a camera path. [`generate`] renders every frame by
//! exact ray casting, emits detections for unoccluded in-view objects with
//! identity-seeded features, and writes the episode together with its spec
//! and an [`AnswerKey`].

pub mod presets;
pub mod render;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use scenemem_core::memory::FeatureDims;
use scenemem_core::{
    ActionAnnotation, Box3D, CameraIntrinsics, DepthMap, Detection2D, FeaturePair, FrameObservation, ObjectState, Observation,
    PixelMask, PixelRect, Pose, UpAxis, Vec3,
};
use serde::{Deserialize, Serialize};

use crate::episode::{self, EpisodeError, EpisodeWriter};
use render::{code_object, Render};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    pub category: String,
    /// Extents along x, y, z.
    pub size: Vec3,
    /// Horizontal center.
    pub position: [f64; 2],
    /// Receptacle the object starts on; `None` is the floor.
    #[serde(default)]
    pub on: Option<String>,
    #[serde(default)]
    pub receptacle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub name: String,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraKey {
    pub frame: u32,
    pub eye: Vec3,
    pub target: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Move,
    Pick,
    Place,
    Open,
    Close,
}

impl Verb {
    pub fn lemma(self) -> &'static str {
        match self {
            Verb::Move => "move",
            Verb::Pick => "pick",
            Verb::Place => "place",
            Verb::Open => "open",
            Verb::Close => "close",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub on: String,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub t: f64,
    pub verb: Verb,
    pub object: String,
    #[serde(default)]
    pub to: Option<Placement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub pose_sigma_t: f64,
    pub pose_sigma_r_deg: f64,
    pub depth_sigma: f64,
    /// Per-observation feature perturbation scale.
    pub feature_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub seed: u64,
    pub intrinsics: CameraIntrinsics,
    pub dims: FeatureDims,
    pub frame_count: u32,
    pub frame_dt: f64,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub rooms: Vec<RoomSpec>,
    pub camera: Vec<CameraKey>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Frames between a place/move and its narration.
    pub settle_frames: u32,
    /// Minimum unoccluded pixels for a detection.
    pub min_pixels: usize,
    /// Minimum fraction of an object's silhouette that must be unoccluded.
    pub min_visible_frac: f64,
    /// Number of locate queries in the answer key.
    pub locate_queries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjState {
    pub box3d: Option<Box3D>,
    pub state: ObjectState,
    pub on: Option<usize>,
}

/// A validated spec with its precomputed event timeline and planted features.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    /// `(time, states)`; the first entry holds the initial layout at t = 0.
    timeline: Vec<(f64, Vec<ObjState>)>,
    pub features: Vec<FeaturePair>,
    pub background: FeaturePair,
    pub room_ctx: Vec<Vec<f64>>,
    /// Context used when the camera is outside every room.
    pub default_ctx: Vec<f64>,
}

fn rng_for(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream.wrapping_mul(0x9E37_79B9).wrapping_add(index));
    r
}

/// Random unit vector, rounded to f32 so stored and in-memory values agree.
fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    to_f32_unit(v)
}

fn to_f32_unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x / n) as f32 as f64);
    }
    v
}

/// `normalize(base + eta * g)` with `g` a standard normal vector scaled by `1/sqrt(dim)`.
fn perturb(rng: &mut ChaCha8Rng, base: &[f64], eta: f64) -> Vec<f64> {
    if eta == 0.0 {
        return base.to_vec();
    }
    let s = eta / (base.len() as f64).sqrt();
    let v =
        base.iter().map(|b| b + s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect::<Vec<f64>>();
    to_f32_unit(v)
}

fn footprint_inside(inner: &Box3D, outer: &Box3D) -> bool {
    (0..2).all(|k| inner.min.0[k] >= outer.min.0[k] - 1e-9 && inner.max.0[k] <= outer.max.0[k] + 1e-9)
}

fn resting_box(size: Vec3, position: [f64; 2], base_z: f64) -> Box3D {
    let min = Vec3::new(position[0] - size.x() / 2.0, position[1] - size.y() / 2.0, base_z);
    Box3D { min, max: min + size }
}

impl World {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(spec: WorldSpec) -> Result<Self, SynthError> {
        spec.intrinsics.validate().map_err(|e| invalid(e.to_string()))?;
        if spec.dims.clip == 0 || spec.dims.dino == 0 || spec.dims.ctx == 0 {
            return Err(invalid("feature dims must be positive"));
        }
        if spec.frame_count == 0 || !(spec.frame_dt > 0.0) {
            return Err(invalid("need at least one frame and a positive frame_dt"));
        }
        if !(0.0..=1.0).contains(&spec.min_visible_frac) {
            return Err(invalid("min_visible_frac must lie in [0, 1]"));
        }
        let index: BTreeMap<&str, usize> = spec.objects.iter().enumerate().map(|(i, o)| (o.name.as_str(), i)).collect();
        if index.len() != spec.objects.len() {
            return Err(invalid("object names must be unique"));
        }
        if spec.camera.first().is_none_or(|k| k.frame != 0) || spec.camera.windows(2).any(|w| w[1].frame <= w[0].frame) {
            return Err(invalid("camera keys must start at frame 0 and increase"));
        }

        // initial layout: supports before the objects they hold
        let mut initial: Vec<Option<ObjState>> = vec![None; spec.objects.len()];
        let mut pending: Vec<usize> = (0..spec.objects.len()).collect();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|&i| {
                let o = &spec.objects[i];
                let (base, on) = match &o.on {
                    None => (0.0, None),
                    Some(r) => match index.get(r.as_str()).and_then(|&j| initial[j].as_ref().map(|s| (j, s))) {
                        Some((j, s)) => (s.box3d.unwrap().max.z(), Some(j)),
                        None => return true,
                    },
                };
                initial[i] =
                    Some(ObjState { box3d: Some(resting_box(o.size, o.position, base)), state: ObjectState::Normal, on });
                false
            });
            if pending.len() == before {
                return Err(invalid("unknown or cyclic receptacle reference"));
            }
        }
        let initial: Vec<ObjState> = initial.into_iter().map(Option::unwrap).collect();
        for (i, s) in initial.iter().enumerate() {
            let o = &spec.objects[i];
            if o.size.0.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid(format!("object {} has a non-positive size", o.name)));
            }
            if let Some(j) = s.on {
                if !spec.objects[j].receptacle || !footprint_inside(&s.box3d.unwrap(), &initial[j].box3d.unwrap()) {
                    return Err(invalid(format!("object {} does not rest on receptacle {}", o.name, spec.objects[j].name)));
                }
            }
        }

        let mut timeline = vec![(0.0, initial)];
        let mut last_t = 0.0;
        for ev in &spec.events {
            if !(ev.t > last_t) {
                return Err(invalid(format!("event at t={} is not after t={last_t}", ev.t)));
            }
            last_t = ev.t;
            let &i = index.get(ev.object.as_str()).ok_or_else(|| invalid(format!("unknown object {}", ev.object)))?;
            let mut states = timeline.last().unwrap().1.clone();
            let place = |states: &Vec<ObjState>| -> Result<(Box3D, usize), SynthError> {
                let to =
                    ev.to.as_ref().ok_or_else(|| invalid(format!("{} at t={} needs a destination", ev.verb.lemma(), ev.t)))?;
                let &j = index.get(to.on.as_str()).ok_or_else(|| invalid(format!("unknown receptacle {}", to.on)))?;
                let rb = states[j].box3d.ok_or_else(|| invalid("destination receptacle is in hand"))?;
                let b = resting_box(spec.objects[i].size, to.position, rb.max.z());
                if !spec.objects[j].receptacle || !footprint_inside(&b, &rb) || j == i {
                    return Err(invalid(format!("{} does not fit on {}", ev.object, to.on)));
                }
                Ok((b, j))
            };
            let carrying = states.iter().any(|s| s.on == Some(i));
            match ev.verb {
                Verb::Move | Verb::Pick if carrying => return Err(invalid(format!("{} holds other objects", ev.object))),
                Verb::Move | Verb::Pick | Verb::Open | Verb::Close if states[i].box3d.is_none() => {
                    return Err(invalid(format!("{} is in hand at t={}", ev.object, ev.t)))
                }
                Verb::Move => {
                    let (b, j) = place(&states)?;
                    states[i] = ObjState { box3d: Some(b), state: ObjectState::Normal, on: Some(j) };
                }
                Verb::Pick => states[i] = ObjState { box3d: None, state: ObjectState::InHand, on: None },
                Verb::Place => {
                    if states[i].box3d.is_some() {
                        return Err(invalid(format!("{} is not in hand at t={}", ev.object, ev.t)));
                    }
                    let (b, j) = place(&states)?;
                    states[i] = ObjState { box3d: Some(b), state: ObjectState::Normal, on: Some(j) };
                }
                Verb::Open => states[i].state = ObjectState::Open,
                Verb::Close => states[i].state = ObjectState::Close,
            }
            timeline.push((ev.t, states));
        }

        let world = World {
            features: (0..spec.objects.len())
                .map(|i| {
                    let mut r = rng_for(spec.seed, 1, i as u64);
                    FeaturePair::new(random_unit(&mut r, spec.dims.clip), random_unit(&mut r, spec.dims.dino))
                })
                .collect(),
            background: {
                let mut r = rng_for(spec.seed, 2, 0);
                FeaturePair::new(random_unit(&mut r, spec.dims.clip), random_unit(&mut r, spec.dims.dino))
            },
            room_ctx: (0..spec.rooms.len()).map(|i| random_unit(&mut rng_for(spec.seed, 3, i as u64), spec.dims.ctx)).collect(),
            default_ctx: random_unit(&mut rng_for(spec.seed, 3, u64::MAX >> 8), spec.dims.ctx),
            timeline,
            spec,
        };
        let anns = world.annotations();
        if anns.windows(2).any(|w| w[1].timestamp_s <= w[0].timestamp_s) {
            return Err(invalid("narrations would be reordered by settle_frames; space events further apart"));
        }
        Ok(world)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.spec.objects.iter().position(|o| o.name == name)
    }

    pub fn frame_time(&self, frame: u64) -> f64 {
        frame as f64 * self.spec.frame_dt
    }

    /// Object states in effect at time `t` (events at exactly `t` included).
    pub fn states_at(&self, t: f64) -> &[ObjState] {
        let k = self.timeline.partition_point(|(et, _)| *et <= t).max(1);
        &self.timeline[k - 1].1
    }

    pub fn boxes_at(&self, t: f64) -> Vec<Option<Box3D>> {
        self.states_at(t).iter().map(|s| s.box3d).collect()
    }

    /// Ground-truth camera pose of a frame.
    pub fn true_pose(&self, frame: u64) -> Pose {
        let keys = &self.spec.camera;
        let f = frame as f64;
        let k = keys.partition_point(|c| (c.frame as f64) <= f);
        let (eye, target) = if k >= keys.len() {
            (keys[keys.len() - 1].eye, keys[keys.len() - 1].target)
        } else {
            let (a, b) = (&keys[k - 1], &keys[k]);
            let s = (f - a.frame as f64) / (b.frame - a.frame) as f64;
            (a.eye + (b.eye - a.eye) * s, a.target + (b.target - a.target) * s)
        };
        Pose::look_at(eye, target, Vec3::new(0.0, 0.0, 1.0))
    }

    /// Recorded pose: the true pose right-multiplied by a random perturbation.
    pub fn recorded_pose(&self, frame: u64) -> Pose {
        let pose = self.true_pose(frame);
        let n = &self.spec.noise;
        if n.pose_sigma_t == 0.0 && n.pose_sigma_r_deg == 0.0 {
            return pose;
        }
        let mut rng = rng_for(self.spec.seed, 10, frame);
        let axis = loop {
            let a = Vec3::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            if a.norm() > 1e-6 {
                break a;
            }
        };
        let angle = n.pose_sigma_r_deg.to_radians() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        let t = Vec3::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            * n.pose_sigma_t;
        pose.compose(&Pose::from_axis_angle(axis, angle, t))
    }

    pub fn room_of(&self, p: Vec3) -> Option<usize> {
        self.spec.rooms.iter().position(|r| (0..2).all(|k| p.0[k] >= r.min[k] && p.0[k] <= r.max[k]))
    }

    pub fn frame_ctx(&self, frame: u64) -> Vec<f64> {
        let base = match self.room_of(self.true_pose(frame).center()) {
            Some(i) => &self.room_ctx[i],
            None => &self.default_ctx,
        };
        perturb(&mut rng_for(self.spec.seed, 11, frame), base, self.spec.noise.feature_eta)
    }

    /// Renders the scene with the true pose over a region (whole image if `None`).
    pub fn render(&self, frame: u64, region: Option<&PixelRect>) -> Render {
        let intr = &self.spec.intrinsics;
        let span = region.map(|r| render::region_span(r, intr));
        render::render(&self.boxes_at(self.frame_time(frame)), &self.true_pose(frame), intr, span)
    }

    /// Features of whatever dominates a region of a frame.
    pub fn region_features(&self, frame: u64, region: &PixelRect) -> FeaturePair {
        match code_object(self.render(frame, Some(region)).dominant()) {
            Some(i) => self.features[i].clone(),
            None => self.background.clone(),
        }
    }

    /// Object index dominating a region of a frame.
    pub fn region_object(&self, frame: u64, region: &PixelRect) -> Option<usize> {
        code_object(self.render(frame, Some(region)).dominant())
    }

    fn narration(&self, ev: &EventSpec) -> String {
        let cat = &self.spec.objects[self.object_index(&ev.object).unwrap()].category;
        let dest = ev.to.as_ref().map(|p| &self.spec.objects[self.object_index(&p.on).unwrap()].category);
        match (ev.verb, dest) {
            (Verb::Pick, _) => format!("C picks up the {cat}"),
            (Verb::Place, Some(d)) => format!("C places the {cat} on the {d}"),
            (Verb::Move, Some(d)) => format!("C moves the {cat} to the {d}"),
            (Verb::Open, _) => format!("C opens the {cat}"),
            (Verb::Close, _) => format!("C closes the {cat}"),
            _ => unreachable!("validated"),
        }
    }

    /// Narration time: grasps and articulations are narrated as they happen;
    /// placements once the object has settled.
    pub fn annotation_time(&self, ev: &EventSpec) -> f64 {
        match ev.verb {
            Verb::Place | Verb::Move => ev.t + self.spec.settle_frames as f64 * self.spec.frame_dt,
            _ => ev.t,
        }
    }

    pub fn annotations(&self) -> Vec<ActionAnnotation> {
        self.spec.events.iter().map(|ev| ActionAnnotation::new(self.annotation_time(ev), &self.narration(ev))).collect()
    }

    /// Event whose narration is `text` and is associated with `frame`
    /// (the latest frame at or before the narration time).
    pub fn event_for(&self, frame: u64, text: &str) -> Option<&EventSpec> {
        self.spec.events.iter().find(|ev| {
            let at = self.annotation_time(ev);
            let assoc = ((at / self.spec.frame_dt).floor() as u64).min(self.spec.frame_count as u64 - 1);
            assoc == frame && self.narration(ev) == text
        })
    }

    /// Renders a full frame and derives depth (with noise) and detections.
    pub fn observe(&self, frame: u64) -> (FrameObservation, DepthMap, Vec<usize>) {
        let intr = self.spec.intrinsics;
        let t = self.frame_time(frame);
        let pose = self.true_pose(frame);
        let boxes = self.boxes_at(t);
        let img = render::render(&boxes, &pose, &intr, None);
        let (w, h) = (intr.width, intr.height);

        let mut depth = DepthMap::new(w, h, img.depth.clone()).expect("rendered depth is valid");
        if self.spec.noise.depth_sigma > 0.0 {
            let normal = Normal::new(0.0, self.spec.noise.depth_sigma).unwrap();
            let mut rng = rng_for(self.spec.seed, 12, frame);
            for d in depth.values.iter_mut().filter(|d| **d > 0.0) {
                *d = (*d as f64 + normal.sample(&mut rng)).max(0.0) as f32;
            }
        }

        let mut pixels: Vec<Vec<(u32, u32)>> = vec![Vec::new(); boxes.len()];
        for r in 0..h {
            for c in 0..w {
                if let Some(i) = code_object(img.code_at(c, r)) {
                    pixels[i].push((c, r));
                }
            }
        }
        let mut rng = rng_for(self.spec.seed, 13, frame);
        let mut detections = Vec::new();
        let mut detected = Vec::new();
        for (i, px) in pixels.into_iter().enumerate() {
            let Some(b) = boxes[i] else { continue };
            let visible = px.len();
            if visible < self.spec.min_pixels.max(1)
                || (visible as f64) < self.spec.min_visible_frac * img.self_hits[i] as f64
                || !render::fully_in_view(&b, &pose, &intr)
            {
                continue;
            }
            let c0 = px.iter().map(|p| p.0).min().unwrap();
            let c1 = px.iter().map(|p| p.0).max().unwrap() + 1;
            let r0 = px.iter().map(|p| p.1).min().unwrap();
            let r1 = px.iter().map(|p| p.1).max().unwrap() + 1;
            let mask = PixelMask::from_pixels(c0, r0, c1 - c0, r1 - r0, px);
            let planted = &self.features[i];
            let eta = self.spec.noise.feature_eta;
            detections.push(Observation {
                detection: Detection2D {
                    category: self.spec.objects[i].category.clone(),
                    bbox: PixelRect::new(c0 as f64, r0 as f64, c1 as f64, r1 as f64),
                    confidence: 1.0,
                    mask: Some(mask),
                },
                features: FeaturePair::new(perturb(&mut rng, &planted.clip, eta), perturb(&mut rng, &planted.dino, eta)),
            });
            detected.push(i);
        }
        let obs = FrameObservation {
            frame_id: frame,
            timestamp_s: t,
            pose: self.recorded_pose(frame),
            ctx_feat: self.frame_ctx(frame),
            detections,
        };
        (obs, depth, detected)
    }
}

// ---- answer key ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyObject {
    pub name: String,
    pub category: String,
    pub receptacle: bool,
    pub features: FeaturePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from_t: f64,
    /// `None` while the object is in hand.
    pub box3d: Option<Box3D>,
    pub on: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEvent {
    pub t: f64,
    pub annotation_t: f64,
    pub verb: String,
    pub object: String,
    pub receptacle: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateQuery {
    pub object: String,
    pub t: f64,
    pub gt: Box3D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub episode_digest: String,
    pub objects: Vec<KeyObject>,
    pub room_ctx: BTreeMap<String, Vec<f64>>,
    pub tracks: BTreeMap<String, Vec<Segment>>,
    pub events: Vec<KeyEvent>,
    /// Receptacle each non-receptacle object ends on (`None`: floor or in hand).
    pub final_receptacles: BTreeMap<String, Option<String>>,
    pub locate_queries: Vec<LocateQuery>,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KeyError {
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("object {0} is in hand at t={1}")]
    InHand(String, f64),
}

/// Ground-truth box of `object` at time `t`.
pub fn gt_locate(key: &AnswerKey, object: &str, t: f64) -> Result<Box3D, KeyError> {
    let segs = key.tracks.get(object).ok_or_else(|| KeyError::UnknownObject(object.to_string()))?;
    let k = segs.partition_point(|s| s.from_t <= t).max(1);
    segs[k - 1].box3d.ok_or_else(|| KeyError::InHand(object.to_string(), t))
}

impl World {
    fn tracks(&self) -> BTreeMap<String, Vec<Segment>> {
        let mut tracks: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
        for (i, o) in self.spec.objects.iter().enumerate() {
            let mut segs: Vec<Segment> = Vec::new();
            for (t, states) in &self.timeline {
                let s = &states[i];
                let seg = Segment { from_t: *t, box3d: s.box3d, on: s.on.map(|j| self.spec.objects[j].name.clone()) };
                if segs.last().is_none_or(|l| l.box3d != seg.box3d) {
                    segs.push(seg);
                }
            }
            tracks.insert(o.name.clone(), segs);
        }
        tracks
    }

    fn build_key(&self, digest: String, detected: &[Vec<usize>]) -> AnswerKey {
        let tracks = self.tracks();
        let last = &self.timeline.last().unwrap().1;
        let final_receptacles = self
            .spec
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.receptacle)
            .map(|(i, o)| (o.name.clone(), last[i].on.map(|j| self.spec.objects[j].name.clone())))
            .collect();
        let events = self
            .spec
            .events
            .iter()
            .map(|ev| KeyEvent {
                t: ev.t,
                annotation_t: self.annotation_time(ev),
                verb: ev.verb.lemma().to_string(),
                object: ev.object.clone(),
                receptacle: ev.to.as_ref().map(|p| p.on.clone()),
                text: self.narration(ev),
            })
            .collect();

        // (object, frame) pairs where the object rests somewhere it has been
        // detected since it last moved
        let mut candidates = Vec::new();
        for (i, o) in self.spec.objects.iter().enumerate() {
            let segs = &tracks[&o.name];
            for k in 0..self.spec.frame_count as u64 {
                let t = self.frame_time(k);
                let seg = &segs[segs.partition_point(|s| s.from_t <= t).max(1) - 1];
                let Some(gt) = seg.box3d else { continue };
                let seen = (0..=k).any(|j| self.frame_time(j) >= seg.from_t && detected[j as usize].contains(&i));
                if seen {
                    candidates.push(LocateQuery { object: o.name.clone(), t, gt });
                }
            }
        }
        let mut rng = rng_for(self.spec.seed, 20, 0);
        let mut locate_queries: Vec<LocateQuery> =
            candidates.choose_multiple(&mut rng, self.spec.locate_queries.min(candidates.len())).cloned().collect();
        locate_queries.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.object.cmp(&b.object)));

        AnswerKey {
            episode_digest: digest,
            objects: self
                .spec
                .objects
                .iter()
                .zip(&self.features)
                .map(|(o, f)| KeyObject {
                    name: o.name.clone(),
                    category: o.category.clone(),
                    receptacle: o.receptacle,
                    features: f.clone(),
                })
                .collect(),
            room_ctx: self.spec.rooms.iter().zip(&self.room_ctx).map(|(r, c)| (r.name.clone(), c.clone())).collect(),
            tracks,
            events,
            final_receptacles,
            locate_queries,
            noise: self.spec.noise,
        }
    }
}

/// Writes the episode for `spec` into `dir` (with `world.json` and
/// `answer_key.json`) and returns the answer key.
pub fn generate(spec: &WorldSpec, dir: &Path) -> Result<AnswerKey, SynthError> {
    let world = World::new(spec.clone())?;
    let mut writer = EpisodeWriter::create(
        dir,
        spec.intrinsics,
        UpAxis::PosZ,
        spec.dims,
        &format!("scenemem synthetic world, seed {}", spec.seed),
    )?;
    let mut detected = Vec::with_capacity(spec.frame_count as usize);
    for k in 0..spec.frame_count as u64 {
        let (obs, depth, seen) = world.observe(k);
        writer.write_frame(&obs, &depth)?;
        detected.push(seen);
    }
    writer.write_actions(&world.annotations())?;
    let manifest = writer.finish()?;
    episode::write_json(&dir.join(episode::WORLD_FILE), spec)?;
    let digest = episode::episode_digest(dir, &manifest)?;
    let key = world.build_key(digest, &detected);
    episode::write_json(&dir.join(episode::ANSWER_KEY_FILE), &key)?;
    Ok(key)
}

pub fn load_world(dir: &Path) -> Result<World, SynthError> {
    let spec: WorldSpec = episode::read_json(&dir.join(episode::WORLD_FILE))?;
    World::new(spec)
}

pub fn load_answer_key(path: &Path) -> Result<AnswerKey, EpisodeError> {
    episode::read_json(path)
}
