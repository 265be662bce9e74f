//! On-disk episode format.
//!
//! ```text
//! <episode>/
//!   manifest.json        EpisodeManifest
//!   frames.jsonl         one FrameRecord per line, timestamp order
//!   depth/000000.f32     width*height f32 LE z-depth, row-major, 0.0 = invalid
//!   features.f32         packed f32 LE vectors addressed by float offset
//!   actions.jsonl        one ActionAnnotation per line (optional)
//!   world.json           synthetic world spec (optional)
//!   answer_key.json      synthetic ground truth (optional)
//! ```

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use scenemem_core::memory::FeatureDims;
use scenemem_core::{
    ActionAnnotation, CameraIntrinsics, DepthMap, Detection2D, FeaturePair, FrameObservation, Observation, PixelMask, PixelRect,
    Pose, UpAxis,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WORLD_FILE: &str = "world.json";
pub const ANSWER_KEY_FILE: &str = "answer_key.json";

/// Unit-norm tolerance for stored feature vectors.
pub const UNIT_TOL: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaMismatch { found: u32 },
    #[error("corrupt blob for frame {frame_id}: {detail}")]
    CorruptBlob { frame_id: u64, detail: String },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("invalid episode: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodePaths {
    pub frames: String,
    pub depth_dir: String,
    pub features: String,
    pub actions: String,
}

impl Default for EpisodePaths {
    fn default() -> Self {
        EpisodePaths {
            frames: "frames.jsonl".into(),
            depth_dir: "depth".into(),
            features: "features.f32".into(),
            actions: "actions.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeManifest {
    pub schema_version: u32,
    pub intrinsics: CameraIntrinsics,
    pub up_axis: UpAxis,
    pub dims: FeatureDims,
    pub frame_count: u64,
    pub paths: EpisodePaths,
    pub provenance: String,
}

/// Run-length encoded mask: alternating run lengths over the row-major bits
/// of the mask rectangle, starting with a run of unset bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub col0: u32,
    pub row0: u32,
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl MaskRle {
    pub fn encode(m: &PixelMask) -> Self {
        let mut counts = Vec::new();
        let mut cur = false;
        let mut run = 0u32;
        for &b in &m.bits {
            if b != cur {
                counts.push(run);
                cur = b;
                run = 0;
            }
            run += 1;
        }
        counts.push(run);
        MaskRle { col0: m.col0, row0: m.row0, width: m.width, height: m.height, counts }
    }

    pub fn decode(&self) -> Option<PixelMask> {
        let n = self.width as usize * self.height as usize;
        let mut bits = Vec::with_capacity(n);
        let mut cur = false;
        for &c in &self.counts {
            bits.extend(std::iter::repeat_n(cur, c as usize));
            cur = !cur;
        }
        (bits.len() == n).then_some(PixelMask { col0: self.col0, row0: self.row0, width: self.width, height: self.height, bits })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub category: String,
    /// `[x0, y0, x1, y1]` in pixels.
    pub bbox: [f64; 4],
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskRle>,
    /// Float offsets into the features file.
    pub clip_offset: u64,
    pub dino_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub timestamp_s: f64,
    /// World-from-camera.
    pub pose: Pose,
    pub depth: String,
    pub ctx_offset: u64,
    pub detections: Vec<DetectionRecord>,
}

pub fn read_manifest(dir: &Path) -> Result<EpisodeManifest, EpisodeError> {
    let path = dir.join(MANIFEST_FILE);
    let text = read_text(&path)?;
    // check the version before the full schema so old files report clearly
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| EpisodeError::Parse {
        path: path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(EpisodeError::SchemaMismatch { found });
    }
    serde_json::from_value(raw).map_err(|e| EpisodeError::Parse { path, line: 0, msg: e.to_string() })
}

fn read_text(path: &Path) -> Result<String, EpisodeError> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(EpisodeError::MissingFile(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

fn open(path: &Path) -> Result<File, EpisodeError> {
    match File::open(path) {
        Ok(f) => Ok(f),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(EpisodeError::MissingFile(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

/// Parses a JSON-lines file, skipping blank lines.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EpisodeError> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| EpisodeError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn f32_bytes_to_vec(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

pub fn read_depth_blob(path: &Path, intr: &CameraIntrinsics, frame_id: u64) -> Result<DepthMap, EpisodeError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(EpisodeError::MissingFile(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    let want = intr.width as usize * intr.height as usize * 4;
    if bytes.len() != want {
        return Err(EpisodeError::CorruptBlob { frame_id, detail: format!("depth has {} bytes, expected {want}", bytes.len()) });
    }
    DepthMap::new(intr.width, intr.height, f32_bytes_to_vec(&bytes))
        .ok_or_else(|| EpisodeError::CorruptBlob { frame_id, detail: "depth holds negative or non-finite values".into() })
}

/// Random access into the packed features file.
pub struct FeatureFile {
    file: File,
    len_floats: u64,
}

impl FeatureFile {
    pub fn open(path: &Path) -> Result<Self, EpisodeError> {
        let file = open(path)?;
        let len = file.metadata()?.len();
        Ok(FeatureFile { file, len_floats: len / 4 })
    }

    pub fn len_floats(&self) -> u64 {
        self.len_floats
    }

    pub fn read(&mut self, offset: u64, dim: usize, frame_id: u64) -> Result<Vec<f64>, EpisodeError> {
        if offset + dim as u64 > self.len_floats {
            return Err(EpisodeError::CorruptBlob {
                frame_id,
                detail: format!("feature range {offset}+{dim} exceeds features file ({} floats)", self.len_floats),
            });
        }
        let mut buf = vec![0u8; dim * 4];
        self.file.seek(SeekFrom::Start(offset * 4))?;
        self.file.read_exact(&mut buf)?;
        Ok(f32_bytes_to_vec(&buf).into_iter().map(f64::from).collect())
    }
}

/// An opened episode. Frame records and actions are read eagerly (they are
/// small); depth maps and feature vectors are read per frame on demand.
pub struct Episode {
    pub dir: PathBuf,
    pub manifest: EpisodeManifest,
    pub records: Vec<FrameRecord>,
    pub actions: Vec<ActionAnnotation>,
}

impl Episode {
    pub fn open(dir: &Path) -> Result<Self, EpisodeError> {
        let manifest = read_manifest(dir)?;
        let records: Vec<FrameRecord> = read_jsonl(&dir.join(&manifest.paths.frames))?;
        if records.len() as u64 != manifest.frame_count {
            return Err(EpisodeError::Invalid(format!(
                "manifest declares {} frames, frames file has {}",
                manifest.frame_count,
                records.len()
            )));
        }
        let actions_path = dir.join(&manifest.paths.actions);
        let actions = if actions_path.exists() { read_jsonl(&actions_path)? } else { Vec::new() };
        Ok(Episode { dir: dir.to_path_buf(), manifest, records, actions })
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.manifest.intrinsics
    }

    pub fn frames(&self) -> Result<FrameIter<'_>, EpisodeError> {
        let features = FeatureFile::open(&self.dir.join(&self.manifest.paths.features))?;
        Ok(FrameIter { episode: self, features, next: 0 })
    }

    /// Hex SHA-256 over manifest and frame records; ties snapshots and answer
    /// keys to the episode they came from.
    pub fn digest(&self) -> Result<String, EpisodeError> {
        episode_digest(&self.dir, &self.manifest)
    }

    pub fn load_frame(
        &self,
        rec: &FrameRecord,
        features: &mut FeatureFile,
    ) -> Result<(FrameObservation, DepthMap), EpisodeError> {
        let intr = &self.manifest.intrinsics;
        let dims = self.manifest.dims;
        let depth = read_depth_blob(&self.dir.join(&rec.depth), intr, rec.frame_id)?;
        let ctx_feat = features.read(rec.ctx_offset, dims.ctx, rec.frame_id)?;
        let mut detections = Vec::with_capacity(rec.detections.len());
        for d in &rec.detections {
            let mask = match &d.mask {
                Some(rle) => Some(rle.decode().ok_or_else(|| EpisodeError::CorruptBlob {
                    frame_id: rec.frame_id,
                    detail: "mask run lengths do not cover the mask rectangle".into(),
                })?),
                None => None,
            };
            let [x0, y0, x1, y1] = d.bbox;
            detections.push(Observation {
                detection: Detection2D {
                    category: d.category.clone(),
                    bbox: PixelRect::new(x0, y0, x1, y1),
                    confidence: d.confidence,
                    mask,
                },
                features: FeaturePair::new(
                    features.read(d.clip_offset, dims.clip, rec.frame_id)?,
                    features.read(d.dino_offset, dims.dino, rec.frame_id)?,
                ),
            });
        }
        let frame =
            FrameObservation { frame_id: rec.frame_id, timestamp_s: rec.timestamp_s, pose: rec.pose, ctx_feat, detections };
        Ok((frame, depth))
    }
}

pub fn episode_digest(dir: &Path, manifest: &EpisodeManifest) -> Result<String, EpisodeError> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(manifest).expect("manifest serializes"));
    h.update(fs::read(dir.join(&manifest.paths.frames))?);
    Ok(hex::encode(h.finalize()))
}

/// Streams frames in file order, holding one depth map at a time.
pub struct FrameIter<'a> {
    episode: &'a Episode,
    features: FeatureFile,
    next: usize,
}

impl Iterator for FrameIter<'_> {
    type Item = Result<(FrameObservation, DepthMap), EpisodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.episode.records.get(self.next)?;
        self.next += 1;
        Some(self.episode.load_frame(rec, &mut self.features))
    }
}

/// Writes an episode incrementally. Feature vectors are stored as f32.
pub struct EpisodeWriter {
    dir: PathBuf,
    manifest: EpisodeManifest,
    frames: BufWriter<File>,
    features: BufWriter<File>,
    feature_floats: u64,
    last_ts: Option<f64>,
}

impl EpisodeWriter {
    pub fn create(
        dir: &Path,
        intrinsics: CameraIntrinsics,
        up_axis: UpAxis,
        dims: FeatureDims,
        provenance: &str,
    ) -> Result<Self, EpisodeError> {
        let paths = EpisodePaths::default();
        fs::create_dir_all(dir.join(&paths.depth_dir))?;
        let frames = BufWriter::new(File::create(dir.join(&paths.frames))?);
        let features = BufWriter::new(File::create(dir.join(&paths.features))?);
        let manifest = EpisodeManifest {
            schema_version: SCHEMA_VERSION,
            intrinsics,
            up_axis,
            dims,
            frame_count: 0,
            paths,
            provenance: provenance.to_string(),
        };
        Ok(EpisodeWriter { dir: dir.to_path_buf(), manifest, frames, features, feature_floats: 0, last_ts: None })
    }

    fn push_vector(&mut self, v: &[f64]) -> Result<u64, EpisodeError> {
        let offset = self.feature_floats;
        for x in v {
            self.features.write_all(&(*x as f32).to_le_bytes())?;
        }
        self.feature_floats += v.len() as u64;
        Ok(offset)
    }

    pub fn write_frame(&mut self, frame: &FrameObservation, depth: &DepthMap) -> Result<(), EpisodeError> {
        let intr = self.manifest.intrinsics;
        if depth.width != intr.width || depth.height != intr.height {
            return Err(EpisodeError::Invalid(format!("frame {} depth size mismatch", frame.frame_id)));
        }
        if self.last_ts.is_some_and(|t| frame.timestamp_s <= t) {
            return Err(EpisodeError::Invalid(format!("frame {} timestamp not increasing", frame.frame_id)));
        }
        self.last_ts = Some(frame.timestamp_s);
        let depth_rel = format!("{}/{:06}.f32", self.manifest.paths.depth_dir, frame.frame_id);
        let mut blob = Vec::with_capacity(depth.values.len() * 4);
        for v in &depth.values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(self.dir.join(&depth_rel), blob)?;

        let ctx_offset = self.push_vector(&frame.ctx_feat)?;
        let mut detections = Vec::with_capacity(frame.detections.len());
        for obs in &frame.detections {
            let d = &obs.detection;
            detections.push(DetectionRecord {
                category: d.category.clone(),
                bbox: [d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1],
                confidence: d.confidence,
                mask: d.mask.as_ref().map(MaskRle::encode),
                clip_offset: self.push_vector(&obs.features.clip)?,
                dino_offset: self.push_vector(&obs.features.dino)?,
            });
        }
        let rec = FrameRecord {
            frame_id: frame.frame_id,
            timestamp_s: frame.timestamp_s,
            pose: frame.pose,
            depth: depth_rel,
            ctx_offset,
            detections,
        };
        serde_json::to_writer(&mut self.frames, &rec).map_err(io::Error::from)?;
        self.frames.write_all(b"\n")?;
        self.manifest.frame_count += 1;
        Ok(())
    }

    pub fn write_actions(&mut self, actions: &[ActionAnnotation]) -> Result<(), EpisodeError> {
        write_jsonl(&self.dir.join(&self.manifest.paths.actions), actions)
    }

    pub fn finish(mut self) -> Result<EpisodeManifest, EpisodeError> {
        self.frames.flush()?;
        self.features.flush()?;
        let actions = self.dir.join(&self.manifest.paths.actions);
        if !actions.exists() {
            File::create(actions)?;
        }
        write_json(&self.dir.join(MANIFEST_FILE), &self.manifest)?;
        Ok(self.manifest)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), EpisodeError> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EpisodeError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::from)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EpisodeError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| EpisodeError::Parse { path: path.to_path_buf(), line: e.line(), msg: e.to_string() })
}

// ---- validation ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    SchemaMismatch,
    MissingFile,
    Parse,
    FrameCount,
    TimeOrder,
    DuplicateFrame,
    InvalidPose,
    NonUnitFeature,
    FeatureRange,
    BboxBounds,
    MaskInvalid,
    BlobLength,
    DepthValue,
    InvalidIntrinsics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, message: impl Into<String>) -> Self {
        Violation { kind, frame_id: None, detection: None, action: None, message: message.into() }
    }

    fn at_frame(mut self, frame_id: u64) -> Self {
        self.frame_id = Some(frame_id);
        self
    }

    fn at_detection(mut self, index: usize) -> Self {
        self.detection = Some(index);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub frames_checked: u64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn error_violation(e: EpisodeError) -> Violation {
    match e {
        EpisodeError::SchemaMismatch { .. } => Violation::new(ViolationKind::SchemaMismatch, e.to_string()),
        EpisodeError::MissingFile(_) => Violation::new(ViolationKind::MissingFile, e.to_string()),
        EpisodeError::CorruptBlob { frame_id, .. } => Violation::new(ViolationKind::BlobLength, e.to_string()).at_frame(frame_id),
        _ => Violation::new(ViolationKind::Parse, e.to_string()),
    }
}

fn check_unit(v: &[f64], what: &str) -> Option<String> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    ((n - 1.0).abs() > UNIT_TOL).then(|| format!("{what} has norm {n:.6}"))
}

/// Checks every episode invariant and reports violations with locations.
/// Never fails: problems are report content.
pub fn validate_episode(dir: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;
    let manifest = match read_manifest(dir) {
        Ok(m) => m,
        Err(e) => {
            v.push(error_violation(e));
            return report;
        }
    };
    let intr = manifest.intrinsics;
    if intr.validate().is_err() {
        v.push(Violation::new(
            ViolationKind::InvalidIntrinsics,
            "intrinsics must be finite with positive focal lengths and size",
        ));
        return report;
    }
    let dims = manifest.dims;
    if dims.clip == 0 || dims.dino == 0 || dims.ctx == 0 {
        v.push(Violation::new(ViolationKind::Parse, "feature dims must be positive"));
        return report;
    }
    let records: Vec<FrameRecord> = match read_jsonl(&dir.join(&manifest.paths.frames)) {
        Ok(r) => r,
        Err(e) => {
            v.push(error_violation(e));
            return report;
        }
    };
    if records.len() as u64 != manifest.frame_count {
        v.push(Violation::new(
            ViolationKind::FrameCount,
            format!("manifest declares {} frames, frames file has {}", manifest.frame_count, records.len()),
        ));
    }
    let mut features = match FeatureFile::open(&dir.join(&manifest.paths.features)) {
        Ok(f) => Some(f),
        Err(e) => {
            v.push(error_violation(e));
            None
        }
    };
    let byte_len = fs::metadata(dir.join(&manifest.paths.features)).map(|m| m.len()).unwrap_or(0);
    if !byte_len.is_multiple_of(4) {
        v.push(Violation::new(ViolationKind::BlobLength, format!("features file length {byte_len} is not a multiple of 4")));
    }

    let mut seen = std::collections::BTreeSet::new();
    let mut last_ts: Option<f64> = None;
    for rec in &records {
        let fid = rec.frame_id;
        report.frames_checked += 1;
        if !seen.insert(fid) {
            v.push(Violation::new(ViolationKind::DuplicateFrame, format!("frame id {fid} repeats")).at_frame(fid));
        }
        if !rec.timestamp_s.is_finite() || last_ts.is_some_and(|t| rec.timestamp_s <= t) {
            v.push(
                Violation::new(ViolationKind::TimeOrder, format!("timestamp {} does not increase", rec.timestamp_s))
                    .at_frame(fid),
            );
        }
        if rec.timestamp_s.is_finite() {
            last_ts = Some(rec.timestamp_s);
        }
        if let Err(e) = rec.pose.validate() {
            v.push(Violation::new(ViolationKind::InvalidPose, e.to_string()).at_frame(fid));
        }
        match read_depth_blob(&dir.join(&rec.depth), &intr, fid) {
            Ok(_) => {}
            Err(EpisodeError::CorruptBlob { detail, .. }) if detail.contains("negative") => {
                v.push(Violation::new(ViolationKind::DepthValue, detail).at_frame(fid));
            }
            Err(e) => v.push(error_violation(e).at_frame(fid)),
        }
        if let Some(f) = features.as_mut() {
            match f.read(rec.ctx_offset, dims.ctx, fid) {
                Ok(ctx) => {
                    if let Some(msg) = check_unit(&ctx, "ctx feature") {
                        v.push(Violation::new(ViolationKind::NonUnitFeature, msg).at_frame(fid));
                    }
                }
                Err(e) => v.push(Violation::new(ViolationKind::FeatureRange, e.to_string()).at_frame(fid)),
            }
        }
        for (i, d) in rec.detections.iter().enumerate() {
            let [x0, y0, x1, y1] = d.bbox;
            let in_bounds = x0 >= 0.0 && y0 >= 0.0 && x0 < x1 && y0 < y1 && x1 <= intr.width as f64 && y1 <= intr.height as f64;
            if !in_bounds || !(0.0..=1.0).contains(&d.confidence) {
                v.push(
                    Violation::new(
                        ViolationKind::BboxBounds,
                        format!("bbox {:?} / confidence {} out of range", d.bbox, d.confidence),
                    )
                    .at_frame(fid)
                    .at_detection(i),
                );
            }
            if let Some(rle) = &d.mask {
                let det = rle.decode().map(|m| Detection2D {
                    category: d.category.clone(),
                    bbox: PixelRect::new(x0, y0, x1, y1),
                    confidence: d.confidence.clamp(0.0, 1.0),
                    mask: Some(m),
                });
                if !det.is_some_and(|det| det.validate(intr.width, intr.height).is_ok() || !in_bounds) {
                    v.push(
                        Violation::new(ViolationKind::MaskInvalid, "mask does not decode inside its bbox")
                            .at_frame(fid)
                            .at_detection(i),
                    );
                }
            }
            if let Some(f) = features.as_mut() {
                for (name, off, dim) in [("clip feature", d.clip_offset, dims.clip), ("dino feature", d.dino_offset, dims.dino)] {
                    match f.read(off, dim, fid) {
                        Ok(vec) => {
                            if let Some(msg) = check_unit(&vec, name) {
                                v.push(Violation::new(ViolationKind::NonUnitFeature, msg).at_frame(fid).at_detection(i));
                            }
                        }
                        Err(e) => {
                            v.push(Violation::new(ViolationKind::FeatureRange, e.to_string()).at_frame(fid).at_detection(i))
                        }
                    }
                }
            }
        }
    }

    let actions_path = dir.join(&manifest.paths.actions);
    if actions_path.exists() {
        match read_jsonl::<ActionAnnotation>(&actions_path) {
            Ok(actions) => {
                let mut last: Option<f64> = None;
                for (i, a) in actions.iter().enumerate() {
                    if !a.timestamp_s.is_finite() || last.is_some_and(|t| a.timestamp_s < t) {
                        let mut viol = Violation::new(
                            ViolationKind::TimeOrder,
                            format!("action timestamp {} goes backwards", a.timestamp_s),
                        );
                        viol.action = Some(i);
                        v.push(viol);
                    }
                    last = Some(a.timestamp_s);
                }
            }
            Err(e) => v.push(error_violation(e)),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip() {
        let m = PixelMask::from_pixels(3, 4, 5, 3, [(3, 4), (4, 4), (7, 6), (5, 5)]);
        let rle = MaskRle::encode(&m);
        assert_eq!(rle.counts[0], 0);
        assert_eq!(rle.decode().unwrap(), m);
        let empty = PixelMask::from_pixels(0, 0, 2, 2, []);
        assert_eq!(MaskRle::encode(&empty).counts, vec![4]);
        let mut bad = rle.clone();
        bad.counts.push(1);
        assert!(bad.decode().is_none());
    }
}
