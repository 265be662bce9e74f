//! Pinhole camera, depth unprojection, detection lifting and box visibility.
//!
//! Conventions: camera frame is x right, y down, z forward. Pixel `(col, row)`
//! covers the continuous square `[col, col+1) x [row, row+1)` and its center
//! sits at `(col + 0.5, row + 0.5)`. Poses are world-from-camera. Depth maps
//! hold z-depth in meters with `0.0` meaning "no measurement".

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("only {valid} valid depth pixels, need at least {required}")]
    InsufficientDepth { valid: usize, required: usize },
    #[error("detection does not fit a {width}x{height} image")]
    InvalidDetection { width: u32, height: u32 },
    #[error("depth map is {got_w}x{got_h}, camera expects {want_w}x{want_h}")]
    DepthSizeMismatch { got_w: u32, got_h: u32, want_w: u32, want_h: u32 },
    #[error("invalid camera intrinsics")]
    InvalidIntrinsics,
    #[error("pose quaternion is not unit norm (norm = {0})")]
    NonUnitQuaternion(f64),
    #[error("box has min > max on some axis")]
    InvalidBox,
}

/// Minimum number of valid depth pixels a detection needs to be lifted.
pub const MIN_LIFT_PIXELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, o: &Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(&self, o: &Vec3) -> Vec3 {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Vec3([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.dot(self))
    }

    pub fn normalized(&self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            *self
        } else {
            *self * (1.0 / n)
        }
    }

    pub fn distance(&self, o: &Vec3) -> f64 {
        (*self - *o).norm()
    }

    pub fn min(&self, o: &Vec3) -> Vec3 {
        Vec3(core::array::from_fn(|k| self.0[k].min(o.0[k])))
    }

    pub fn max(&self, o: &Vec3) -> Vec3 {
        Vec3(core::array::from_fn(|k| self.0[k].max(o.0[k])))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3(core::array::from_fn(|k| self.0[k] + o.0[k]))
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3(core::array::from_fn(|k| self.0[k] - o.0[k]))
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3(self.0.map(|v| v * s))
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3(self.0.map(|v| -v))
    }
}

/// World "up" direction; altitude is the coordinate along it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UpAxis {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "+y")]
    PosY,
    #[default]
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "-z")]
    NegZ,
}

impl UpAxis {
    pub fn index(self) -> usize {
        match self {
            UpAxis::PosX | UpAxis::NegX => 0,
            UpAxis::PosY | UpAxis::NegY => 1,
            UpAxis::PosZ | UpAxis::NegZ => 2,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            UpAxis::PosX | UpAxis::PosY | UpAxis::PosZ => 1.0,
            _ => -1.0,
        }
    }

    pub fn vector(self) -> Vec3 {
        let mut v = [0.0; 3];
        v[self.index()] = self.sign();
        Vec3(v)
    }

    /// The two axes spanning the horizontal plane.
    pub fn horizontal(self) -> [usize; 2] {
        match self.index() {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    /// (bottom, top) altitude of a box.
    pub fn vertical_extent(self, b: &Box3D) -> (f64, f64) {
        let k = self.index();
        if self.sign() > 0.0 {
            (b.min.0[k], b.max.0[k])
        } else {
            (-b.max.0[k], -b.min.0[k])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let intr = CameraIntrinsics { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics)
        }
    }

    /// Camera-frame point for pixel `(col, row)` observed at z-depth `z`.
    pub fn unproject(&self, col: u32, row: u32, z: f64) -> Vec3 {
        let d = self.pixel_ray(col, row);
        d * z
    }

    /// Direction through the pixel center, scaled so that its z component is 1.
    pub fn pixel_ray(&self, col: u32, row: u32) -> Vec3 {
        Vec3::new((col as f64 + 0.5 - self.cx) / self.fx, (row as f64 + 0.5 - self.cy) / self.fy, 1.0)
    }

    /// Continuous image coordinates of a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        if p.z() <= 0.0 {
            return None;
        }
        Some((self.fx * p.x() / p.z() + self.cx, self.fy * p.y() / p.z() + self.cy))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= self.width as f64 && v <= self.height as f64
    }
}

/// Rigid world-from-camera transform. Rotation is a unit quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [f64; 4],
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub const fn identity() -> Self {
        Pose { rotation: [1.0, 0.0, 0.0, 0.0], translation: Vec3::ZERO }
    }

    pub fn new(rotation: [f64; 4], translation: Vec3) -> Result<Self, GeometryError> {
        let p = Pose { rotation, translation };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = math::sqrt(self.rotation.iter().map(|v| v * v).sum());
        if (n - 1.0).abs() > 1e-6 || !self.translation.0.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonUnitQuaternion(n));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.rotation;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Builds a pose from a proper rotation matrix (world-from-camera) and translation.
    pub fn from_matrix(m: [[f64; 3]; 3], translation: Vec3) -> Self {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = math::sqrt(trace + 1.0) * 2.0;
            [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = math::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0;
            [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
        } else if m[1][1] > m[2][2] {
            let s = math::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0;
            [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s]
        } else {
            let s = math::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0;
            [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s]
        };
        let mut rotation = if q[0] < 0.0 { q.map(|v| -v) } else { q };
        let n = math::sqrt(rotation.iter().map(|v| v * v).sum());
        rotation.iter_mut().for_each(|v| *v /= n);
        Pose { rotation, translation }
    }

    /// Camera at `eye` looking at `target`, with image "up" as close to `up` as possible.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let forward = (target - eye).normalized();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vec3::new(1.0, 0.0, 0.0));
        }
        let right = right.normalized();
        let down = forward.cross(&right);
        let m = [[right.x(), down.x(), forward.x()], [right.y(), down.y(), forward.y()], [right.z(), down.z(), forward.z()]];
        Pose::from_matrix(m, eye)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        self.rotate(p) + self.translation
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        let r = self.rotation_matrix();
        let d = p - self.translation;
        Vec3(core::array::from_fn(|i| r[0][i] * d.0[0] + r[1][i] * d.0[1] + r[2][i] * d.0[2]))
    }

    /// Applies only the rotation part.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = self.rotation_matrix();
        Vec3(core::array::from_fn(|i| r[i][0] * v.0[0] + r[i][1] * v.0[1] + r[i][2] * v.0[2]))
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let [aw, ax, ay, az] = self.rotation;
        let [bw, bx, by, bz] = other.rotation;
        let mut q = [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ];
        let n = math::sqrt(q.iter().map(|v| v * v).sum());
        q.iter_mut().for_each(|v| *v /= n);
        Pose { rotation: q, translation: self.camera_to_world(other.translation) }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit) with a translation.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Pose {
        let a = axis.normalized();
        let (s, c) = (libm::sin(angle / 2.0), libm::cos(angle / 2.0));
        Pose { rotation: [c, a.x() * s, a.y() * s, a.z() * s], translation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Option<Self> {
        let ok = values.len() == width as usize * height as usize && values.iter().all(|v| v.is_finite() && *v >= 0.0);
        ok.then_some(DepthMap { width, height, values })
    }

    pub fn filled(width: u32, height: u32, z: f32) -> Self {
        DepthMap { width, height, values: alloc::vec![z; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> f32 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, col: u32, row: u32, z: f32) {
        let w = self.width as usize;
        self.values[row as usize * w + col as usize] = z;
    }

    fn check_size(&self, intr: &CameraIntrinsics) -> Result<(), GeometryError> {
        if self.width != intr.width || self.height != intr.height {
            return Err(GeometryError::DepthSizeMismatch {
                got_w: self.width,
                got_h: self.height,
                want_w: intr.width,
                want_h: intr.height,
            });
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelRect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        PixelRect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn iou(&self, o: &PixelRect) -> f64 {
        let w = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0.0);
        let h = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0.0);
        let inter = w * h;
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Integer pixel index ranges `[c0, c1) x [r0, r1)` whose squares touch the rect,
    /// clipped to the image.
    pub fn pixel_span(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let clampi = |v: f64, hi: u32| v.max(0.0).min(hi as f64) as u32;
        (
            clampi(math::floor(self.x0), width),
            clampi(math::ceil(self.x1), width),
            clampi(math::floor(self.y0), height),
            clampi(math::ceil(self.y1), height),
        )
    }

    /// Pixel ranges whose centers lie inside the rect.
    pub fn pixel_centers_span(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let lo = |v: f64, hi: u32| math::ceil(v - 0.5).max(0.0).min(hi as f64) as u32;
        let hi_ex = |v: f64, hi: u32| (math::floor(v - 0.5) + 1.0).max(0.0).min(hi as f64) as u32;
        (lo(self.x0, width), hi_ex(self.x1, width), lo(self.y0, height), hi_ex(self.y1, height))
    }
}

/// Binary segmentation stored as a bitmap over an integer pixel window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelMask {
    pub col0: u32,
    pub row0: u32,
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl PixelMask {
    pub fn from_pixels(col0: u32, row0: u32, width: u32, height: u32, pixels: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut bits = alloc::vec![false; width as usize * height as usize];
        for (c, r) in pixels {
            bits[(r - row0) as usize * width as usize + (c - col0) as usize] = true;
        }
        PixelMask { col0, row0, width, height, bits }
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(i, _)| {
            let w = self.width as usize;
            (self.col0 + (i % w) as u32, self.row0 + (i / w) as u32)
        })
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    pub category: alloc::string::String,
    pub bbox: PixelRect,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PixelMask>,
}

impl Detection2D {
    pub fn validate(&self, width: u32, height: u32) -> Result<(), GeometryError> {
        let b = &self.bbox;
        let mut ok = b.x0 >= 0.0
            && b.x0 < b.x1
            && b.x1 <= width as f64
            && b.y0 >= 0.0
            && b.y0 < b.y1
            && b.y1 <= height as f64
            && (0.0..=1.0).contains(&self.confidence);
        if let Some(m) = &self.mask {
            ok &= m.bits.len() == m.width as usize * m.height as usize
                && m.pixels().all(|(c, r)| {
                    c as f64 >= math::floor(b.x0)
                        && (c as f64) < math::ceil(b.x1)
                        && r as f64 >= math::floor(b.y0)
                        && (r as f64) < math::ceil(b.y1)
                });
        }
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidDetection { width, height })
        }
    }

    /// Pixels that belong to the object: the mask if present, else every pixel
    /// whose center lies inside the box.
    pub fn pixels(&self, width: u32, height: u32) -> Vec<(u32, u32)> {
        match &self.mask {
            Some(m) => m.pixels().collect(),
            None => {
                let (c0, c1, r0, r1) = self.bbox.pixel_centers_span(width, height);
                (r0..r1).flat_map(|r| (c0..c1).map(move |c| (c, r))).collect()
            }
        }
    }
}

/// Axis-aligned world-frame box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub min: Vec3,
    pub max: Vec3,
}

impl Box3D {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        let b = Box3D { min, max };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox)
        }
    }

    pub fn from_center_size(center: Vec3, size: Vec3) -> Self {
        let h = size * 0.5;
        Box3D { min: center - h, max: center + h }
    }

    /// Tight bounds of a non-empty point set.
    pub fn bounding(points: &[Vec3]) -> Option<Self> {
        let first = *points.first()?;
        let (min, max) = points.iter().fold((first, first), |(lo, hi), p| (lo.min(p), hi.max(p)));
        Some(Box3D { min, max })
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|k| self.min.0[k].is_finite() && self.max.0[k].is_finite() && self.min.0[k] <= self.max.0[k])
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let s = self.size();
        s.0[0].max(0.0) * s.0[1].max(0.0) * s.0[2].max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.size().0.iter().any(|v| *v <= 0.0)
    }

    /// Clamped per-axis overlap product.
    pub fn intersection_volume(&self, o: &Box3D) -> f64 {
        (0..3).map(|k| (self.max.0[k].min(o.max.0[k]) - self.min.0[k].max(o.min.0[k])).max(0.0)).product()
    }

    /// Closed containment: `o` lies inside `self`.
    pub fn contains_box(&self, o: &Box3D) -> bool {
        (0..3).all(|k| self.min.0[k] <= o.min.0[k] && o.max.0[k] <= self.max.0[k])
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|k| self.min.0[k] <= p.0[k] && p.0[k] <= self.max.0[k])
    }

    pub fn corners(&self) -> [Vec3; 8] {
        core::array::from_fn(|i| {
            Vec3::new(
                if i & 1 == 0 { self.min.x() } else { self.max.x() },
                if i & 2 == 0 { self.min.y() } else { self.max.y() },
                if i & 4 == 0 { self.min.z() } else { self.max.z() },
            )
        })
    }

    pub fn translated(&self, d: Vec3) -> Box3D {
        Box3D { min: self.min + d, max: self.max + d }
    }

    /// Largest per-corner distance to another box (min/max corners compared).
    pub fn corner_distance(&self, o: &Box3D) -> f64 {
        self.corners().iter().zip(o.corners().iter()).map(|(a, b)| a.distance(b)).fold(0.0, f64::max)
    }

    /// Ray entry parameter `t >= 0` for `origin + t·dir`, `None` on a miss.
    /// An origin inside the box enters at `t = 0`.
    pub fn ray_entry(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let mut t_near = 0.0_f64;
        let mut t_far = f64::INFINITY;
        for k in 0..3 {
            let (o, d) = (origin.0[k], dir.0[k]);
            if d == 0.0 {
                if o < self.min.0[k] || o > self.max.0[k] {
                    return None;
                }
            } else {
                let t1 = (self.min.0[k] - o) / d;
                let t2 = (self.max.0[k] - o) / d;
                let (a, b) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                t_near = t_near.max(a);
                t_far = t_far.min(b);
                if t_near > t_far {
                    return None;
                }
            }
        }
        Some(t_near)
    }
}

/// Outcome of projecting (and optionally depth-testing) a box in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VisibilityStatus {
    Visible(PixelRect),
    Occluded(PixelRect),
    OutOfView,
}

impl VisibilityStatus {
    pub fn region(&self) -> Option<PixelRect> {
        match self {
            VisibilityStatus::Visible(r) | VisibilityStatus::Occluded(r) => Some(*r),
            VisibilityStatus::OutOfView => None,
        }
    }

    pub fn is_visible(&self) -> bool {
        matches!(self, VisibilityStatus::Visible(_))
    }

    pub fn is_out_of_view(&self) -> bool {
        matches!(self, VisibilityStatus::OutOfView)
    }
}

/// World points for every valid depth pixel of the detection.
pub fn unproject_detection(
    det: &Detection2D,
    depth: &DepthMap,
    pose: &Pose,
    intr: &CameraIntrinsics,
) -> Result<Vec<Vec3>, GeometryError> {
    depth.check_size(intr)?;
    det.validate(intr.width, intr.height)?;
    Ok(det
        .pixels(intr.width, intr.height)
        .into_iter()
        .filter_map(|(c, r)| {
            let z = depth.get(c, r);
            (z > 0.0).then(|| pose.camera_to_world(intr.unproject(c, r, z as f64)))
        })
        .collect())
}

/// Number of points dropped from each end when trimming `n` points.
pub fn trim_count(n: usize, trim: f64) -> usize {
    // tolerance absorbs representation error, e.g. 0.1 * 30
    (math::floor(trim * n as f64 + 1e-9) as usize).min(n / 2)
}

/// Sorts `points` by distance to `eye` and keeps the middle part after dropping
/// `trim_count` points from each end.
pub fn trim_by_distance(mut points: Vec<Vec3>, eye: Vec3, trim: f64) -> Vec<Vec3> {
    let n = points.len();
    let drop = trim_count(n, trim);
    let mut keyed: Vec<(f64, Vec3)> = points.drain(..).map(|p| (p.distance(&eye), p)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed[drop..n - drop].iter().map(|(_, p)| *p).collect()
}

/// Lifts a 2D detection to a world-frame box via depth unprojection and
/// distance trimming.
pub fn lift_detection(
    det: &Detection2D,
    depth: &DepthMap,
    pose: &Pose,
    intr: &CameraIntrinsics,
    trim: f64,
) -> Result<Box3D, GeometryError> {
    let points = unproject_detection(det, depth, pose, intr)?;
    if points.len() < MIN_LIFT_PIXELS {
        return Err(GeometryError::InsufficientDepth { valid: points.len(), required: MIN_LIFT_PIXELS });
    }
    let kept = trim_by_distance(points, pose.center(), trim);
    Ok(Box3D::bounding(&kept).expect("trimming keeps at least one point"))
}

/// Screen region covered by the box's projected corners, without depth testing.
pub fn project_box(b: &Box3D, pose: &Pose, intr: &CameraIntrinsics) -> VisibilityStatus {
    let projected: Vec<(f64, f64)> = b.corners().iter().filter_map(|c| intr.project(pose.world_to_camera(*c))).collect();
    if !projected.iter().any(|(u, v)| intr.contains(*u, *v)) {
        return VisibilityStatus::OutOfView;
    }
    let (w, h) = (intr.width as f64, intr.height as f64);
    let mut r = PixelRect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (u, v) in projected {
        r.x0 = r.x0.min(u);
        r.y0 = r.y0.min(v);
        r.x1 = r.x1.max(u);
        r.y1 = r.y1.max(v);
    }
    let clipped = PixelRect::new(r.x0.clamp(0.0, w), r.y0.clamp(0.0, h), r.x1.clamp(0.0, w), r.y1.clamp(0.0, h));
    if clipped.is_empty() {
        // a single corner exactly on the border
        return VisibilityStatus::OutOfView;
    }
    VisibilityStatus::Visible(clipped)
}

/// Pixel sample positions used for occlusion testing: every pixel of the span
/// when it has at most `min_samples` pixels, otherwise a uniform grid with at
/// least `min_samples` points.
pub fn sample_grid(span: (u32, u32, u32, u32), min_samples: usize) -> Vec<(u32, u32)> {
    let (c0, c1, r0, r1) = span;
    let (w, h) = ((c1 - c0) as usize, (r1 - r0) as usize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    if w * h <= min_samples {
        return (r0..r1).flat_map(|r| (c0..c1).map(move |c| (c, r))).collect();
    }
    let side = {
        let mut s = 1;
        while s * s < min_samples {
            s += 1;
        }
        s
    };
    let mut nx = w.min(side);
    let mut ny = h.min(min_samples.div_ceil(nx));
    if nx * ny < min_samples {
        nx = w.min(min_samples.div_ceil(ny));
    }
    if nx * ny < min_samples {
        ny = h.min(min_samples.div_ceil(nx));
    }
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let r = r0 + ((j as f64 + 0.5) * h as f64 / ny as f64) as u32;
        for i in 0..nx {
            let c = c0 + ((i as f64 + 0.5) * w as f64 / nx as f64) as u32;
            out.push((c, r));
        }
    }
    out
}

/// Minimum number of depth samples taken by [`check_visibility`].
pub const VISIBILITY_SAMPLES: usize = 64;

/// Projects the box and tests the observed depth inside its screen region.
///
/// A sample is blocked when `observed + margin` is still in front of the box
/// surface hit by that pixel's ray. Rays that miss the box, and every ray of a
/// zero-thickness box, use the depth of the box center instead. Samples with
/// no depth measurement are ignored; a region with no usable samples cannot be
/// confirmed unoccluded and is reported as `Occluded`.
pub fn check_visibility(
    b: &Box3D,
    depth: &DepthMap,
    pose: &Pose,
    intr: &CameraIntrinsics,
    margin: f64,
    occluded_frac: f64,
) -> VisibilityStatus {
    let region = match project_box(b, pose, intr) {
        VisibilityStatus::Visible(r) => r,
        other => return other,
    };
    if depth.check_size(intr).is_err() {
        return VisibilityStatus::Occluded(region);
    }
    let eye = pose.center();
    let center_depth = pose.world_to_camera(b.center()).z();
    let degenerate = b.is_degenerate();
    let samples = sample_grid(region.pixel_span(intr.width, intr.height), VISIBILITY_SAMPLES);
    let (mut used, mut blocked) = (0usize, 0usize);
    for (c, r) in samples {
        let observed = depth.get(c, r) as f64;
        if observed <= 0.0 {
            continue;
        }
        let surface =
            if degenerate { center_depth } else { b.ray_entry(eye, pose.rotate(intr.pixel_ray(c, r))).unwrap_or(center_depth) };
        used += 1;
        if observed + margin < surface {
            blocked += 1;
        }
    }
    if used == 0 || blocked as f64 / used as f64 > occluded_frac {
        VisibilityStatus::Occluded(region)
    } else {
        VisibilityStatus::Visible(region)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap()
    }

    fn det_full(w: u32, h: u32) -> Detection2D {
        Detection2D {
            category: "thing".to_string(),
            bbox: PixelRect::new(0.0, 0.0, w as f64, h as f64),
            confidence: 1.0,
            mask: None,
        }
    }

    #[test]
    fn trim_keeps_middle_of_twenty() {
        let pts: Vec<Vec3> = (1..=20).map(|d| Vec3::new(0.0, 0.0, d as f64)).collect();
        let kept = trim_by_distance(pts, Vec3::ZERO, 0.10);
        let zs: Vec<f64> = kept.iter().map(|p| p.z()).collect();
        assert_eq!(zs, (3..=18).map(|d| d as f64).collect::<Vec<_>>());
    }

    #[test]
    fn trim_count_is_floor() {
        assert_eq!(trim_count(19, 0.1), 1);
        assert_eq!(trim_count(30, 0.1), 3);
        assert_eq!(trim_count(10, 0.1), 1);
        assert_eq!(trim_count(3, 0.9), 1);
    }

    #[test]
    fn planar_depth_gives_flat_box() {
        let i = intr();
        let depth = DepthMap::filled(64, 48, 2.0);
        let b = lift_detection(&det_full(64, 48), &depth, &Pose::identity(), &i, 0.1).unwrap();
        assert_eq!(b.max.z() - b.min.z(), 0.0);
        assert!((b.min.z() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn insufficient_depth_is_reported() {
        let i = intr();
        let mut depth = DepthMap::filled(64, 48, 0.0);
        for c in 0..9 {
            depth.set(c, 0, 1.0);
        }
        let err = lift_detection(&det_full(64, 48), &depth, &Pose::identity(), &i, 0.1).unwrap_err();
        assert_eq!(err, GeometryError::InsufficientDepth { valid: 9, required: 10 });
    }

    #[test]
    fn mask_restricts_pixels() {
        let i = intr();
        let mut depth = DepthMap::filled(64, 48, 5.0);
        for r in 10..20 {
            for c in 10..20 {
                depth.set(c, r, 1.0);
            }
        }
        let mask = PixelMask::from_pixels(10, 10, 10, 10, (10..20).flat_map(|r| (10..20).map(move |c| (c, r))));
        let det = Detection2D {
            category: "a".to_string(),
            bbox: PixelRect::new(5.0, 5.0, 25.0, 25.0),
            confidence: 0.9,
            mask: Some(mask),
        };
        let b = lift_detection(&det, &depth, &Pose::identity(), &i, 0.0).unwrap();
        assert!((b.max.z() - 1.0).abs() < 1e-12 && (b.min.z() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_detection_rejected() {
        let i = intr();
        let depth = DepthMap::filled(64, 48, 1.0);
        let mut det = det_full(64, 48);
        det.bbox.x1 = 65.0;
        assert!(matches!(lift_detection(&det, &depth, &Pose::identity(), &i, 0.1), Err(GeometryError::InvalidDetection { .. })));
    }

    #[test]
    fn on_axis_box_projects_to_principal_point() {
        let i = intr();
        let b = Box3D::from_center_size(Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.2, 0.2, 0.2));
        let r = project_box(&b, &Pose::identity(), &i).region().unwrap();
        let (u, v) = r.center();
        assert!((u - 32.0).abs() < 1e-9 && (v - 24.0).abs() < 1e-9);
    }

    #[test]
    fn box_behind_camera_out_of_view() {
        let i = intr();
        let b = Box3D::from_center_size(Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.2, 0.2, 0.2));
        assert_eq!(project_box(&b, &Pose::identity(), &i), VisibilityStatus::OutOfView);
        let depth = DepthMap::filled(64, 48, 1.0);
        assert_eq!(check_visibility(&b, &depth, &Pose::identity(), &i, 0.1, 0.5), VisibilityStatus::OutOfView);
    }

    #[test]
    fn unobstructed_box_is_visible() {
        let i = intr();
        let b = Box3D::new(Vec3::new(-0.2, -0.2, 2.0), Vec3::new(0.2, 0.2, 2.4)).unwrap();
        let depth = DepthMap::filled(64, 48, 2.0);
        assert!(check_visibility(&b, &depth, &Pose::identity(), &i, 0.1, 0.5).is_visible());
    }

    #[test]
    fn occluder_in_front_blocks() {
        let i = intr();
        let b = Box3D::new(Vec3::new(-0.2, -0.2, 2.0), Vec3::new(0.2, 0.2, 2.4)).unwrap();
        let depth = DepthMap::filled(64, 48, 1.5);
        assert!(matches!(check_visibility(&b, &depth, &Pose::identity(), &i, 0.1, 0.5), VisibilityStatus::Occluded(_)));
    }

    #[test]
    fn no_depth_means_occluded() {
        let i = intr();
        let b = Box3D::new(Vec3::new(-0.2, -0.2, 2.0), Vec3::new(0.2, 0.2, 2.4)).unwrap();
        let depth = DepthMap::filled(64, 48, 0.0);
        assert!(matches!(check_visibility(&b, &depth, &Pose::identity(), &i, 0.1, 0.5), VisibilityStatus::Occluded(_)));
    }

    #[test]
    fn sample_grid_sizes() {
        assert_eq!(sample_grid((0, 5, 0, 5), 64).len(), 25);
        assert!(sample_grid((0, 100, 0, 80), 64).len() >= 64);
        assert!(sample_grid((0, 4, 0, 300), 64).len() >= 64);
        assert!(sample_grid((0, 200, 0, 2), 64).len() >= 64);
        assert!(sample_grid((3, 3, 0, 10), 64).is_empty());
    }

    #[test]
    fn look_at_points_forward() {
        let p = Pose::look_at(Vec3::new(0.0, 0.0, 1.0), Vec3::new(2.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0));
        let f = p.rotate(Vec3::new(0.0, 0.0, 1.0));
        assert!((f.x() - 1.0).abs() < 1e-12);
        let down = p.rotate(Vec3::new(0.0, 1.0, 0.0));
        assert!((down.z() + 1.0).abs() < 1e-12);
        p.validate().unwrap();
        let q = p.world_to_camera(p.camera_to_world(Vec3::new(0.3, -0.2, 1.7)));
        assert!(q.distance(&Vec3::new(0.3, -0.2, 1.7)) < 1e-12);
    }

    #[test]
    fn ray_entry_degenerate_plane() {
        let b = Box3D::new(Vec3::new(-1.0, -1.0, 2.0), Vec3::new(1.0, 1.0, 2.0)).unwrap();
        assert_eq!(b.ray_entry(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0)), Some(2.0));
        assert_eq!(b.ray_entry(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)), None);
    }

    #[test]
    fn up_axis_extent() {
        let b = Box3D::new(Vec3::new(0.0, 1.0, 2.0), Vec3::new(1.0, 3.0, 5.0)).unwrap();
        assert_eq!(UpAxis::PosZ.vertical_extent(&b), (2.0, 5.0));
        assert_eq!(UpAxis::NegY.vertical_extent(&b), (-3.0, -1.0));
        assert_eq!(UpAxis::PosY.horizontal(), [0, 2]);
    }
}
