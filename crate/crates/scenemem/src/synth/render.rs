//! Exact ray-casting of axis-aligned boxes over an infinite floor at z = 0.

use scenemem_core::{Box3D, CameraIntrinsics, PixelRect, Pose, Vec3};

/// Pixel code for "ray hits nothing".
pub const CODE_NONE: u32 = 0;
/// Pixel code for the floor plane.
pub const CODE_FLOOR: u32 = 1;

/// Pixel code of object `index`.
pub fn object_code(index: usize) -> u32 {
    index as u32 + 2
}

pub fn code_object(code: u32) -> Option<usize> {
    (code >= 2).then(|| (code - 2) as usize)
}

/// Half-open pixel span `(c0, c1, r0, r1)`.
pub type Span = (u32, u32, u32, u32);

pub struct Render {
    pub span: Span,
    /// z-depth per pixel of `span`, row-major; 0 where nothing is hit.
    pub depth: Vec<f32>,
    pub codes: Vec<u32>,
    /// Pixels of `span` whose ray hits object `i`, occluded or not.
    pub self_hits: Vec<u32>,
}

impl Render {
    fn width(&self) -> usize {
        (self.span.1 - self.span.0) as usize
    }

    pub fn code_at(&self, col: u32, row: u32) -> u32 {
        self.codes[(row - self.span.2) as usize * self.width() + (col - self.span.0) as usize]
    }

    /// Most frequent code; ties go to the smaller code.
    pub fn dominant(&self) -> u32 {
        let mut counts = std::collections::BTreeMap::<u32, usize>::new();
        for c in &self.codes {
            *counts.entry(*c).or_default() += 1;
        }
        counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map_or(CODE_NONE, |(c, _)| c)
    }
}

struct Rays {
    origin: Vec3,
    r: [[f64; 3]; 3],
    intr: CameraIntrinsics,
}

impl Rays {
    fn new(pose: &Pose, intr: &CameraIntrinsics) -> Self {
        Rays { origin: pose.center(), r: pose.rotation_matrix(), intr: *intr }
    }

    /// World direction whose camera z-component is 1, so ray parameters are z-depths.
    fn dir(&self, col: u32, row: u32) -> Vec3 {
        let x = (col as f64 + 0.5 - self.intr.cx) / self.intr.fx;
        let y = (row as f64 + 0.5 - self.intr.cy) / self.intr.fy;
        let r = &self.r;
        Vec3::new(r[0][0] * x + r[0][1] * y + r[0][2], r[1][0] * x + r[1][1] * y + r[1][2], r[2][0] * x + r[2][1] * y + r[2][2])
    }
}

/// Screen span that can contain the box, or the full image when a corner is
/// behind the camera.
fn box_span(b: &Box3D, pose: &Pose, intr: &CameraIntrinsics) -> Span {
    let full = (0, intr.width, 0, intr.height);
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in b.corners() {
        let p = pose.world_to_camera(c);
        if p.z() <= 1e-6 {
            return full;
        }
        let (u, v) = (intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy);
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let clamp = |x: f64, hi: u32| x.clamp(0.0, hi as f64) as u32;
    (
        clamp(u0.floor() - 1.0, intr.width),
        clamp(u1.ceil() + 1.0, intr.width),
        clamp(v0.floor() - 1.0, intr.height),
        clamp(v1.ceil() + 1.0, intr.height),
    )
}

fn intersect(a: Span, b: Span) -> Span {
    let c0 = a.0.max(b.0);
    let r0 = a.2.max(b.2);
    (c0, a.1.min(b.1).max(c0), r0, a.3.min(b.3).max(r0))
}

/// Renders `boxes` (None = not present) seen from `pose` over `span`
/// (the full image when `None`).
pub fn render(boxes: &[Option<Box3D>], pose: &Pose, intr: &CameraIntrinsics, span: Option<Span>) -> Render {
    let span = span.unwrap_or((0, intr.width, 0, intr.height));
    let (c0, c1, r0, r1) = span;
    let w = (c1 - c0) as usize;
    let n = w * (r1 - r0) as usize;
    let rays = Rays::new(pose, intr);
    let mut depth = vec![0f32; n];
    let mut zbuf = vec![f64::INFINITY; n];
    let mut codes = vec![CODE_NONE; n];
    let eye = rays.origin;
    if eye.z() > 0.0 {
        for r in r0..r1 {
            for c in c0..c1 {
                let d = rays.dir(c, r);
                if d.z() < -1e-12 {
                    let i = (r - r0) as usize * w + (c - c0) as usize;
                    zbuf[i] = -eye.z() / d.z();
                    codes[i] = CODE_FLOOR;
                }
            }
        }
    }
    let mut self_hits = vec![0u32; boxes.len()];
    for (k, b) in boxes.iter().enumerate() {
        let Some(b) = b else { continue };
        let (bc0, bc1, br0, br1) = intersect(box_span(b, pose, intr), span);
        for r in br0..br1 {
            for c in bc0..bc1 {
                let Some(t) = b.ray_entry(eye, rays.dir(c, r)) else { continue };
                if t <= 0.0 {
                    continue;
                }
                self_hits[k] += 1;
                let i = (r - r0) as usize * w + (c - c0) as usize;
                if t < zbuf[i] {
                    zbuf[i] = t;
                    codes[i] = object_code(k);
                }
            }
        }
    }
    for (d, z) in depth.iter_mut().zip(&zbuf) {
        if z.is_finite() {
            *d = *z as f32;
        }
    }
    Render { span, depth, codes, self_hits }
}

/// Pixels whose centers lie in `region`, clipped to the image.
pub fn region_span(region: &PixelRect, intr: &CameraIntrinsics) -> Span {
    region.pixel_centers_span(intr.width, intr.height)
}

/// True when all eight corners are in front of the camera and project inside the image.
pub fn fully_in_view(b: &Box3D, pose: &Pose, intr: &CameraIntrinsics) -> bool {
    b.corners().iter().all(|c| {
        let p = pose.world_to_camera(*c);
        p.z() > 1e-6 && intr.project(p).is_some_and(|(u, v)| intr.contains(u, v))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_matches_analytic_plane() {
        let intr = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
        // camera at height 2 looking straight down
        let pose = Pose::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0));
        let b = Box3D::new(Vec3::new(-0.2, -0.2, 0.0), Vec3::new(0.2, 0.2, 0.5)).unwrap();
        let out = render(&[Some(b)], &pose, &intr, None);
        assert_eq!(out.code_at(32, 24), object_code(0));
        let i = 24 * 64 + 32;
        assert!((out.depth[i] as f64 - 1.5).abs() < 1e-5);
        assert_eq!(out.code_at(0, 0), CODE_FLOOR);
        assert!((out.depth[0] as f64 - 2.0).abs() < 1e-5);
        let sub = render(&[Some(b)], &pose, &intr, Some((30, 34, 20, 28)));
        assert_eq!(sub.dominant(), object_code(0));
    }
}
