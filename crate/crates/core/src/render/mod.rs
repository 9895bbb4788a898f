//! Orbit-camera software rendering of meshes with Lambertian shading.

mod raster;

pub use raster::rasterize;

use std::sync::Arc;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Rgb3, RgbImage};

/// Object viewpoint. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub in_plane_rotation: f64,
}

impl Pose {
    pub fn new(azimuth: f64, elevation: f64, distance: f64, in_plane_rotation: f64) -> Self {
        Self {
            azimuth,
            elevation,
            distance,
            in_plane_rotation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.azimuth, self.elevation, self.in_plane_rotation]
            .iter()
            .all(|a| a.is_finite());
        if !finite {
            return Err(Error::invalid("pose", "angles must be finite"));
        }
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return Err(Error::invalid("pose", "distance must be positive"));
        }
        Ok(())
    }
}

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::invalid(
                "pose spec",
                format!("{name} range [{}, {}] is empty or not finite", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        self.lo + (self.hi - self.lo) * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub azimuth: Interval,
    pub elevation: Interval,
    pub distance: Interval,
    pub in_plane: Interval,
}

impl Default for PoseSpec {
    fn default() -> Self {
        Self {
            azimuth: Interval::new(0.0, 360.0),
            elevation: Interval::new(-10.0, 30.0),
            distance: Interval::new(2.2, 2.8),
            in_plane: Interval::new(-10.0, 10.0),
        }
    }
}

impl PoseSpec {
    pub fn fixed(pose: Pose) -> Self {
        Self {
            azimuth: Interval::point(pose.azimuth),
            elevation: Interval::point(pose.elevation),
            distance: Interval::point(pose.distance),
            in_plane: Interval::point(pose.in_plane_rotation),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.azimuth.validate("azimuth")?;
        self.elevation.validate("elevation")?;
        self.distance.validate("distance")?;
        self.in_plane.validate("in-plane")?;
        if self.distance.lo <= 0.0 {
            return Err(Error::invalid("pose spec", "distance must be positive"));
        }
        Ok(())
    }
}

/// Draw a pose, consuming the stream in the order azimuth, elevation,
/// distance, in-plane rotation. Azimuth is wrapped into `[0, 360)`.
pub fn sample_pose(spec: &PoseSpec, rng: &mut impl Rng) -> Result<Pose> {
    spec.validate()?;
    let azimuth = spec.azimuth.sample(rng).rem_euclid(360.0);
    let elevation = spec.elevation.sample(rng);
    let distance = spec.distance.sample(rng);
    let in_plane_rotation = spec.in_plane.sample(rng);
    Ok(Pose {
        azimuth,
        elevation,
        distance,
        in_plane_rotation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Vertical field of view in degrees.
    pub fov: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fov: 40.0,
            width: 64,
            height: 64,
            near: 0.1,
            far: 100.0,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return Err(Error::invalid("camera", "field of view must be in (0, 180)"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera", "image size must be at least 1x1"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::invalid("camera", "need 0 < near < far"));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        (self.height as f64 / 2.0) / (self.fov.to_radians() / 2.0).tan()
    }
}

/// World-to-camera transform of an orbit camera looking at the origin.
/// Camera coordinates: x right, y up, z along the viewing direction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ViewFrame {
    eye: Vector3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    forward: Vector3<f64>,
    roll_cos: f64,
    roll_sin: f64,
}

impl ViewFrame {
    pub(crate) fn new(pose: &Pose) -> Self {
        let (az, el) = (pose.azimuth.to_radians(), pose.elevation.to_radians());
        let eye = Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * pose.distance;
        let forward = -eye / pose.distance;
        // Analytic right vector stays well defined at the poles.
        let right = Vector3::new(az.cos(), 0.0, -az.sin());
        let up = right.cross(&forward);
        let roll = pose.in_plane_rotation.to_radians();
        Self {
            eye,
            right,
            up,
            forward,
            roll_cos: roll.cos(),
            roll_sin: roll.sin(),
        }
    }

    fn rotate_direction(&self, d: &Vector3<f64>) -> Vector3<f64> {
        let x = self.right.dot(d);
        let y = self.up.dot(d);
        let z = self.forward.dot(d);
        Vector3::new(
            x * self.roll_cos - y * self.roll_sin,
            x * self.roll_sin + y * self.roll_cos,
            z,
        )
    }

    /// Point in camera coordinates (z = depth along the optical axis).
    pub(crate) fn camera_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotate_direction(&(p - self.eye))
    }

    /// Normal in the viewer frame: x right, y up, z toward the viewer.
    pub(crate) fn normal_to_view(&self, n: &Vector3<f64>) -> Vector3<f64> {
        let c = self.rotate_direction(n);
        Vector3::new(c.x, c.y, -c.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Continuous pixel coordinates; pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
    pub pixel: [f64; 2],
    pub depth: f64,
    /// The point lies in front of the near plane and must be clipped.
    pub behind_near: bool,
}

/// Perspective projection of a model-space point.
pub fn project(pose: &Pose, camera: &Camera, p: [f64; 3]) -> Projection {
    let frame = ViewFrame::new(pose);
    let c = frame.camera_point(&Vector3::new(p[0], p[1], p[2]));
    project_camera_point(camera, &c)
}

pub(crate) fn project_camera_point(camera: &Camera, c: &Vector3<f64>) -> Projection {
    let f = camera.focal();
    let (cx, cy) = (camera.width as f64 / 2.0, camera.height as f64 / 2.0);
    Projection {
        pixel: [cx + f * c.x / c.z, cy - f * c.y / c.z],
        depth: c.z,
        behind_near: c.z < camera.near,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureMode {
    UniformGray,
    RealRgb,
}

/// How a `RealRgb` texture is placed on the object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureMapping {
    /// Texture stretched over the screen-space bounding box of the object.
    #[default]
    ScreenSpace,
    /// Texture sampled at the interpolated mesh texcoords.
    Uv,
}

pub const DEFAULT_ALBEDO_GRAY: f32 = 0.5;

#[derive(Debug, Clone)]
pub struct Material {
    pub texture_mode: TextureMode,
    pub albedo_gray: f32,
    pub texture_image: Option<Arc<RgbImage>>,
    pub mapping: TextureMapping,
    pub ambient: f64,
    /// Unit direction toward the light in the viewer frame (x right, y up,
    /// z toward the viewer).
    pub light_direction: [f64; 3],
}

impl Default for Material {
    fn default() -> Self {
        Self {
            texture_mode: TextureMode::UniformGray,
            albedo_gray: DEFAULT_ALBEDO_GRAY,
            texture_image: None,
            mapping: TextureMapping::ScreenSpace,
            ambient: 0.3,
            light_direction: default_light(),
        }
    }
}

pub fn default_light() -> [f64; 3] {
    let l = Vector3::new(0.4, 0.6, 0.7).normalize();
    [l.x, l.y, l.z]
}

impl Material {
    pub fn textured(texture: Arc<RgbImage>) -> Self {
        Self {
            texture_mode: TextureMode::RealRgb,
            texture_image: Some(texture),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.texture_mode == TextureMode::RealRgb && self.texture_image.is_none() {
            return Err(Error::invalid("material", "real_rgb texture mode needs a texture image"));
        }
        if !(0.0..=1.0).contains(&self.albedo_gray) || !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::invalid("material", "albedo and ambient must lie in [0, 1]"));
        }
        let l = Vector3::from(self.light_direction);
        if (l.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("material", "light direction must be unit length"));
        }
        Ok(())
    }

    /// Lambert term with ambient floor for a viewer-frame normal.
    pub fn shading_factor(&self, normal: &Vector3<f64>) -> f64 {
        let l = Vector3::from(self.light_direction);
        self.ambient + (1.0 - self.ambient) * normal.dot(&l).max(0.0)
    }
}

/// `albedo * (ambient + (1 - ambient) * max(0, n . l))`, clamped per channel.
pub fn shade(albedo: Rgb3, normal: [f64; 3], material: &Material) -> Rgb3 {
    let s = material.shading_factor(&Vector3::from(normal)) as f32;
    albedo.map(|c| (c * s).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn point_ranges_give_the_point() {
        let spec = PoseSpec::fixed(Pose::new(30.0, 10.0, 2.0, 0.0));
        let pose = sample_pose(&spec, &mut stream(1)).unwrap();
        assert_eq!(pose, Pose::new(30.0, 10.0, 2.0, 0.0));
    }

    #[test]
    fn same_seed_same_pose() {
        let spec = PoseSpec::default();
        let a = sample_pose(&spec, &mut stream(9)).unwrap();
        let b = sample_pose(&spec, &mut stream(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn azimuth_mean_is_centered() {
        let spec = PoseSpec {
            azimuth: Interval::new(0.0, 360.0),
            ..PoseSpec::default()
        };
        let mut rng = stream(2024);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| sample_pose(&spec, &mut rng).unwrap().azimuth)
            .sum::<f64>()
            / n as f64;
        assert!(approx(mean, 180.0, 5.0), "mean {mean}");
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = PoseSpec { distance: Interval::new(3.0, 2.0), ..Default::default() };
        assert!(sample_pose(&spec, &mut stream(0)).is_err());
    }

    #[test]
    fn origin_projects_to_center() {
        let camera = Camera { width: 80, height: 60, ..Camera::default() };
        for pose in [Pose::new(0.0, 0.0, 3.0, 0.0), Pose::new(123.0, -40.0, 7.5, 33.0)] {
            let p = project(&pose, &camera, [0.0, 0.0, 0.0]);
            assert!(approx(p.pixel[0], 40.0, 1e-9) && approx(p.pixel[1], 30.0, 1e-9));
            assert!(approx(p.depth, pose.distance, 1e-12));
            assert!(!p.behind_near);
        }
    }

    #[test]
    fn half_fov_offset_hits_border() {
        let camera = Camera { fov: 50.0, width: 64, height: 64, ..Camera::default() };
        let d = 4.0;
        let x = (25.0f64).to_radians().tan() * d;
        let p = project(&Pose::new(0.0, 0.0, d, 0.0), &camera, [x, 0.0, 0.0]);
        assert!(approx(p.pixel[0], 64.0, 1e-9), "{:?}", p.pixel);
        assert!(approx(p.pixel[1], 32.0, 1e-9));
    }

    #[test]
    fn points_on_a_ray_share_a_pixel() {
        let camera = Camera::default();
        let pose = Pose::new(0.0, 0.0, 5.0, 0.0);
        let near = project(&pose, &camera, [0.2, 0.1, 1.0]);
        let far = project(&pose, &camera, [0.325, 0.1625, -1.5]);
        assert!(approx(near.pixel[0], far.pixel[0], 1e-9));
        assert!(approx(near.pixel[1], far.pixel[1], 1e-9));
        assert!(near.depth < far.depth);
        assert!(project(&pose, &camera, [0.0, 0.0, 4.95]).behind_near);
    }

    #[test]
    fn shade_examples() {
        let light = [0.0, 0.0, 1.0];
        let m = Material { ambient: 0.2, light_direction: light, ..Material::default() };
        let albedo = [0.8, 0.4, 0.2];
        assert_eq!(shade(albedo, [0.0, 0.0, 1.0], &m), albedo);
        let side = shade(albedo, [1.0, 0.0, 0.0], &m);
        for c in 0..3 {
            assert!((side[c] - 0.2 * albedo[c]).abs() < 1e-6);
        }
        let n60 = [(60f64).to_radians().sin(), 0.0, (60f64).to_radians().cos()];
        let s = shade(albedo, n60, &m);
        for c in 0..3 {
            assert!((s[c] - 0.6 * albedo[c]).abs() < 1e-6);
        }
    }
}
