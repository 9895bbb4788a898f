//! The toy world: procedural shape families standing in for CAD models, and
//! "real" images rendered under the RR-RR configuration from held-out
//! meshes and held-out background/texture pools.

use std::sync::Arc;

use nalgebra::Rotation3;
use rand::Rng;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::{make_fixture, normalize_mesh, FixtureSpec, Mesh};
use crate::imaging::RgbImage;
use crate::rng::{derive_seed, stream};
use crate::scene::pools::{background_pool, texture_pool};
use crate::scene::{generate_batch, Dataset, Preset, SceneConfig};

pub const CATEGORY_NAMES: [&str; 4] = ["box", "ellipsoid", "prism", "ring"];

/// Linear blend between a narrow and a wide parameter range.
fn blend(narrow: (f64, f64), wide: (f64, f64), spread: f64) -> std::ops::Range<f64> {
    let lerp = |a: f64, b: f64| a + (b - a) * spread;
    lerp(narrow.0, wide.0)..lerp(narrow.1, wide.1)
}

/// Random member of a shape family. `spread` in `[0, 1]` widens the
/// family's continuous parameter ranges from near-identical members to
/// strongly varied ones.
pub fn family_member(category: &str, spread: f64, rng: &mut impl Rng) -> Result<FixtureSpec> {
    if !(0.0..=1.0).contains(&spread) {
        return Err(Error::invalid("toy world", format!("shape spread must be in [0, 1], got {spread}")));
    }
    let mut draw = |narrow, wide| rng.gen_range(blend(narrow, wide, spread));
    Ok(match category {
        "box" => FixtureSpec::Cube {
            size: [
                draw((0.7, 1.0), (0.25, 1.0)),
                draw((0.7, 1.0), (0.25, 1.0)),
                draw((0.7, 1.0), (0.25, 1.0)),
            ],
        },
        "ellipsoid" => FixtureSpec::UvSphere {
            radii: [
                draw((0.7, 1.0), (0.3, 1.0)),
                draw((0.7, 1.0), (0.3, 1.0)),
                draw((0.7, 1.0), (0.3, 1.0)),
            ],
            stacks: rng.gen_range(8..=12),
            slices: rng.gen_range(12..=18),
        },
        "prism" => FixtureSpec::ExtrudedPolygon {
            inner_ratio: draw((0.45, 0.55), (0.3, 0.75)),
            depth: draw((0.3, 0.4), (0.15, 0.8)),
            sides: 2 * rng.gen_range(4..=6),
            radius: 1.0,
        },
        "ring" => {
            let major = draw((0.8, 1.0), (0.6, 1.0));
            let minor = major * draw((0.25, 0.3), (0.15, 0.45));
            FixtureSpec::Torus {
                major_segments: rng.gen_range(16..=24),
                minor_segments: rng.gen_range(8..=12),
                major_radius: major,
                minor_radius: minor,
            }
        }
        other => return Err(Error::invalid("toy world", format!("unknown category `{other}`"))),
    })
}

/// Largest baked-in tilt, in degrees, at full spread.
const MAX_TILT_DEGREES: f64 = 75.0;

/// Rotate `mesh` about the x and z axes; the vertical axis is left to the
/// camera azimuth.
fn tilt(mesh: &Mesh, about_x: f64, about_z: f64) -> Mesh {
    let r = Rotation3::from_euler_angles(about_x.to_radians(), 0.0, about_z.to_radians());
    Mesh {
        positions: mesh.positions.iter().map(|p| r * p).collect(),
        normals: mesh.normals.iter().map(|n| r * n).collect(),
        ..mesh.clone()
    }
}

/// `count` normalized meshes of one family; member `i` depends only on
/// `(seed, category, spread, i)`. Each member also carries its own resting
/// tilt, up to `spread * 75` degrees about each horizontal axis.
pub fn family_meshes(category: &str, count: usize, spread: f64, seed: u64) -> Result<Vec<Mesh>> {
    (0..count)
        .map(|i| {
            let mut rng = stream(derive_seed(seed, &format!("{category}/{i}")));
            let shape = make_fixture(&family_member(category, spread, &mut rng)?)?;
            let max = spread * MAX_TILT_DEGREES;
            let (ax, az) = if max > 0.0 {
                (rng.gen_range(-max..=max), rng.gen_range(-max..=max))
            } else {
                (0.0, 0.0)
            };
            let mut mesh = normalize_mesh(&tilt(&shape, ax, az))?;
            mesh.category = category.to_string();
            Ok(mesh)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub categories: Vec<String>,
    /// Training meshes, grouped by category in `categories` order.
    pub train_meshes: Vec<Mesh>,
    pub heldout_meshes: Vec<Mesh>,
    pub backgrounds: Vec<Arc<RgbImage>>,
    pub textures: Vec<Arc<RgbImage>>,
    pub real_backgrounds: Vec<Arc<RgbImage>>,
    pub real_textures: Vec<Arc<RgbImage>>,
}

impl ToyWorld {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let e = &cfg.experiment;
        let s = &cfg.scene;
        let seed = derive_seed(e.seed, "world");
        let categories: Vec<String> = CATEGORY_NAMES[..e.categories].iter().map(|c| c.to_string()).collect();
        let mut train_meshes = Vec::new();
        let mut heldout_meshes = Vec::new();
        for c in &categories {
            let all = family_meshes(
                c,
                e.train_meshes_per_category + e.heldout_meshes_per_category,
                e.shape_spread,
                seed,
            )?;
            let (train, held) = all.split_at(e.train_meshes_per_category);
            train_meshes.extend_from_slice(train);
            heldout_meshes.extend_from_slice(held);
        }
        let size = s.pool_image_size;
        Ok(Self {
            categories,
            train_meshes,
            heldout_meshes,
            backgrounds: background_pool(s.background_pool, size, derive_seed(seed, "virtual")),
            textures: texture_pool(s.texture_pool, size, derive_seed(seed, "virtual")),
            real_backgrounds: background_pool(s.background_pool, size, derive_seed(seed, "real")),
            real_textures: texture_pool(s.texture_pool, size, derive_seed(seed, "real")),
        })
    }

    /// Scene for virtual training data under `preset`.
    pub fn virtual_scene(&self, cfg: &ExperimentConfig, preset: Preset) -> SceneConfig {
        let mut scene = SceneConfig::from_preset(
            preset,
            cfg.scene.pose,
            cfg.scene.camera(),
            self.backgrounds.clone(),
            self.textures.clone(),
        );
        scene.lighting = cfg.scene.lighting;
        scene
    }

    /// Scene for "real" images: RR-RR with the held-out pools and the real
/// lighting.
    pub fn real_scene(&self, cfg: &ExperimentConfig) -> SceneConfig {
        let mut scene = SceneConfig::from_preset(
            Preset::RrRr,
            cfg.scene.pose,
            cfg.scene.camera(),
            self.real_backgrounds.clone(),
            self.real_textures.clone(),
        );
        scene.lighting = cfg.scene.real_lighting;
        scene
    }

    /// `per_category` real-style images per category from the held-out
    /// meshes, ids prefixed with `label`.
    pub fn real_dataset(&self, cfg: &ExperimentConfig, per_category: usize, label: &str) -> Result<Dataset> {
        let n = per_category * self.categories.len();
        let seed = derive_seed(cfg.experiment.seed, &format!("real/{label}"));
        Ok(generate_batch(&self.heldout_meshes, &self.real_scene(cfg), n, seed)?.into_real(&format!("{label}-")))
    }

    /// Training meshes of one category.
    pub fn meshes_of(&self, category: &str) -> Vec<Mesh> {
        self.train_meshes.iter().filter(|m| m.category == category).cloned().collect()
    }
}
