//! Background/texture configuration matrix, compositing, and labeled
//! dataset generation.

mod manifest;
pub mod pools;

pub use manifest::{read_manifest, write_manifest, ManifestBox, ManifestRecord};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::imaging::{luminance, RgbImage, RgbaImage};
use crate::patches::{BBox, ImageBounds};
use crate::render::{rasterize, sample_pose, Camera, Material, PoseSpec, TextureMapping, TextureMode};
use crate::rng::{derive_seed, item_stream, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    RealRgb,
    RealGray,
    White,
}

/// A cell of the background x texture configuration matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "RR-RR")]
    RrRr,
    #[serde(rename = "W-RR")]
    WRr,
    #[serde(rename = "W-UG")]
    WUg,
    #[serde(rename = "RR-UG")]
    RrUg,
    #[serde(rename = "RG-UG")]
    RgUg,
    #[serde(rename = "RG-RR")]
    RgRr,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::RrRr,
        Preset::WRr,
        Preset::WUg,
        Preset::RrUg,
        Preset::RgUg,
        Preset::RgRr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::RrRr => "RR-RR",
            Preset::WRr => "W-RR",
            Preset::WUg => "W-UG",
            Preset::RrUg => "RR-UG",
            Preset::RgUg => "RG-UG",
            Preset::RgRr => "RG-RR",
        }
    }

    pub fn modes(&self) -> (BackgroundMode, TextureMode) {
        use BackgroundMode as B;
        use TextureMode as T;
        match self {
            Preset::RrRr => (B::RealRgb, T::RealRgb),
            Preset::WRr => (B::White, T::RealRgb),
            Preset::WUg => (B::White, T::UniformGray),
            Preset::RrUg => (B::RealRgb, T::UniformGray),
            Preset::RgUg => (B::RealGray, T::UniformGray),
            Preset::RgRr => (B::RealGray, T::RealRgb),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset {
                name: s.to_string(),
                valid: Preset::ALL.map(|p| p.name()).join(", "),
            })
    }
}

/// Background and texture modes of a named preset.
pub fn preset(name: &str) -> Result<(BackgroundMode, TextureMode)> {
    Ok(name.parse::<Preset>()?.modes())
}

/// Shading parameters shared by every render of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lighting {
    pub ambient: f64,
    pub light_direction: [f64; 3],
    pub albedo_gray: f32,
}

impl Default for Lighting {
    fn default() -> Self {
        let m = Material::default();
        Self {
            ambient: m.ambient,
            light_direction: m.light_direction,
            albedo_gray: m.albedo_gray,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub background_mode: BackgroundMode,
    pub texture_mode: TextureMode,
    pub pose_spec: PoseSpec,
    pub camera: Camera,
    pub lighting: Lighting,
    pub background_pool: Vec<Arc<RgbImage>>,
    pub texture_pool: Vec<Arc<RgbImage>>,
    /// Keep the rendered foreground layer on every generated item.
    pub keep_foreground: bool,
}

impl SceneConfig {
    pub fn from_preset(
        preset: Preset,
        pose_spec: PoseSpec,
        camera: Camera,
        background_pool: Vec<Arc<RgbImage>>,
        texture_pool: Vec<Arc<RgbImage>>,
    ) -> Self {
        let (background_mode, texture_mode) = preset.modes();
        Self {
            background_mode,
            texture_mode,
            pose_spec,
            camera,
            lighting: Lighting::default(),
            background_pool,
            texture_pool,
            keep_foreground: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.background_mode != BackgroundMode::White && self.background_pool.is_empty() {
            return Err(Error::invalid(
                "scene",
                "real backgrounds need a non-empty background pool",
            ));
        }
        if self.texture_mode == TextureMode::RealRgb && self.texture_pool.is_empty() {
            return Err(Error::invalid("scene", "real textures need a non-empty texture pool"));
        }
        self.pose_spec.validate()?;
        self.camera.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewTag {
    Front,
    Side,
    None,
}

impl ViewTag {
    /// Front within 45 degrees of azimuth 0, side within 45 degrees of 90 or
    /// 270, otherwise none (rear views).
    pub fn from_azimuth(azimuth: f64) -> Self {
        let a = azimuth.rem_euclid(360.0);
        let dist = |target: f64| {
            let d = (a - target).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        if dist(0.0) < 45.0 {
            ViewTag::Front
        } else if dist(90.0) <= 45.0 || dist(270.0) <= 45.0 {
            ViewTag::Side
        } else {
            ViewTag::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Virtual,
    Real,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledBox {
    pub category: String,
    pub bbox: BBox,
    pub view: ViewTag,
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub id: String,
    pub image: Arc<RgbImage>,
    pub boxes: Vec<LabeledBox>,
    pub provenance: Provenance,
    /// Rendered foreground layer, kept only when requested.
    pub foreground: Option<Arc<RgbaImage>>,
}

impl LabeledImage {
    pub fn bounds(&self) -> ImageBounds {
        ImageBounds::of(&self.image)
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = self.bounds();
        for b in &self.boxes {
            if !b.bbox.within(bounds) {
                return Err(Error::Record {
                    id: self.id.clone(),
                    msg: format!("box {:?} outside {}x{} image", b.bbox, bounds.width, bounds.height),
                });
            }
        }
        Ok(())
    }

    pub fn has_category(&self, category: &str) -> bool {
        self.boxes.iter().any(|b| b.category == category)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<LabeledImage>,
    pub manifest_path: Option<PathBuf>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(items: Vec<LabeledImage>, seed: u64) -> Result<Self> {
        let ds = Self {
            items,
            manifest_path: None,
            seed,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for item in &self.items {
            if !ids.insert(item.id.as_str()) {
                return Err(Error::Record {
                    id: item.id.clone(),
                    msg: "duplicate id".into(),
                });
            }
            item.validate()?;
        }
        Ok(())
    }

    /// Sorted set of categories appearing in any box.
    pub fn categories(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .items
            .iter()
            .flat_map(|i| i.boxes.iter().map(|b| b.category.as_str()))
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Number of images containing each category.
    pub fn images_per_category(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for item in &self.items {
            let cats: BTreeSet<&str> = item.boxes.iter().map(|b| b.category.as_str()).collect();
            for c in cats {
                *counts.entry(c.to_string()).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Relabel every item as real, prefixing ids with `prefix`.
    pub fn into_real(mut self, prefix: &str) -> Self {
        for item in &mut self.items {
            item.provenance = Provenance::Real;
            item.id = format!("{prefix}{}", item.id);
        }
        self
    }

    /// Concatenate two datasets; ids must stay unique.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let mut items = self.items.clone();
        items.extend(other.items.iter().cloned());
        Dataset::new(items, self.seed)
    }
}

/// Rec.601 luma replicated on all three channels.
pub fn to_grayscale(image: &RgbImage) -> RgbImage {
    image.map(|p| {
        let y = luminance(p);
        [y, y, y]
    })
}

/// Center-crop `source` to the canvas aspect ratio and resize it bilinearly.
pub fn fit_background(source: &RgbImage, width: usize, height: usize) -> RgbImage {
    let (sw, sh) = (source.width() as f64, source.height() as f64);
    let target = width as f64 / height as f64;
    let (cw, ch) = if sw / sh > target {
        ((sh * target).round().max(1.0), sh)
    } else {
        (sw, (sw / target).round().max(1.0))
    };
    let x0 = ((sw - cw) / 2.0).floor() as usize;
    let y0 = ((sh - ch) / 2.0).floor() as usize;
    source.resample_region(
        (x0, y0, x0 + cw as usize, y0 + ch as usize),
        width,
        height,
    )
}

/// Category and view of the object in a foreground layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectLabel {
    pub category: String,
    pub view: ViewTag,
}

/// Blend a rendered foreground over a background chosen by the scene's
/// background mode. The label box is the tight bounds of the alpha mask.
/// The result is quantized to 8-bit levels so it survives a lossless save.
pub fn composite(
    fg: &RgbaImage,
    config: &SceneConfig,
    label: &ObjectLabel,
    id: &str,
    rng: &mut impl Rng,
) -> Result<LabeledImage> {
    let (x0, y0, x1, y1) = fg.alpha_bounds().ok_or(Error::NoObject)?;
    let (w, h) = (fg.width(), fg.height());
    let background = match config.background_mode {
        BackgroundMode::White => RgbImage::new(w, h, [1.0; 3]),
        BackgroundMode::RealRgb | BackgroundMode::RealGray => {
            let source = config
                .background_pool
                .choose(rng)
                .ok_or_else(|| Error::invalid("scene", "empty background pool"))?;
            let fitted = fit_background(source, w, h);
            if config.background_mode == BackgroundMode::RealGray {
                to_grayscale(&fitted)
            } else {
                fitted
            }
        }
    };
    let image = RgbImage::from_fn(w, h, |x, y| {
        let [r, g, b, a] = fg.get(x, y);
        let bg = background.get(x, y);
        [
            a * r + (1.0 - a) * bg[0],
            a * g + (1.0 - a) * bg[1],
            a * b + (1.0 - a) * bg[2],
        ]
    })
    .quantize();
    let bbox = BBox::new(x0 as i32, y0 as i32, x1 as i32, y1 as i32)?;
    Ok(LabeledImage {
        id: id.to_string(),
        image: Arc::new(image),
        boxes: vec![LabeledBox {
            category: label.category.clone(),
            bbox,
            view: label.view,
        }],
        provenance: Provenance::Virtual,
        foreground: config.keep_foreground.then(|| Arc::new(fg.clone())),
    })
}

fn material_for(config: &SceneConfig, rng: &mut impl Rng) -> Result<Material> {
    let lighting = &config.lighting;
    let texture_image = match config.texture_mode {
        TextureMode::UniformGray => None,
        TextureMode::RealRgb => Some(
            config
                .texture_pool
                .choose(rng)
                .ok_or_else(|| Error::invalid("scene", "empty texture pool"))?
                .clone(),
        ),
    };
    Ok(Material {
        texture_mode: config.texture_mode,
        albedo_gray: lighting.albedo_gray,
        texture_image,
        mapping: TextureMapping::ScreenSpace,
        ambient: lighting.ambient,
        light_direction: lighting.light_direction,
    })
}

/// Render one item: mesh, pose, texture, and background all come from the
/// item's own stream, so the result depends only on `(seed, index)`.
fn generate_item(
    by_category: &[(String, Vec<&Mesh>)],
    config: &SceneConfig,
    seed: u64,
    index: usize,
) -> Result<LabeledImage> {
    let mut rng = item_stream(seed, index as u64);
    let (category, meshes) = &by_category[index % by_category.len()];
    let mesh = meshes.choose(&mut rng).expect("categories are non-empty");
    let pose = sample_pose(&config.pose_spec, &mut rng)?;
    let material = material_for(config, &mut rng)?;
    let fg = rasterize(mesh, &pose, &config.camera, &material)?;
    let label = ObjectLabel {
        category: category.clone(),
        view: ViewTag::from_azimuth(pose.azimuth),
    };
    let id = format!("{seed:016x}-{index:05}");
    composite(&fg, config, &label, &id, &mut rng)
}

/// Render `n` labeled images, cycling through categories (sorted by name) so
/// per-category counts differ by at most one.
pub fn generate_batch(meshes: &[Mesh], config: &SceneConfig, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("batch", "n must be at least 1"));
    }
    if meshes.is_empty() {
        return Err(Error::invalid("batch", "no meshes"));
    }
    config.validate()?;
    let mut grouped: BTreeMap<&str, Vec<&Mesh>> = BTreeMap::new();
    for m in meshes {
        grouped.entry(m.category.as_str()).or_default().push(m);
    }
    let by_category: Vec<(String, Vec<&Mesh>)> = grouped
        .into_iter()
        .map(|(c, ms)| (c.to_string(), ms))
        .collect();

    let items = (0..n)
        .into_par_iter()
        .map(|i| {
            generate_item(&by_category, config, seed, i).map_err(|e| Error::Item {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ds = Dataset::new(items, seed)?;
    debug_assert_eq!(ds.len(), n);
    Ok(ds)
}

/// Pick `k` images per category uniformly without replacement. Images
/// holding several boxes keep all of them. For a fixed seed the selection
/// for a smaller `k` is a prefix of the selection for a larger one.
pub fn subsample_real(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    let mut chosen = BTreeSet::new();
    for category in ds.categories() {
        let mut candidates: Vec<usize> = ds
            .items
            .iter()
            .enumerate()
            .filter(|(_, item)| item.has_category(&category))
            .map(|(i, _)| i)
            .collect();
        if candidates.len() < k {
            return Err(Error::Insufficient {
                category,
                needed: k,
                available: candidates.len(),
            });
        }
        let mut rng = stream(derive_seed(seed, &category));
        candidates.shuffle(&mut rng);
        chosen.extend(candidates.into_iter().take(k));
    }
    Ok(Dataset {
        items: chosen.into_iter().map(|i| ds.items[i].clone()).collect(),
        manifest_path: None,
        seed,
    })
}
