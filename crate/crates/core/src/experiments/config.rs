//! Experiment configuration: JSON with sections `scene`, `sampler`,
//! `extractor`, `classifier` and `experiment`, every field optional.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{DetectSpec, SvmHyper};
use crate::error::{Error, Result};
use crate::eval::ApMethod;
use crate::features::{load_convnet, precomputed_store, AdapterHyper, Backend, Extractor};
use crate::patches::{ProposalSpec, SamplerSpec};
use crate::render::{Camera, PoseSpec};
use crate::scene::{Lighting, Preset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    /// Presets used by `gen` and `matrix`.
    pub presets: Vec<Preset>,
    /// Preset for virtual data in `shapes` and `vcnn`.
    pub virtual_preset: Preset,
    pub image_size: usize,
    pub fov_degrees: f64,
    pub pose: PoseSpec,
    pub lighting: Lighting,
    /// Lighting of the "real" photographs, which differs from the renders.
    pub real_lighting: Lighting,
    pub background_pool: usize,
    pub texture_pool: usize,
    pub pool_image_size: usize,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            presets: Preset::ALL.to_vec(),
            virtual_preset: Preset::RrRr,
            image_size: 64,
            fov_degrees: 40.0,
            pose: PoseSpec::default(),
            lighting: Lighting::default(),
            real_lighting: Lighting {
                ambient: 0.45,
                ..Lighting::default()
            },
            background_pool: 12,
            texture_pool: 12,
            pool_image_size: 64,
        }
    }
}

impl SceneSection {
    pub fn camera(&self) -> Camera {
        Camera {
            fov: self.fov_degrees,
            width: self.image_size,
            height: self.image_size,
            ..Camera::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Pixels,
    #[default]
    Gradhist,
    Convnet,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSection {
    pub backend: BackendKind,
    pub pixels_side: usize,
    pub gradhist_side: usize,
    pub gradhist_cells: usize,
    pub gradhist_bins: usize,
    /// Weight file for the convnet backend.
    pub convnet_weights: Option<PathBuf>,
    /// JSONL store for the precomputed backend.
    pub precomputed: Option<PathBuf>,
    /// Train an adapter layer on virtual features before the SVMs.
    pub adapter: bool,
    pub adapter_hyper: AdapterHyper,
}

impl Default for ExtractorSection {
    fn default() -> Self {
        Self {
            backend: BackendKind::Gradhist,
            pixels_side: 8,
            gradhist_side: 24,
            gradhist_cells: 4,
            gradhist_bins: 9,
            convnet_weights: None,
            precomputed: None,
            adapter: false,
            adapter_hyper: AdapterHyper::default(),
        }
    }
}

impl ExtractorSection {
    /// Build the base extractor, loading any referenced files.
    pub fn build(&self) -> Result<Extractor> {
        let backend = match self.backend {
            BackendKind::Pixels => Backend::Pixels { side: self.pixels_side },
            BackendKind::Gradhist => Backend::GradHist {
                side: self.gradhist_side,
                cells: self.gradhist_cells,
                bins: self.gradhist_bins,
            },
            BackendKind::Convnet => {
                let path = self
                    .convnet_weights
                    .as_ref()
                    .ok_or_else(|| Error::invalid("extractor", "convnet backend needs `convnet_weights`"))?;
                Backend::ConvNet {
                    net: Arc::new(load_convnet(path)?),
                }
            }
            BackendKind::Precomputed => {
                let path = self
                    .precomputed
                    .as_ref()
                    .ok_or_else(|| Error::invalid("extractor", "precomputed backend needs `precomputed`"))?;
                Backend::Precomputed {
                    store: Arc::new(precomputed_store(path)?),
                }
            }
        };
        Extractor::new(backend)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub c: f64,
    pub epochs: usize,
    pub nms_thresh: f64,
    pub score_floor: f64,
    /// Hard negatives mined per category in one extra round; 0 disables.
    pub hard_negatives: usize,
    pub proposals: ProposalSpec,
    pub ap_method: ApMethod,
    pub iou_thresh: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let d = DetectSpec::default();
        let s = SvmHyper::default();
        Self {
            c: s.c,
            epochs: s.epochs,
            nms_thresh: d.nms_thresh,
            score_floor: d.score_floor,
            hard_negatives: 0,
            proposals: ProposalSpec::default(),
            ap_method: ApMethod::Voc11,
            iou_thresh: crate::eval::DEFAULT_IOU,
        }
    }
}

impl ClassifierSection {
    pub fn svm(&self, seed: u64) -> SvmHyper {
        SvmHyper {
            c: self.c,
            epochs: self.epochs,
            seed,
        }
    }

    pub fn detect_spec(&self) -> DetectSpec {
        DetectSpec {
            nms_thresh: self.nms_thresh,
            score_floor: self.score_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Removal {
    None,
    Random,
    Front,
    Side,
}

impl Removal {
    pub fn name(&self) -> &'static str {
        match self {
            Removal::None => "none",
            Removal::Random => "random",
            Removal::Front => "front",
            Removal::Side => "side",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    /// Number of toy categories (at most 4).
    pub categories: usize,
    pub train_meshes_per_category: usize,
    pub heldout_meshes_per_category: usize,
    /// Virtual training images per preset.
    pub virtual_n: usize,
    /// Real-style test images per category.
    pub test_per_category: usize,
    /// Real-style images per category available to `vcnn`.
    pub real_pool_per_category: usize,
    pub real_ks: Vec<usize>,
    pub shape_fraction: f64,
    /// Within-family shape variation, 0 (tight) to 1 (wide).
    pub shape_spread: f64,
    pub removals: Vec<Removal>,
    /// Real-style training images per category for `views`.
    pub view_train_per_category: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 0,
            categories: 4,
            train_meshes_per_category: 8,
            heldout_meshes_per_category: 4,
            virtual_n: 400,
            test_per_category: 50,
            real_pool_per_category: 20,
            real_ks: vec![0, 5, 10, 20],
            shape_fraction: 0.5,
            shape_spread: 0.75,
            removals: vec![Removal::None, Removal::Random, Removal::Front, Removal::Side],
            view_train_per_category: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneSection,
    pub sampler: SamplerSpec,
    pub extractor: ExtractorSection,
    pub classifier: ClassifierSection,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::invalid("config", format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.categories == 0 || e.categories > super::world::CATEGORY_NAMES.len() {
            return Err(Error::invalid(
                "config",
                format!("categories must be in 1..={}", super::world::CATEGORY_NAMES.len()),
            ));
        }
        if e.train_meshes_per_category == 0 || e.heldout_meshes_per_category == 0 {
            return Err(Error::invalid("config", "mesh counts per category must be positive"));
        }
        if e.virtual_n == 0 || e.test_per_category == 0 {
            return Err(Error::invalid("config", "virtual_n and test_per_category must be positive"));
        }
        if !(0.0..=1.0).contains(&e.shape_spread) {
            return Err(Error::invalid("config", "shape_spread must be in [0, 1]"));
        }
        if self.scene.image_size < 16 {
            return Err(Error::invalid("config", "image_size must be at least 16"));
        }
        if !(self.classifier.c > 0.0) || self.classifier.epochs == 0 {
            return Err(Error::invalid("config", "classifier needs c > 0 and epochs >= 1"));
        }
        if !(0.0..1.0).contains(&self.classifier.nms_thresh) {
            return Err(Error::invalid("config", "nms_thresh must be in [0, 1)"));
        }
        self.sampler.validate()?;
        self.scene.pose.validate()?;
        self.scene.camera().validate()?;
        self.extractor.adapter_hyper.validate()
    }

    /// Resolved configuration plus digests of every referenced file, as
    /// written to `fingerprint.json`.
    pub fn fingerprint(&self) -> Result<serde_json::Value> {
        let mut files = serde_json::Map::new();
        for path in [&self.extractor.convnet_weights, &self.extractor.precomputed].into_iter().flatten() {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            files.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)).into());
        }
        Ok(serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": self,
            "files": files,
        }))
    }
}
