//! Pluggable patch feature extraction and the trainable adaptation layer.

mod adapter;
mod convnet;
mod gradhist;
mod pixels;
mod precomputed;

pub use adapter::{adapt, train_adapter, Adapter, AdapterGradient, AdapterHyper};
pub use convnet::{
    convnet_forward, convnet_forward_with, forward_tensor, load_convnet, parse_convnet, save_convnet, ConvAlgo,
    ConvNetSpec, Layer, Tensor,
};
pub use gradhist::extract_gradhist;
pub use pixels::extract_pixels;
pub use precomputed::{precomputed_store, PrecomputedStore};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::patches::{crop_resize, BBox};

/// Dense feature vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("feature", format!("component {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// Scale to unit L2 norm; the zero vector is returned unchanged.
    pub fn l2_normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.values {
                *v /= n;
            }
        }
        self
    }
}

/// Stable key for the patch `bbox` of image `image_id`, used by the
/// precomputed backend.
pub fn patch_id(image_id: &str, bbox: &BBox) -> String {
    format!("{image_id}:{},{},{},{}", bbox.x0, bbox.y0, bbox.x1, bbox.y1)
}

#[derive(Debug, Clone)]
pub enum Backend {
    /// Raw colors of a `side x side` resize.
    Pixels { side: usize },
    /// Orientation histograms over a `cells x cells` grid of a `side x side`
    /// grayscale patch.
    GradHist { side: usize, cells: usize, bins: usize },
    /// Last hidden activations of a convolutional network.
    ConvNet { net: Arc<ConvNetSpec> },
    /// Vectors looked up by [`patch_id`].
    Precomputed { store: Arc<PrecomputedStore> },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Pixels { .. } => "pixels",
            Backend::GradHist { .. } => "gradhist",
            Backend::ConvNet { .. } => "convnet",
            Backend::Precomputed { .. } => "precomputed",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Backend::Pixels { side } => 3 * side * side,
            Backend::GradHist { cells, bins, .. } => cells * cells * bins,
            Backend::ConvNet { net } => net.output_dim(),
            Backend::Precomputed { store } => store.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Backend::Pixels { side } if *side == 0 => {
                Err(Error::invalid("extractor", "pixels side must be positive"))
            }
            Backend::GradHist { side, cells, bins } if *cells == 0 || *bins == 0 || *side < 2 * cells => {
                Err(Error::invalid(
                    "extractor",
                    format!("gradhist needs cells, bins >= 1 and side >= 2 * cells (side {side}, cells {cells}, bins {bins})"),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Patch side the backend wants its input cropped to.
    pub fn patch_side(&self) -> Option<usize> {
        match self {
            Backend::Pixels { side } | Backend::GradHist { side, .. } => Some(*side),
            Backend::ConvNet { net } => Some(net.input_size),
            Backend::Precomputed { .. } => None,
        }
    }

    /// Features of an already-cropped patch. The precomputed backend has no
    /// image path and errors here; use [`Extractor::extract`].
    pub fn extract_patch(&self, patch: &RgbImage) -> Result<FeatureVector> {
        match self {
            Backend::Pixels { side } => Ok(extract_pixels(patch, *side)),
            Backend::GradHist { cells, bins, .. } => Ok(extract_gradhist(patch, *cells, *bins)),
            Backend::ConvNet { net } => convnet_forward(net, patch),
            Backend::Precomputed { .. } => Err(Error::invalid(
                "extractor",
                "precomputed features are looked up by patch id",
            )),
        }
    }
}

/// A backend plus an optional trained adapter applied on top of it.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub backend: Backend,
    pub adapter: Option<Arc<Adapter>>,
}

impl Extractor {
    pub fn new(backend: Backend) -> Result<Self> {
        backend.validate()?;
        Ok(Self {
            backend,
            adapter: None,
        })
    }

    pub fn with_adapter(&self, adapter: Adapter) -> Result<Self> {
        if adapter.input_dim() != self.backend.dim() {
            return Err(Error::DimMismatch {
                expected: self.backend.dim(),
                got: adapter.input_dim(),
            });
        }
        Ok(Self {
            backend: self.backend.clone(),
            adapter: Some(Arc::new(adapter)),
        })
    }

    pub fn base(&self) -> Self {
        Self {
            backend: self.backend.clone(),
            adapter: None,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.adapter {
            Some(a) => a.hidden_dim(),
            None => self.backend.dim(),
        }
    }

    /// Backend features of `bbox` in `image`, before any adapter.
    pub fn extract_base(&self, image: &RgbImage, image_id: &str, bbox: &BBox) -> Result<FeatureVector> {
        let f = match &self.backend {
            Backend::Precomputed { store } => store.lookup(&patch_id(image_id, bbox))?,
            backend => {
                let side = backend.patch_side().expect("image backends have a patch side");
                backend.extract_patch(&crop_resize(image, bbox, side)?)?
            }
        };
        if f.dim() != self.backend.dim() {
            return Err(Error::DimMismatch {
                expected: self.backend.dim(),
                got: f.dim(),
            });
        }
        Ok(f)
    }

    pub fn apply_adapter(&self, f: FeatureVector) -> Result<FeatureVector> {
        match &self.adapter {
            Some(a) => adapt(a, &f),
            None => Ok(f),
        }
    }

    /// Final features of `bbox` in `image`.
    pub fn extract(&self, image: &RgbImage, image_id: &str, bbox: &BBox) -> Result<FeatureVector> {
        let f = self.extract_base(image, image_id, bbox)?;
        self.apply_adapter(f)
    }
}
