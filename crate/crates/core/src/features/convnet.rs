//! Forward-only convolutional network loaded from a JSON header plus a raw
//! little-endian f32 weight blob.
//!
//! File layout: one line of JSON describing the layers, a `\n`, then every
//! layer's weights followed by its biases, in layer order, row-major.
//! Convolution weights are indexed `[out][in][ky][kx]`, fully-connected
//! weights `[out][in]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::imaging::{luminance, RgbImage};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        weights: Vec<f32>,
        biases: Vec<f32>,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Fc {
        inputs: usize,
        outputs: usize,
        weights: Vec<f32>,
        biases: Vec<f32>,
    },
}

impl Layer {
    fn param_count(&self) -> usize {
        match self {
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            Layer::Fc { inputs, outputs, .. } => inputs * outputs + outputs,
            Layer::Relu | Layer::MaxPool { .. } => 0,
        }
    }

    /// Output `(channels, height, width)` for the given input shape.
    fn output_shape(&self, index: usize, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let mismatch = |msg: String| Error::ShapeMismatch { layer: index, msg };
        match *self {
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                if in_channels != c {
                    return Err(mismatch(format!("expects {in_channels} input channels, got {c}")));
                }
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return Err(mismatch("kernel, stride and channels must be positive".into()));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(mismatch(format!("kernel {kernel} larger than padded {h}x{w} input")));
                }
                Ok((
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ))
            }
            Layer::Relu => Ok((c, h, w)),
            Layer::MaxPool { window, stride } => {
                if window == 0 || stride == 0 {
                    return Err(mismatch("pool window and stride must be positive".into()));
                }
                if h < window || w < window {
                    return Err(mismatch(format!("pool window {window} larger than {h}x{w} input")));
                }
                Ok((c, (h - window) / stride + 1, (w - window) / stride + 1))
            }
            Layer::Fc { inputs, outputs, .. } => {
                if inputs != c * h * w {
                    return Err(mismatch(format!("expects {inputs} inputs, got {}", c * h * w)));
                }
                if outputs == 0 {
                    return Err(mismatch("fc needs at least one output".into()));
                }
                Ok((outputs, 1, 1))
            }
        }
    }

    fn header(&self) -> LayerHeader {
        match *self {
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => LayerHeader::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            },
            Layer::Relu => LayerHeader::Relu,
            Layer::MaxPool { window, stride } => LayerHeader::Maxpool { window, stride },
            Layer::Fc { inputs, outputs, .. } => LayerHeader::Fc { inputs, outputs },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerHeader {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    Maxpool {
        window: usize,
        stride: usize,
    },
    Fc {
        inputs: usize,
        outputs: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct FileHeader {
    input_size: usize,
    input_channels: usize,
    last_hidden: usize,
    param_count: usize,
    layers: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetSpec {
    /// Square input side in pixels.
    pub input_size: usize,
    /// 3 for RGB input, 1 for luma.
    pub input_channels: usize,
    pub layers: Vec<Layer>,
    /// Index of the layer whose output is the feature vector.
    pub last_hidden: usize,
}

impl ConvNetSpec {
    /// Check layer chaining and blob lengths; returns the shape after every
    /// layer.
    pub fn validate(&self) -> Result<Vec<(usize, usize, usize)>> {
        if self.input_channels != 1 && self.input_channels != 3 {
            return Err(Error::WeightFile("input_channels must be 1 or 3".into()));
        }
        if self.input_size == 0 {
            return Err(Error::WeightFile("input_size must be positive".into()));
        }
        if self.last_hidden >= self.layers.len() {
            return Err(Error::WeightFile(format!(
                "last_hidden {} but only {} layers",
                self.last_hidden,
                self.layers.len()
            )));
        }
        let mut shape = (self.input_channels, self.input_size, self.input_size);
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(i, shape)?;
            let lens = match layer {
                Layer::Conv { weights, biases, .. } | Layer::Fc { weights, biases, .. } => {
                    Some((weights.len() + biases.len(), biases.len()))
                }
                _ => None,
            };
            if let Some((total, nb)) = lens {
                if total != layer.param_count() || nb != shape.0 {
                    return Err(Error::ShapeMismatch {
                        layer: i,
                        msg: format!("parameter blob of {total} values, expected {}", layer.param_count()),
                    });
                }
            }
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn output_dim(&self) -> usize {
        let mut shape = (self.input_channels, self.input_size, self.input_size);
        for (i, layer) in self.layers.iter().enumerate().take(self.last_hidden + 1) {
            shape = layer.output_shape(i, shape).expect("validated at load");
        }
        shape.0 * shape.1 * shape.2
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = FileHeader {
            input_size: self.input_size,
            input_channels: self.input_channels,
            last_hidden: self.last_hidden,
            param_count: self.param_count(),
            layers: self
                .layers
                .iter()
                .map(|l| serde_json::to_value(l.header()).expect("header serializes"))
                .collect(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for layer in &self.layers {
            if let Layer::Conv { weights, biases, .. } | Layer::Fc { weights, biases, .. } = layer {
                for v in weights.iter().chain(biases) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }
}

pub fn save_convnet(net: &ConvNetSpec, path: &Path) -> Result<()> {
    fs::write(path, net.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_convnet(path: &Path) -> Result<ConvNetSpec> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_convnet(&bytes)
}

/// Parse the weight file format from memory.
pub fn parse_convnet(bytes: &[u8]) -> Result<ConvNetSpec> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::WeightFile("missing header line".into()))?;
    let header: FileHeader = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::WeightFile(format!("bad header: {e}")))?;
    let mut blob = &bytes[split + 1..];

    let mut headers = Vec::with_capacity(header.layers.len());
    for (i, value) in header.layers.iter().enumerate() {
        let kind = value.get("kind").and_then(Value::as_str).unwrap_or("");
        if !matches!(kind, "conv" | "relu" | "maxpool" | "fc") {
            return Err(Error::UnknownLayer {
                layer: i,
                kind: kind.to_string(),
            });
        }
        let h: LayerHeader = serde_json::from_value(value.clone()).map_err(|e| Error::ShapeMismatch {
            layer: i,
            msg: e.to_string(),
        })?;
        headers.push(h);
    }

    // Shapes first, with empty blobs standing in for parameters.
    let mut layers: Vec<Layer> = headers
        .iter()
        .map(|h| match *h {
            LayerHeader::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weights: Vec::new(),
                biases: Vec::new(),
            },
            LayerHeader::Relu => Layer::Relu,
            LayerHeader::Maxpool { window, stride } => Layer::MaxPool { window, stride },
            LayerHeader::Fc { inputs, outputs } => Layer::Fc {
                inputs,
                outputs,
                weights: Vec::new(),
                biases: Vec::new(),
            },
        })
        .collect();
    let mut shape = (header.input_channels, header.input_size, header.input_size);
    for (i, layer) in layers.iter().enumerate() {
        shape = layer.output_shape(i, shape)?;
    }
    let needed: usize = layers.iter().map(Layer::param_count).sum();
    if needed != header.param_count {
        return Err(Error::WeightFile(format!(
            "header declares {} parameters but the layers need {needed}",
            header.param_count
        )));
    }

    let mut take = |n: usize, layer: usize| -> Result<Vec<f32>> {
        if blob.len() < 4 * n {
            return Err(Error::TruncatedBlob { layer });
        }
        let (head, rest) = blob.split_at(4 * n);
        blob = rest;
        Ok(head
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    for (i, layer) in layers.iter_mut().enumerate() {
        match layer {
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                weights,
                biases,
                ..
            } => {
                *weights = take(*out_channels * *in_channels * *kernel * *kernel, i)?;
                *biases = take(*out_channels, i)?;
            }
            Layer::Fc {
                inputs,
                outputs,
                weights,
                biases,
            } => {
                *weights = take(*inputs * *outputs, i)?;
                *biases = take(*outputs, i)?;
            }
            _ => {}
        }
    }
    if !blob.is_empty() {
        return Err(Error::WeightFile(format!("{} trailing bytes after the last layer", blob.len())));
    }
    let net = ConvNetSpec {
        input_size: header.input_size,
        input_channels: header.input_channels,
        layers,
        last_hidden: header.last_hidden,
    };
    net.validate()?;
    Ok(net)
}

/// Activations in channel-major (CHW) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_image(image: &RgbImage, channels: usize) -> Self {
        let (w, h) = (image.width(), image.height());
        let mut data = vec![0.0; channels * w * h];
        for (i, p) in image.pixels().iter().enumerate() {
            if channels == 1 {
                data[i] = luminance(*p);
            } else {
                for c in 0..3 {
                    data[c * w * h + i] = p[c];
                }
            }
        }
        Self {
            channels,
            height: h,
            width: w,
            data,
        }
    }

    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Convolution strategy. Both accumulate in the same order and agree bit
/// for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvAlgo {
    #[default]
    Direct,
    Im2col,
}

#[allow(clippy::too_many_arguments)]
fn conv_direct(
    input: &Tensor,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    weights: &[f32],
    biases: &[f32],
    (oh, ow): (usize, usize),
) -> Tensor {
    let ic_n = input.channels;
    let mut data = vec![0.0f32; out_channels * oh * ow];
    for oc in 0..out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = biases[oc];
                for ic in 0..ic_n {
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            let v = if iy >= 0 && ix >= 0 && (iy as usize) < input.height && (ix as usize) < input.width {
                                input.at(ic, iy as usize, ix as usize)
                            } else {
                                0.0
                            };
                            acc += weights[((oc * ic_n + ic) * kernel + ky) * kernel + kx] * v;
                        }
                    }
                }
                data[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Tensor {
        channels: out_channels,
        height: oh,
        width: ow,
        data,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_im2col(
    input: &Tensor,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    weights: &[f32],
    biases: &[f32],
    (oh, ow): (usize, usize),
) -> Tensor {
    let ic_n = input.channels;
    let patch_len = ic_n * kernel * kernel;
    // One column of `patch_len` values per output position.
    let mut cols = vec![0.0f32; oh * ow * patch_len];
    for oy in 0..oh {
        for ox in 0..ow {
            let col = &mut cols[(oy * ow + ox) * patch_len..][..patch_len];
            let mut k = 0;
            for ic in 0..ic_n {
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < input.height && (ix as usize) < input.width {
                            col[k] = input.at(ic, iy as usize, ix as usize);
                        }
                        k += 1;
                    }
                }
            }
        }
    }
    let mut data = vec![0.0f32; out_channels * oh * ow];
    for oc in 0..out_channels {
        let row = &weights[oc * patch_len..][..patch_len];
        for pos in 0..oh * ow {
            let col = &cols[pos * patch_len..][..patch_len];
            let mut acc = biases[oc];
            for (w, v) in row.iter().zip(col) {
                acc += w * v;
            }
            data[oc * oh * ow + pos] = acc;
        }
    }
    Tensor {
        channels: out_channels,
        height: oh,
        width: ow,
        data,
    }
}

fn max_pool(input: &Tensor, window: usize, stride: usize) -> Tensor {
    let oh = (input.height - window) / stride + 1;
    let ow = (input.width - window) / stride + 1;
    let mut data = Vec::with_capacity(input.channels * oh * ow);
    for c in 0..input.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..window {
                    for kx in 0..window {
                        m = m.max(input.at(c, oy * stride + ky, ox * stride + kx));
                    }
                }
                data.push(m);
            }
        }
    }
    Tensor {
        channels: input.channels,
        height: oh,
        width: ow,
        data,
    }
}

fn fully_connected(input: &Tensor, outputs: usize, weights: &[f32], biases: &[f32]) -> Tensor {
    let n = input.data.len();
    let data = (0..outputs)
        .map(|o| {
            let mut acc = biases[o];
            for (w, x) in weights[o * n..][..n].iter().zip(&input.data) {
                acc += w * x;
            }
            acc
        })
        .collect();
    Tensor {
        channels: outputs,
        height: 1,
        width: 1,
        data,
    }
}

/// Run the layers up to and including `last_hidden` on a prepared tensor.
pub fn forward_tensor(net: &ConvNetSpec, input: Tensor, algo: ConvAlgo) -> Tensor {
    let mut x = input;
    for layer in &net.layers[..=net.last_hidden] {
        x = match layer {
            Layer::Conv {
                out_channels,
                kernel,
                stride,
                padding,
                weights,
                biases,
                ..
            } => {
                let oh = (x.height + 2 * padding - kernel) / stride + 1;
                let ow = (x.width + 2 * padding - kernel) / stride + 1;
                let conv = match algo {
                    ConvAlgo::Direct => conv_direct,
                    ConvAlgo::Im2col => conv_im2col,
                };
                conv(&x, *out_channels, *kernel, *stride, *padding, weights, biases, (oh, ow))
            }
            Layer::Relu => {
                for v in &mut x.data {
                    *v = v.max(0.0);
                }
                x
            }
            Layer::MaxPool { window, stride } => max_pool(&x, *window, *stride),
            Layer::Fc {
                outputs,
                weights,
                biases,
                ..
            } => fully_connected(&x, *outputs, weights, biases),
        };
    }
    x
}

/// Last-hidden activations of `net` on `patch`, L2-normalized. The patch is
/// bilinearly resized to the network input size when needed.
pub fn convnet_forward(net: &ConvNetSpec, patch: &RgbImage) -> Result<FeatureVector> {
    convnet_forward_with(net, patch, ConvAlgo::Direct)
}

pub fn convnet_forward_with(net: &ConvNetSpec, patch: &RgbImage, algo: ConvAlgo) -> Result<FeatureVector> {
    let resized = patch.resize(net.input_size, net.input_size);
    let out = forward_tensor(net, Tensor::from_image(&resized, net.input_channels), algo);
    Ok(FeatureVector::new(out.data.iter().map(|&v| v as f64).collect())?.l2_normalized())
}
