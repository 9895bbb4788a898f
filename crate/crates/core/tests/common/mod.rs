//! Independent reference implementations shared by the oracle tests and the
//! acceptance runner. None of these call into the code they check.

#![allow(dead_code)]

pub mod invariants;

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthdet::classify::{train_svm, Detection, SvmHyper};
use synthdet::eval::{ap, pr_curve, ApMethod};
use synthdet::features::{
    convnet_forward, convnet_forward_with, forward_tensor, load_convnet, Adapter, ConvAlgo, ConvNetSpec, FeatureVector,
    Layer, Tensor,
};
use synthdet::imaging::RgbImage;
use synthdet::patches::BBox;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- AP

/// One evaluation case: detections and ground truth for a single category.
#[derive(Debug, Clone)]
pub struct ApCase {
    pub dets: Vec<Detection>,
    pub gt: Vec<(String, BBox)>,
}

fn rand_box(rng: &mut impl Rng) -> BBox {
    let x0 = rng.gen_range(0..20);
    let y0 = rng.gen_range(0..20);
    BBox {
        x0,
        y0,
        x1: x0 + rng.gen_range(4..14),
        y1: y0 + rng.gen_range(4..14),
    }
}

/// Random case with at most `max_dets` detections over up to three images.
/// Scores come from a small set so ties occur; detections are often jittered
/// copies of ground-truth boxes so both hits and misses appear.
pub fn random_ap_case(rng: &mut impl Rng, max_dets: usize) -> ApCase {
    let images = ["a", "b", "c"];
    let gt: Vec<(String, BBox)> = (0..rng.gen_range(0..5))
        .map(|_| (images[rng.gen_range(0..3)].to_string(), rand_box(rng)))
        .collect();
    let dets = (0..rng.gen_range(0..=max_dets))
        .map(|_| {
            let (image_id, bbox) = if !gt.is_empty() && rng.gen_bool(0.6) {
                let (id, b) = &gt[rng.gen_range(0..gt.len())];
                let (dx, dy) = (rng.gen_range(-3..=3), rng.gen_range(-3..=3));
                (id.clone(), b.translate(dx, dy))
            } else {
                (images[rng.gen_range(0..3)].to_string(), rand_box(rng))
            };
            Detection {
                image_id,
                bbox,
                score: rng.gen_range(0..6) as f64 * 0.25 - 0.5,
                category: "x".into(),
            }
        })
        .collect();
    ApCase { dets, gt }
}

/// Area-based overlap test `IoU >= 1/2` in exact integer arithmetic.
fn overlaps_half(a: &BBox, b: &BBox) -> bool {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0) as i64;
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0) as i64;
    let inter = w * h;
    let area = |r: &BBox| (r.x1 - r.x0) as i64 * (r.y1 - r.y0) as i64;
    inter > 0 && 2 * inter >= area(a) + area(b) - inter
}

fn exact_iou(a: &BBox, b: &BBox) -> (i64, i64) {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0) as i64;
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0) as i64;
    let inter = w * h;
    let area = |r: &BBox| (r.x1 - r.x0) as i64 * (r.y1 - r.y0) as i64;
    (inter, area(a) + area(b) - inter)
}

/// True-positive count after each detection in ranked order. Ranking is by
/// descending score with ties broken by (image id, box); each detection
/// takes the best-overlapping unclaimed box of its image (first in sorted
/// order on equal overlap) when that overlap reaches one half.
pub fn brute_force_hits(case: &ApCase) -> Vec<usize> {
    let mut ranked = case.dets.clone();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.image_id.cmp(&b.image_id))
            .then(a.bbox.cmp(&b.bbox))
    });
    let mut gt = case.gt.clone();
    gt.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut claimed = vec![false; gt.len()];
    let mut tp = 0;
    let mut out = Vec::new();
    for d in &ranked {
        let mut best: Option<(usize, (i64, i64))> = None;
        for (j, (id, b)) in gt.iter().enumerate() {
            if claimed[j] || *id != d.image_id {
                continue;
            }
            let o = exact_iou(&d.bbox, b);
            // o > best, compared as fractions.
            if best.is_none_or(|(_, bo)| o.0 * bo.1 > bo.0 * o.1) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            if overlaps_half(&d.bbox, &gt[j].1) {
                claimed[j] = true;
                tp += 1;
            }
        }
        out.push(tp);
    }
    out
}

/// 11-point interpolated AP straight from the definition: for each recall
/// level `r = i / 10`, the best precision at any cutoff reaching recall `r`.
/// Comparisons are done on integer fractions.
pub fn brute_force_voc11(case: &ApCase) -> f64 {
    let hits = brute_force_hits(case);
    let g = case.gt.len();
    if hits.is_empty() || g == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..=10usize {
        // (tp, k) maximizing tp / k over cutoffs with tp / g >= i / 10.
        let mut best: Option<(usize, usize)> = None;
        for (k0, &tp) in hits.iter().enumerate() {
            let k = k0 + 1;
            if 10 * tp < i * g {
                continue;
            }
            if best.is_none_or(|(bt, bk)| tp * bk > bt * k) {
                best = Some((tp, k));
            }
        }
        total += best.map_or(0.0, |(tp, k)| tp as f64 / k as f64);
    }
    total / 11.0
}

/// Checks AP against the brute-force oracle on `cases` random curves of up to
/// ten detections, plus the perfect-ranking and empty cases. Returns a
/// description of the first failure.
pub fn check_ap_oracle(cases: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    for n in 0..cases {
        let case = random_ap_case(&mut r, 10);
        let got = ap(&pr_curve(&case.dets, &case.gt, 0.5), ApMethod::Voc11);
        let want = brute_force_voc11(&case);
        if got != want {
            return Err(format!("case {n}: ap {got} but oracle {want} ({case:?})"));
        }
    }
    let gt: Vec<(String, BBox)> = (0..4)
        .map(|i| (format!("img{i}"), BBox { x0: i, y0: 0, x1: i + 10, y1: 10 }))
        .collect();
    let perfect: Vec<Detection> = gt
        .iter()
        .enumerate()
        .map(|(i, (id, b))| Detection {
            image_id: id.clone(),
            bbox: *b,
            score: 1.0 - i as f64 * 0.1,
            category: "x".into(),
        })
        .collect();
    let p = ap(&pr_curve(&perfect, &gt, 0.5), ApMethod::Voc11);
    if p != 1.0 {
        return Err(format!("perfect ranking gave {p}"));
    }
    let e = ap(&pr_curve(&[], &gt, 0.5), ApMethod::Voc11);
    if e != 0.0 {
        return Err(format!("empty detections gave {e}"));
    }
    Ok(())
}

// ---------------------------------------------------------------- SVM

/// Two positives and two negatives in the plane, linearly separable.
pub fn svm_fixture() -> (Vec<[f64; 2]>, Vec<f64>) {
    (
        vec![[2.0, 1.5], [1.0, 2.5], [-1.5, -1.0], [-0.5, -2.0]],
        vec![1.0, 1.0, -1.0, -1.0],
    )
}

pub fn objective_2d(w: [f64; 2], b: f64, xs: &[[f64; 2]], ys: &[f64], c: f64) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (w[0] * x[0] + w[1] * x[1] + b)).max(0.0))
        .sum();
    0.5 * (w[0] * w[0] + w[1] * w[1]) + c * hinge
}

/// Minimum of the SVM objective over the lattice `{-3, -2.95, ..., 3}^3`.
pub fn grid_oracle(xs: &[[f64; 2]], ys: &[f64], c: f64) -> f64 {
    let steps: Vec<f64> = (-60..=60).map(|i| i as f64 * 0.05).collect();
    let mut best = f64::INFINITY;
    for &w0 in &steps {
        for &w1 in &steps {
            for &b in &steps {
                best = best.min(objective_2d([w0, w1], b, xs, ys, c));
            }
        }
    }
    best
}

/// Trains on the 4-point fixture for each `C` and compares with the grid
/// oracle (2%) and the training labels.
pub fn check_svm_oracle() -> Result<(), String> {
    let (xs, ys) = svm_fixture();
    let feats: Vec<FeatureVector> = xs.iter().map(|x| FeatureVector::new(x.to_vec()).unwrap()).collect();
    // Four samples per epoch, so the fixture schedule uses more epochs than
    // the default.
    for (c, seed) in [0.1, 1.0, 10.0].into_iter().flat_map(|c| (0..5).map(move |s| (c, s))) {
        let hyper = SvmHyper { c, epochs: 200, seed };
        let clf = train_svm(&feats, &ys, "x", &hyper).map_err(|e| e.to_string())?;
        let got = objective_2d([clf.w[0], clf.w[1]], clf.b, &xs, &ys, c);
        let oracle = grid_oracle(&xs, &ys, c);
        // The lattice minimum bounds the true minimum from above, so the
        // solver may undercut it but must not exceed it by more than 2%.
        let rel = (got - oracle) / oracle;
        if rel > 0.02 {
            return Err(format!("C={c} seed {seed}: objective {got} vs grid {oracle} (rel {rel:.4})"));
        }
        for (f, y) in feats.iter().zip(&ys) {
            let s = clf.score(f).map_err(|e| e.to_string())?;
            if s * y <= 0.0 {
                return Err(format!("C={c}: point {:?} misclassified (score {s})", f.values()));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- adapter

pub fn adapter_fixture() -> (Adapter, Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(77);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let labels = vec![0, 2, 1, 2, 0];
    let mut adapter = Adapter::init(6, 4, 3, 11);
    // Non-zero biases so every parameter block gets a gradient.
    adapter.b = vec![0.1, -0.05, 0.2, 0.03];
    adapter.head_b = vec![0.05, -0.1, 0.0];
    (adapter, xs, labels)
}

pub const ADAPTER_DECAY: f64 = 1e-3;

/// Largest relative error between the analytic gradient and central
/// differences with step `eps`.
pub fn adapter_gradient_error(eps: f64) -> f64 {
    let (adapter, xs, labels) = adapter_fixture();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grad) = adapter.loss_and_gradient(&refs, &labels, ADAPTER_DECAY);
    let analytic = grad.flatten();
    let base = adapter.params();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut probe = adapter.clone();
        let mut p = base.clone();
        p[i] = base[i] + eps;
        probe.set_params(&p);
        let plus = probe.loss_and_gradient(&refs, &labels, ADAPTER_DECAY).0;
        p[i] = base[i] - eps;
        probe.set_params(&p);
        let minus = probe.loss_and_gradient(&refs, &labels, ADAPTER_DECAY).0;
        let numeric = (plus - minus) / (2.0 * eps);
        let scale = a.abs().max(numeric.abs());
        let err = if scale < 1e-10 { 0.0 } else { (a - numeric).abs() / scale };
        worst = worst.max(err);
    }
    worst
}

// ---------------------------------------------------------------- convnet

/// Plain scalar forward pass in f64: nested loops over the documented
/// layouts (conv weights `[out][in][ky][kx]`, fc weights `[out][in]` over
/// the channel-major flattened input). Returns `(shape, values)` after the
/// last hidden layer, before normalization.
pub fn scalar_forward(net: &ConvNetSpec, input: &[f64]) -> ((usize, usize, usize), Vec<f64>) {
    let (mut c, mut h, mut w) = (net.input_channels, net.input_size, net.input_size);
    let mut x = input.to_vec();
    for layer in &net.layers[..=net.last_hidden] {
        match layer {
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weights,
                biases,
            } => {
                let (k, s, p) = (*kernel, *stride, *padding);
                let oh = (h + 2 * p - k) / s + 1;
                let ow = (w + 2 * p - k) / s + 1;
                let mut out = vec![0.0; out_channels * oh * ow];
                for o in 0..*out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = biases[o] as f64;
                            for i in 0..*in_channels {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iy = (oy * s + ky) as isize - p as isize;
                                        let ix = (ox * s + kx) as isize - p as isize;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                            continue;
                                        }
                                        let wv = weights[((o * in_channels + i) * k + ky) * k + kx] as f64;
                                        acc += wv * x[(i * h + iy as usize) * w + ix as usize];
                                    }
                                }
                            }
                            out[(o * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                x = out;
                (c, h, w) = (*out_channels, oh, ow);
            }
            Layer::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Layer::MaxPool { window, stride } => {
                let oh = (h - window) / stride + 1;
                let ow = (w - window) / stride + 1;
                let mut out = vec![f64::NEG_INFINITY; c * oh * ow];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let cell = &mut out[(ch * oh + oy) * ow + ox];
                            for dy in 0..*window {
                                for dx in 0..*window {
                                    *cell = cell.max(x[(ch * h + oy * stride + dy) * w + ox * stride + dx]);
                                }
                            }
                        }
                    }
                }
                x = out;
                (h, w) = (oh, ow);
            }
            Layer::Fc {
                inputs,
                outputs,
                weights,
                biases,
            } => {
                x = (0..*outputs)
                    .map(|o| {
                        biases[o] as f64 + (0..*inputs).map(|i| weights[o * inputs + i] as f64 * x[i]).sum::<f64>()
                    })
                    .collect();
                (c, h, w) = (*outputs, 1, 1);
            }
        }
    }
    ((c, h, w), x)
}

/// Channel-major input planes of `image`: RGB as-is, or luma with the
/// standard 0.299/0.587/0.114 weights.
pub fn image_planes(image: &RgbImage, channels: usize) -> Vec<f64> {
    let px = image.pixels();
    if channels == 1 {
        px.iter()
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    } else {
        (0..3).flat_map(|c| px.iter().map(move |p| p[c] as f64)).collect()
    }
}

pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

pub const CONVNET_FIXTURES: [&str; 2] = ["rgb16", "luma12"];

/// Largest absolute deviation of `convnet_forward` from the stored reference
/// vector and from the scalar oracle over the shipped fixtures; also checks
/// that the two convolution paths agree bit for bit.
pub fn check_convnet_fixtures() -> Result<f64, String> {
    let dir = fixture_dir().join("convnet");
    let mut worst: f64 = 0.0;
    for name in CONVNET_FIXTURES {
        let net = load_convnet(&dir.join(format!("{name}.bin"))).map_err(|e| e.to_string())?;
        let patch = RgbImage::load(&dir.join(format!("{name}.ppm"))).map_err(|e| e.to_string())?;
        let got = convnet_forward(&net, &patch).map_err(|e| e.to_string())?;
        let im2col = convnet_forward_with(&net, &patch, ConvAlgo::Im2col).map_err(|e| e.to_string())?;
        if got.values() != im2col.values() {
            return Err(format!("{name}: direct and im2col outputs differ"));
        }
        let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).map_err(|e| e.to_string())?;
        let stored: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let stored: Vec<f64> = stored["output"]
            .as_array()
            .ok_or("reference has no output array")?
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let (_, raw) = scalar_forward(&net, &image_planes(&patch, net.input_channels));
        let oracle = l2_normalize(&raw);
        for reference in [&stored, &oracle] {
            if reference.len() != got.dim() {
                return Err(format!("{name}: {} outputs, reference has {}", got.dim(), reference.len()));
            }
            for (a, b) in got.values().iter().zip(reference.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

fn random_blob(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f32> {
    let r = 1.0 / (fan_in as f32).sqrt();
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

/// Random valid layer stack over a random input size, together with the
/// expected shape after every layer from the closed-form size formulas.
pub fn random_stack(rng: &mut impl Rng) -> (ConvNetSpec, Vec<(usize, usize, usize)>) {
    let input_channels = if rng.gen_bool(0.5) { 1 } else { 3 };
    let input_size = rng.gen_range(10..=24);
    let (mut c, mut h) = (input_channels, input_size);
    let mut layers = Vec::new();
    let mut shapes = Vec::new();
    for _ in 0..rng.gen_range(2..=5) {
        match rng.gen_range(0..4) {
            0 if h >= 2 => {
                let kernel = rng.gen_range(1..=h.min(5));
                let stride = rng.gen_range(1..=2);
                let padding = rng.gen_range(0..=kernel / 2);
                let out = rng.gen_range(1..=4);
                let fan = c * kernel * kernel;
                layers.push(Layer::Conv {
                    in_channels: c,
                    out_channels: out,
                    kernel,
                    stride,
                    padding,
                    weights: random_blob(rng, out * fan, fan),
                    biases: random_blob(rng, out, fan),
                });
                h = (h + 2 * padding - kernel) / stride + 1;
                c = out;
            }
            1 if h >= 2 => {
                let window = rng.gen_range(2..=h.min(3));
                let stride = rng.gen_range(1..=window);
                layers.push(Layer::MaxPool { window, stride });
                h = (h - window) / stride + 1;
            }
            2 => layers.push(Layer::Relu),
            _ => {
                let inputs = c * h * h;
                let outputs = rng.gen_range(1..=6);
                layers.push(Layer::Fc {
                    inputs,
                    outputs,
                    weights: random_blob(rng, inputs * outputs, inputs),
                    biases: random_blob(rng, outputs, inputs),
                });
                c = outputs;
                h = 1;
            }
        }
        shapes.push((c, h, h));
    }
    let last_hidden = layers.len() - 1;
    (
        ConvNetSpec {
            input_size,
            input_channels,
            layers,
            last_hidden,
        },
        shapes,
    )
}

/// Shape formulas and scalar agreement on `count` random stacks.
pub fn check_random_stacks(count: usize, seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for n in 0..count {
        let (net, expected) = random_stack(&mut r);
        let shapes = net.validate().map_err(|e| format!("stack {n}: {e}"))?;
        if shapes != expected {
            return Err(format!("stack {n}: shapes {shapes:?}, formula {expected:?}"));
        }
        let s = net.input_size;
        let patch = RgbImage::from_fn(s, s, |_, _| [r.gen(), r.gen(), r.gen()]);
        let planes = image_planes(&patch, net.input_channels);
        let input = Tensor::from_image(&patch, net.input_channels);
        let direct = forward_tensor(&net, input.clone(), ConvAlgo::Direct);
        let im2col = forward_tensor(&net, input, ConvAlgo::Im2col);
        let last = *expected.last().unwrap();
        if (direct.channels, direct.height, direct.width) != last {
            return Err(format!(
                "stack {n}: output {}x{}x{}, formula {last:?}",
                direct.channels, direct.height, direct.width
            ));
        }
        if direct.data != im2col.data {
            return Err(format!("stack {n}: direct and im2col differ"));
        }
        if net.output_dim() != last.0 * last.1 * last.2 {
            return Err(format!("stack {n}: output_dim {} vs formula {last:?}", net.output_dim()));
        }
        let (shape, oracle) = scalar_forward(&net, &planes);
        if shape != last {
            return Err(format!("stack {n}: oracle shape {shape:?} vs {last:?}"));
        }
        for (a, b) in direct.data.iter().zip(&oracle) {
            worst = worst.max((*a as f64 - b).abs());
        }
    }
    Ok(worst)
}
