//! The four experimental protocols: background/texture matrix, view
//! removal, shape ablation, and virtual pre-adaptation with few real images.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Removal};
use super::pipeline::{collect_patches, fit_adapter, train_classifiers, train_detector, Detector, PatchSet, TestBank};
use super::world::ToyWorld;
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::features::{AdapterHyper, Extractor};
use crate::geometry::Mesh;
use crate::references::report_notes;
use crate::rng::{derive_seed, stream};
use crate::scene::{generate_batch, subsample_real, Dataset, Preset, ViewTag};

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid("protocol", msg()))
    }
}

/// Per-category image counts may differ by at most one.
fn ensure_balanced(ds: &Dataset, categories: &[String]) -> Result<()> {
    let counts = ds.images_per_category();
    let values: Vec<usize> = categories.iter().map(|c| counts.get(c).copied().unwrap_or(0)).collect();
    let (lo, hi) = (values.iter().min().copied().unwrap_or(0), values.iter().max().copied().unwrap_or(0));
    ensure(hi - lo <= 1, || format!("unbalanced categories: {counts:?}"))
}

fn virtual_set(world: &ToyWorld, cfg: &ExperimentConfig, meshes: &[Mesh], preset: Preset, seed: u64) -> Result<Dataset> {
    let n = cfg.experiment.virtual_n;
    let ds = generate_batch(meshes, &world.virtual_scene(cfg, preset), n, seed)?;
    ensure(ds.len() == n, || format!("generated {} images, expected {n}", ds.len()))?;
    ensure_balanced(&ds, &world.categories)?;
    Ok(ds)
}

fn report(
    cfg: &ExperimentConfig,
    per_category: BTreeMap<String, f64>,
    protocol: &str,
    extra: serde_json::Value,
    mut notes: Vec<String>,
) -> Result<EvalReport> {
    let mut fp = cfg.fingerprint()?;
    fp["protocol"] = protocol.into();
    fp["run"] = extra;
    notes.extend(report_notes(protocol));
    notes.push(format!(
        "svm C {}, {} epochs, hard negatives {}, ap {:?}",
        cfg.classifier.c, cfg.classifier.epochs, cfg.classifier.hard_negatives, cfg.classifier.ap_method
    ));
    EvalReport::new(per_category, fp, notes)
}

/// Shared inputs of a protocol run: the toy world, the real-style test set,
/// the base extractor and its features on the test proposals.
pub struct Bench {
    pub world: ToyWorld,
    pub test: Dataset,
    pub base: Extractor,
    pub bank: TestBank,
}

impl Bench {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let world = ToyWorld::build(cfg)?;
        let test = world.real_dataset(cfg, cfg.experiment.test_per_category, "test")?;
        ensure_balanced(&test, &world.categories)?;
        let base = cfg.extractor.build()?;
        let bank = TestBank::build(&test, &base, &cfg.classifier.proposals)?;
        Ok(Self { world, test, base, bank })
    }

    fn evaluate(&self, det: &Detector, cfg: &ExperimentConfig) -> Result<BTreeMap<String, f64>> {
        self.bank.evaluate(&self.test, det, &cfg.classifier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub rows: BTreeMap<String, EvalReport>,
}

/// Train on virtual data from each preset and test on the real-style set.
/// Data and training seeds are derived from the master seed and the preset
/// name.
pub fn run_texture_matrix(cfg: &ExperimentConfig, bench: &Bench) -> Result<MatrixResult> {
    let seed = cfg.experiment.seed;
    let mut rows = BTreeMap::new();
    for &preset in &cfg.scene.presets {
        let name = preset.name();
        let run = || -> Result<EvalReport> {
            let data_seed = derive_seed(seed, &format!("matrix/data/{name}"));
            let train_seed = derive_seed(seed, &format!("matrix/train/{name}"));
            let train = virtual_set(&bench.world, cfg, &bench.world.train_meshes, preset, data_seed)?;
            let det = train_detector(&train, &bench.world.categories, cfg, &bench.base, train_seed)?;
            let per = bench.evaluate(&det, cfg)?;
            report(
                cfg,
                per,
                "matrix",
                serde_json::json!({"preset": name, "data_seed": data_seed, "train_seed": train_seed}),
                vec![format!("trained on {} virtual {name} images", train.len())],
            )
        };
        rows.insert(name.to_string(), run().map_err(|e| e.context(format!("preset {name}")))?);
    }
    ensure(rows.len() == cfg.scene.presets.len(), || "duplicate presets in config".into())?;
    Ok(MatrixResult { rows })
}

/// Items kept after removing a view. `Random` drops as many items as
/// `Front` would, chosen by seed.
pub fn filter_views(ds: &Dataset, removal: Removal, seed: u64) -> Dataset {
    let has = |item: &crate::scene::LabeledImage, v: ViewTag| item.boxes.iter().any(|b| b.view == v);
    let keep: Vec<bool> = match removal {
        Removal::None => vec![true; ds.len()],
        Removal::Front => ds.items.iter().map(|it| !has(it, ViewTag::Front)).collect(),
        Removal::Side => ds.items.iter().map(|it| !has(it, ViewTag::Side)).collect(),
        Removal::Random => {
            let count = ds.items.iter().filter(|it| has(it, ViewTag::Front)).count();
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut stream(seed));
            let mut keep = vec![true; ds.len()];
            for &i in idx.iter().take(count) {
                keep[i] = false;
            }
            keep
        }
    };
    Dataset {
        items: ds
            .items
            .iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(it, _)| it.clone())
            .collect(),
        manifest_path: None,
        seed: ds.seed,
    }
}

/// Train on real-style images with one view removed and test on the
/// untouched test set holding every view.
pub fn run_view_ablation(cfg: &ExperimentConfig, bench: &Bench, real: &Dataset, removal: Removal) -> Result<EvalReport> {
    let seed = cfg.experiment.seed;
    let filter_seed = derive_seed(seed, "views/random");
    let train = filter_views(real, removal, filter_seed);
    let removed_view = match removal {
        Removal::Front => Some(ViewTag::Front),
        Removal::Side => Some(ViewTag::Side),
        _ => None,
    };
    if let Some(v) = removed_view {
        let left = train.items.iter().filter(|it| it.boxes.iter().any(|b| b.view == v)).count();
        ensure(left == 0, || format!("{left} {v:?} items survived removal"))?;
    }
    if removal == Removal::Random {
        let front = filter_views(real, Removal::Front, 0).len();
        ensure(train.len() == front, || "random removal count differs from front removal".into())?;
    }
    let counts = train.images_per_category();
    for c in &bench.world.categories {
        if counts.get(c).copied().unwrap_or(0) == 0 {
            return Err(Error::EmptyCategory(c.clone()));
        }
    }
    let train_seed = derive_seed(seed, "views/train");
    let det = train_detector(&train, &bench.world.categories, cfg, &bench.base, train_seed)?;
    let per = bench.evaluate(&det, cfg)?;
    report(
        cfg,
        per,
        "views",
        serde_json::json!({"removal": removal.name(), "train_images": train.len(), "train_seed": train_seed}),
        vec![format!(
            "removal {}: {} of {} real-style training images kept",
            removal.name(),
            train.len(),
            real.len()
        )],
    )
}

/// Real-style training set for the view protocol.
pub fn view_training_set(cfg: &ExperimentConfig, bench: &Bench) -> Result<Dataset> {
    bench
        .world
        .real_dataset(cfg, cfg.experiment.view_train_per_category, "views")
}

/// Seed-selected `ceil(fraction * n)` training meshes per category, in
/// their original order.
pub fn select_meshes(world: &ToyWorld, fraction: f64, seed: u64) -> Result<Vec<Mesh>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("shape ablation", format!("fraction must be in (0, 1], got {fraction}")));
    }
    let mut out = Vec::new();
    for c in &world.categories {
        let meshes = world.meshes_of(c);
        if meshes.len() < 2 {
            return Err(Error::Insufficient {
                category: c.clone(),
                needed: 2,
                available: meshes.len(),
            });
        }
        let keep = (fraction * meshes.len() as f64).ceil() as usize;
        if keep == 0 {
            return Err(Error::EmptyCategory(c.clone()));
        }
        let mut idx: Vec<usize> = (0..meshes.len()).collect();
        idx.shuffle(&mut stream(derive_seed(seed, c)));
        let mut chosen: Vec<usize> = idx.into_iter().take(keep).collect();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| meshes[i].clone()));
    }
    Ok(out)
}

/// Train once with every training mesh and once with a fraction of them,
/// sharing all other seeds.
pub fn run_shape_ablation(cfg: &ExperimentConfig, bench: &Bench) -> Result<(EvalReport, EvalReport)> {
    let seed = cfg.experiment.seed;
    let fraction = cfg.experiment.shape_fraction;
    let reduced = select_meshes(&bench.world, fraction, derive_seed(seed, "shapes/select"))?;
    let data_seed = derive_seed(seed, "shapes/data");
    let train_seed = derive_seed(seed, "shapes/train");
    let preset = cfg.scene.virtual_preset;
    let mut out = Vec::new();
    for (label, meshes) in [("full", &bench.world.train_meshes), ("reduced", &reduced)] {
        let train = virtual_set(&bench.world, cfg, meshes, preset, data_seed)?;
        let det = train_detector(&train, &bench.world.categories, cfg, &bench.base, train_seed)?;
        let per = bench.evaluate(&det, cfg)?;
        out.push(report(
            cfg,
            per,
            "shapes",
            serde_json::json!({"meshes": label, "mesh_count": meshes.len(), "data_seed": data_seed, "train_seed": train_seed}),
            vec![format!("{label}: {} training meshes", meshes.len())],
        )?);
    }
    let reduced_report = out.pop().expect("two runs");
    Ok((out.pop().expect("two runs"), reduced_report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcnnPoint {
    pub k: usize,
    pub report: EvalReport,
}

/// Virtual images adapt the features (when `adapter` is on); SVMs then
/// train on virtual plus `k` real images per category for each `k`.
pub fn run_vcnn(cfg: &ExperimentConfig, bench: &Bench, adapter: bool) -> Result<Vec<VcnnPoint>> {
    let e = &cfg.experiment;
    let seed = e.seed;
    let categories = &bench.world.categories;
    let max_k = e.real_ks.iter().copied().max().unwrap_or(0);
    if max_k > e.real_pool_per_category {
        return Err(Error::Insufficient {
            category: categories[0].clone(),
            needed: max_k,
            available: e.real_pool_per_category,
        });
    }
    let data_seed = derive_seed(seed, "vcnn/data");
    let train_seed = derive_seed(seed, "vcnn/train");
    let patch_seed = derive_seed(train_seed, "patches");
    let train = virtual_set(&bench.world, cfg, &bench.world.train_meshes, cfg.scene.virtual_preset, data_seed)?;
    let virtual_patches = collect_patches(&train, categories, &cfg.sampler, &bench.base, patch_seed)?;
    let extractor = if adapter {
        let hyper = AdapterHyper {
            seed: derive_seed(train_seed, "adapter"),
            ..cfg.extractor.adapter_hyper
        };
        bench.base.with_adapter(fit_adapter(&virtual_patches, categories.len(), &hyper)?)?
    } else {
        bench.base.base()
    };
    let pool = bench.world.real_dataset(cfg, e.real_pool_per_category, "pool")?;
    let subset_seed = derive_seed(seed, "vcnn/subset");

    let mut points = Vec::new();
    for &k in &e.real_ks {
        let mut patches: PatchSet = virtual_patches.clone();
        let mut real_count = 0;
        if k > 0 {
            let real = subsample_real(&pool, k, subset_seed)?;
            let counts = real.images_per_category();
            ensure(categories.iter().all(|c| counts.get(c) == Some(&k)), || {
                format!("real subset counts {counts:?}, expected {k} each")
            })?;
            real_count = real.len();
            patches.extend(collect_patches(&real, categories, &cfg.sampler, &bench.base, patch_seed)?);
        }
        let patches = patches.adapted(&extractor)?;
        let classifiers = train_classifiers(&patches, categories, &cfg.classifier, derive_seed(train_seed, "svm"))?;
        let det = Detector {
            extractor: extractor.clone(),
            classifiers,
        };
        let per = bench.evaluate(&det, cfg)?;
        points.push(VcnnPoint {
            k,
            report: report(
                cfg,
                per,
                "vcnn",
                serde_json::json!({"k": k, "adapter": adapter, "data_seed": data_seed, "train_seed": train_seed}),
                vec![format!(
                    "{} virtual + {real_count} real training images, adapter {}",
                    train.len(),
                    if adapter { "on" } else { "off" }
                )],
            )?,
        });
    }
    Ok(points)
}
