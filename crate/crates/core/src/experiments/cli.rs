//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use super::config::ExperimentConfig;
use super::pipeline::{train_detector, Detector, TestBank};
use super::plot::{plot_curve, Series};
use super::protocols::{run_shape_ablation, run_texture_matrix, run_vcnn, run_view_ablation, view_training_set, Bench};
use super::world::ToyWorld;
use crate::classify::LinearClassifier;
use crate::error::{Error, Result};
use crate::eval::{emit_report, EvalReport, ReportFormat};
use crate::features::{save_convnet, Adapter, ConvNetSpec, Layer};
use crate::geometry::write_obj;
use crate::rng::{derive_seed, stream};
use crate::scene::{generate_batch, read_manifest, write_manifest, Dataset};

#[derive(Debug, Parser)]
#[command(name = "synthdet", version, about = "Synthetic-data detector training and invariance experiments")]
pub struct Cli {
    /// JSON configuration file; every field is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdapterArg {
    On,
    Off,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate virtual datasets for every configured preset plus the
    /// real-style test set.
    Gen,
    /// Train per-category classifiers on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evaluate trained classifiers on a test manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        classifiers: PathBuf,
    },
    /// Train on each background/texture preset and test on real-style data.
    Matrix,
    /// Remove one view from real-style training data.
    Views,
    /// Train with all meshes and with a fraction of them.
    Shapes,
    /// Adapt on virtual data, then add k real images per category.
    Vcnn {
        #[arg(long, value_enum, default_value_t = AdapterArg::Both)]
        adapter: AdapterArg,
    },
    /// Write toy-world meshes, background samples and a small convnet.
    Fixtures,
}

/// Parse `argv`, run, and return the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_fingerprint(cfg: &ExperimentConfig, out: &Path, command: &str) -> Result<()> {
    let mut fp = cfg.fingerprint()?;
    fp["command"] = command.into();
    let mut text = serde_json::to_string_pretty(&fp)?;
    text.push('\n');
    write(&out.join("fingerprint.json"), &text)
}

fn emit(report: &EvalReport, format: ReportFormat, dir: &Path, stem: &str) -> Result<()> {
    emit_report(report, format, &dir.join(format!("{stem}.{}", format.extension())))
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let out = &cli.out;
    let format: ReportFormat = cli.format.into();
    create_dir(out)?;
    let name = match &cli.command {
        Command::Gen => "gen",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Matrix => "matrix",
        Command::Views => "views",
        Command::Shapes => "shapes",
        Command::Vcnn { .. } => "vcnn",
        Command::Fixtures => "fixtures",
    };
    write_fingerprint(&cfg, out, name)?;
    match &cli.command {
        Command::Gen => gen(&cfg, out),
        Command::Train { manifest } => train(&cfg, out, manifest),
        Command::Eval { manifest, classifiers } => eval(&cfg, out, format, manifest, classifiers),
        Command::Matrix => {
            let bench = Bench::new(&cfg)?;
            let result = run_texture_matrix(&cfg, &bench)?;
            let dir = out.join("matrix");
            create_dir(&dir)?;
            let mut summary = String::from("preset,mAP\n");
            for (preset, report) in &result.rows {
                emit(report, format, &dir, preset)?;
                writeln!(summary, "{preset},{}", report.map).unwrap();
            }
            write(&out.join("matrix.csv"), &summary)
        }
        Command::Views => {
            let bench = Bench::new(&cfg)?;
            let real = view_training_set(&cfg, &bench)?;
            let dir = out.join("views");
            create_dir(&dir)?;
            let mut summary = String::from("removal,mAP\n");
            for &removal in &cfg.experiment.removals {
                let report = run_view_ablation(&cfg, &bench, &real, removal)?;
                emit(&report, format, &dir, removal.name())?;
                writeln!(summary, "{},{}", removal.name(), report.map).unwrap();
            }
            write(&out.join("views.csv"), &summary)
        }
        Command::Shapes => {
            let bench = Bench::new(&cfg)?;
            let (full, reduced) = run_shape_ablation(&cfg, &bench)?;
            let dir = out.join("shapes");
            create_dir(&dir)?;
            emit(&full, format, &dir, "full")?;
            emit(&reduced, format, &dir, "reduced")?;
            write(
                &out.join("shapes.csv"),
                &format!("meshes,mAP\nfull,{}\nreduced,{}\n", full.map, reduced.map),
            )
        }
        Command::Vcnn { adapter } => vcnn(&cfg, out, format, *adapter),
        Command::Fixtures => fixtures(&cfg, out),
    }
}

fn gen(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let world = ToyWorld::build(cfg)?;
    for &preset in &cfg.scene.presets {
        let seed = derive_seed(cfg.experiment.seed, &format!("gen/{}", preset.name()));
        let ds = generate_batch(&world.train_meshes, &world.virtual_scene(cfg, preset), cfg.experiment.virtual_n, seed)?;
        let dir = out.join(preset.name());
        create_dir(&dir)?;
        write_manifest(&ds, &dir.join("manifest.jsonl"))?;
    }
    let test = world.real_dataset(cfg, cfg.experiment.test_per_category, "test")?;
    let dir = out.join("test");
    create_dir(&dir)?;
    write_manifest(&test, &dir.join("manifest.jsonl"))
}

fn classifier_file(category: &str) -> String {
    format!("svm-{category}.json")
}

fn train(cfg: &ExperimentConfig, out: &Path, manifest: &Path) -> Result<()> {
    let ds = read_manifest(manifest)?;
    let categories = ds.categories();
    if categories.is_empty() {
        return Err(Error::invalid("train", "manifest has no labeled boxes"));
    }
    let base = cfg.extractor.build()?;
    let det = train_detector(&ds, &categories, cfg, &base, derive_seed(cfg.experiment.seed, "train"))?;
    let dir = out.join("classifiers");
    create_dir(&dir)?;
    for clf in &det.classifiers {
        clf.save(&dir.join(classifier_file(&clf.category)))?;
    }
    if let Some(adapter) = &det.extractor.adapter {
        let mut text = serde_json::to_string(adapter.as_ref())?;
        text.push('\n');
        write(&dir.join("adapter.json"), &text)?;
    }
    Ok(())
}

fn load_detector(cfg: &ExperimentConfig, dir: &Path) -> Result<Detector> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("svm-") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid("eval", format!("no classifiers in {}", dir.display())));
    }
    let classifiers = paths.iter().map(|p| LinearClassifier::load(p)).collect::<Result<Vec<_>>>()?;
    let mut extractor = cfg.extractor.build()?;
    let adapter_path = dir.join("adapter.json");
    if adapter_path.exists() {
        let text = fs::read_to_string(&adapter_path).map_err(|e| Error::io(&adapter_path, e))?;
        let adapter: Adapter = serde_json::from_str(&text)?;
        extractor = extractor.with_adapter(adapter)?;
    }
    Ok(Detector { extractor, classifiers })
}

fn eval(cfg: &ExperimentConfig, out: &Path, format: ReportFormat, manifest: &Path, classifiers: &Path) -> Result<()> {
    let test: Dataset = read_manifest(manifest)?;
    let det = load_detector(cfg, classifiers)?;
    let bank = TestBank::build(&test, &det.extractor.base(), &cfg.classifier.proposals)?;
    let per = bank.evaluate(&test, &det, &cfg.classifier)?;
    let mut fp = cfg.fingerprint()?;
    fp["test_manifest"] = manifest.display().to_string().into();
    let report = EvalReport::new(per, fp, vec![format!("evaluated on {} images", test.len())])?;
    emit(&report, format, out, "report")
}

fn vcnn(cfg: &ExperimentConfig, out: &Path, format: ReportFormat, adapter: AdapterArg) -> Result<()> {
    let bench = Bench::new(cfg)?;
    let settings: Vec<bool> = match adapter {
        AdapterArg::On => vec![true],
        AdapterArg::Off => vec![false],
        AdapterArg::Both => vec![false, true],
    };
    let dir = out.join("vcnn");
    create_dir(&dir)?;
    let mut series = Vec::new();
    for on in settings {
        let label = if on { "adapter-on" } else { "adapter-off" };
        let points = run_vcnn(cfg, &bench, on)?;
        for p in &points {
            emit(&p.report, format, &dir, &format!("{label}-k{}", p.k))?;
        }
        series.push(Series {
            name: label.to_string(),
            points: points.iter().map(|p| (p.k as f64, p.report.map)).collect(),
        });
    }
    let mut csv = String::from("k");
    for s in &series {
        write!(csv, ",{}", s.name).unwrap();
    }
    csv.push('\n');
    for (i, &k) in cfg.experiment.real_ks.iter().enumerate() {
        write!(csv, "{k}").unwrap();
        for s in &series {
            write!(csv, ",{}", s.points[i].1).unwrap();
        }
        csv.push('\n');
    }
    write(&out.join("curve.csv"), &csv)?;
    plot_curve(&series, &out.join("curve.svg"))
}

/// A small seeded random network: two 3x3 convolutions, a pool and a
/// fully-connected layer over 16x16 RGB input.
pub fn fixture_convnet(seed: u64) -> ConvNetSpec {
    use rand::Rng;
    let mut rng = stream(seed);
    let mut uniform = |n: usize, fan_in: usize| -> Vec<f32> {
        let r = 1.0 / (fan_in as f32).sqrt();
        (0..n).map(|_| rng.gen_range(-r..=r)).collect()
    };
    let conv1_w = uniform(4 * 3 * 9, 27);
    let conv1_b = uniform(4, 27);
    let conv2_w = uniform(6 * 4 * 9, 36);
    let conv2_b = uniform(6, 36);
    let fc_w = uniform(16 * 6 * 7 * 7, 6 * 49);
    let fc_b = uniform(16, 6 * 49);
    ConvNetSpec {
        input_size: 16,
        input_channels: 3,
        layers: vec![
            Layer::Conv {
                in_channels: 3,
                out_channels: 4,
                kernel: 3,
                stride: 1,
                padding: 1,
                weights: conv1_w,
                biases: conv1_b,
            },
            Layer::Relu,
            Layer::Conv {
                in_channels: 4,
                out_channels: 6,
                kernel: 3,
                stride: 1,
                padding: 0,
                weights: conv2_w,
                biases: conv2_b,
            },
            Layer::Relu,
            Layer::MaxPool { window: 2, stride: 2 },
            Layer::Fc {
                inputs: 6 * 7 * 7,
                outputs: 16,
                weights: fc_w,
                biases: fc_b,
            },
            Layer::Relu,
        ],
        last_hidden: 6,
    }
}

fn fixtures(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let world = ToyWorld::build(cfg)?;
    let meshes = out.join("meshes");
    create_dir(&meshes)?;
    let mut index: std::collections::BTreeMap<&str, usize> = Default::default();
    for m in world.train_meshes.iter().chain(&world.heldout_meshes) {
        let i = index.entry(m.category.as_str()).or_default();
        write(&meshes.join(format!("{}-{:02}.obj", m.category, i)), &write_obj(m))?;
        *i += 1;
    }
    let images = out.join("pools");
    create_dir(&images)?;
    for (i, img) in world.backgrounds.iter().enumerate() {
        img.save(&images.join(format!("background-{i:02}.png")))?;
    }
    for (i, img) in world.textures.iter().enumerate() {
        img.save(&images.join(format!("texture-{i:02}.png")))?;
    }
    save_convnet(&fixture_convnet(derive_seed(cfg.experiment.seed, "convnet")), &out.join("convnet.bin"))
}
