//! Published reference numbers (in percent) that desk-scale runs are
//! reported beside. None of them is reproduced by this crate; they depend on
//! a large pretrained network and the full PASCAL VOC benchmark.

/// AP of detectors trained on synthetic data per background/texture preset,
/// with the fine-tuned network.
pub const TEXTURE_MATRIX_AP: [(&str, f64); 4] = [("RR-RR", 28.9), ("W-RR", 31.2), ("W-UG", 30.1), ("RG-RR", 31.2)];

pub const VIEW_CATEGORIES: [&str; 12] = [
    "aero", "bike", "bird", "bus", "car", "cow", "dog", "hrs", "mbik", "shp", "trn", "tv",
];

/// Per-category AP when training on all real views.
pub const VIEWS_ALL: [f64; 12] = [64.2, 69.7, 50.0, 62.6, 71.0, 58.5, 56.1, 60.6, 66.8, 52.8, 57.9, 64.7];

/// mAP per view-removal row: all, -random, -front, -side, and -front with a
/// network fine-tuned without front views.
pub const VIEWS_MAP: [(&str, f64); 5] = [
    ("all", 61.2),
    ("-random", 60.9),
    ("-front", 59.1),
    ("-side", 60.4),
    ("-front (fine-tuned without front)", 56.4),
];

/// mAP with all CAD models, then with half of them.
pub const SHAPE_ABLATION_MAP: (f64, f64) = (28.9, 23.53);

/// Baseline mAP before fine-tuning on virtual data, after it with no real
/// images, and with 5 real images per category.
pub const VCNN_MAP: [(&str, f64); 3] = [("baseline", 18.9), ("k=0", 22.0), ("k=5", 28.0)];
/// mAP with 10 real images per category, and the fully supervised DPM.
pub const VCNN_K10_MAP: f64 = 31.0;
pub const DPM_MAP: f64 = 33.0;

pub const VIRTUAL_SET_SIZE: usize = 2000;
/// Images in the real subsets with 20, 10 and 5 positives per category.
pub const REAL_SUBSET_SIZES: [(usize, usize); 3] = [(20, 276), (10, 120), (5, 73)];

/// One-line notes attached to every toy-world report.
pub fn report_notes(protocol: &str) -> Vec<String> {
    let mut notes = vec![
        "toy world: procedural shape families rendered by a software rasterizer stand in for CAD models and PASCAL VOC".to_string(),
        "\"real\" images are renders under the RR-RR configuration with held-out meshes and backgrounds".to_string(),
        "region proposals come from a sliding-window generator, not selective search".to_string(),
        "features come from the configured backend, optionally followed by a trained adapter layer in place of network fine-tuning".to_string(),
    ];
    let refs = match protocol {
        "matrix" => TEXTURE_MATRIX_AP
            .iter()
            .map(|(p, v)| format!("{p} {v}"))
            .collect::<Vec<_>>()
            .join(", "),
        "views" => VIEWS_MAP
            .iter()
            .map(|(p, v)| format!("{p} {v}"))
            .collect::<Vec<_>>()
            .join(", "),
        "shapes" => format!("all models {}, half the models {}", SHAPE_ABLATION_MAP.0, SHAPE_ABLATION_MAP.1),
        "vcnn" => format!(
            "{}; k=10 {VCNN_K10_MAP}; DPM {DPM_MAP}",
            VCNN_MAP.iter().map(|(p, v)| format!("{p} {v}")).collect::<Vec<_>>().join(", ")
        ),
        _ => String::new(),
    };
    if !refs.is_empty() {
        notes.push(format!("published reference (percent, not reproduced): {refs}"));
    }
    notes
}
