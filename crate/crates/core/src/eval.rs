//! Precision/recall curves, average precision and report files.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::{detection_order, Detection};
use crate::error::{Error, Result};
use crate::patches::{iou, BBox};
use crate::scene::Dataset;

pub const DEFAULT_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` after each detection, best score first.
    pub points: Vec<(f64, f64)>,
    pub num_gt: usize,
    pub num_dets: usize,
}

/// Match detections to ground truth in descending score order. Each
/// detection claims the unmatched ground-truth box of its image with the
/// highest IoU, provided that IoU reaches `iou_thresh`.
pub fn pr_curve(dets: &[Detection], gt: &[(String, BBox)], iou_thresh: f64) -> PrCurve {
    let mut by_image: HashMap<&str, Vec<(BBox, bool)>> = HashMap::new();
    for (id, b) in gt {
        by_image.entry(id.as_str()).or_default().push((*b, false));
    }
    for boxes in by_image.values_mut() {
        boxes.sort_by_key(|(b, _)| *b);
    }
    let mut sorted: Vec<&Detection> = dets.iter().collect();
    sorted.sort_by(|a, b| detection_order(a, b));

    let mut tp = 0usize;
    let mut points = Vec::with_capacity(sorted.len());
    for (i, d) in sorted.iter().enumerate() {
        if let Some(boxes) = by_image.get_mut(d.image_id.as_str()) {
            let mut best: Option<(usize, f64)> = None;
            for (j, (b, used)) in boxes.iter().enumerate() {
                if *used {
                    continue;
                }
                let o = iou(&d.bbox, b);
                if best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((j, o));
                }
            }
            if let Some((j, o)) = best {
                if o >= iou_thresh {
                    boxes[j].1 = true;
                    tp += 1;
                }
            }
        }
        let recall = if gt.is_empty() { 0.0 } else { tp as f64 / gt.len() as f64 };
        points.push((recall, tp as f64 / (i + 1) as f64));
    }
    PrCurve {
        points,
        num_gt: gt.len(),
        num_dets: dets.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    #[default]
    Voc11,
    Continuous,
}

impl FromStr for ApMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voc11" => Ok(ApMethod::Voc11),
            "continuous" => Ok(ApMethod::Continuous),
            other => Err(Error::invalid("ap method", format!("`{other}` (expected voc11 or continuous)"))),
        }
    }
}

pub fn ap(curve: &PrCurve, method: ApMethod) -> f64 {
    if curve.points.is_empty() || curve.num_gt == 0 {
        return 0.0;
    }
    match method {
        ApMethod::Voc11 => {
            let total: f64 = (0..=10)
                .map(|i| {
                    let r = i as f64 / 10.0;
                    curve
                        .points
                        .iter()
                        .filter(|(rec, _)| *rec >= r)
                        .map(|(_, p)| *p)
                        .fold(0.0, f64::max)
                })
                .sum();
            total / 11.0
        }
        ApMethod::Continuous => {
            let mut rec = vec![0.0];
            let mut prec = vec![0.0];
            for &(r, p) in &curve.points {
                rec.push(r);
                prec.push(p);
            }
            rec.push(1.0);
            prec.push(0.0);
            for i in (0..prec.len() - 1).rev() {
                prec[i] = prec[i].max(prec[i + 1]);
            }
            (1..rec.len())
                .filter(|&i| rec[i] != rec[i - 1])
                .map(|i| (rec[i] - rec[i - 1]) * prec[i])
                .sum()
        }
    }
}

pub fn mean_ap(per_category: &BTreeMap<String, f64>) -> Result<f64> {
    if per_category.is_empty() {
        return Err(Error::invalid("mean_ap", "no categories"));
    }
    Ok(per_category.values().sum::<f64>() / per_category.len() as f64)
}

/// Per-category AP of `dets` against the boxes in `test`. Every category
/// with ground truth in `test` gets an entry.
pub fn evaluate(dets: &[Detection], test: &Dataset, method: ApMethod, iou_thresh: f64) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for category in test.categories() {
        let gt: Vec<(String, BBox)> = test
            .items
            .iter()
            .flat_map(|it| {
                it.boxes
                    .iter()
                    .filter(|b| b.category == category)
                    .map(|b| (it.id.clone(), b.bbox))
            })
            .collect();
        let cat_dets: Vec<Detection> = dets.iter().filter(|d| d.category == category).cloned().collect();
        out.insert(category, ap(&pr_curve(&cat_dets, &gt, iou_thresh), method));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_category: BTreeMap<String, f64>,
    pub map: f64,
    /// Fully resolved configuration and seeds that produced the report.
    pub fingerprint: serde_json::Value,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn new(per_category: BTreeMap<String, f64>, fingerprint: serde_json::Value, notes: Vec<String>) -> Result<Self> {
        if let Some((c, v)) = per_category.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("report", format!("AP of `{c}` is {v}, outside [0, 1]")));
        }
        let map = mean_ap(&per_category)?;
        Ok(Self {
            per_category,
            map,
            fingerprint,
            notes,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,ap\n");
        for (c, v) in &self.per_category {
            writeln!(s, "{c},{v}").unwrap();
        }
        writeln!(s, "mAP,{}", self.map).unwrap();
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    #[default]
    Json,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid("format", format!("`{other}` (expected csv or json)"))),
        }
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
