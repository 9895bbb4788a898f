//! JSON-lines dataset manifests with images stored beside them.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledBox, LabeledImage, Provenance, ViewTag};
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::patches::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestBox {
    pub category: String,
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
    pub view: ViewTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    /// Image path relative to the manifest's directory.
    pub file: String,
    pub provenance: Provenance,
    pub boxes: Vec<ManifestBox>,
}

impl ManifestRecord {
    fn from_item(item: &LabeledImage, file: String) -> Self {
        Self {
            id: item.id.clone(),
            file,
            provenance: item.provenance,
            boxes: item
                .boxes
                .iter()
                .map(|b| ManifestBox {
                    category: b.category.clone(),
                    x0: b.bbox.x0,
                    y0: b.bbox.y0,
                    x1: b.bbox.x1,
                    y1: b.bbox.y1,
                    view: b.view,
                })
                .collect(),
        }
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(Error::Record {
            id: id.to_string(),
            msg: "id is not usable as a file name".into(),
        });
    }
    Ok(())
}

/// Write `ds` as a JSONL manifest at `path`, with one PNG per item under
/// `images/` next to it.
pub fn write_manifest(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut out = Vec::new();
    for item in &ds.items {
        check_id(&item.id)?;
        let file = format!("images/{}.png", item.id);
        item.image.save(&dir.join(&file))?;
        serde_json::to_writer(&mut out, &ManifestRecord::from_item(item, file))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a manifest written by [`write_manifest`] (or by hand; PNG and binary
/// PPM images are both accepted).
pub fn read_manifest(path: &Path) -> Result<Dataset> {
    let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: line_no,
            msg: e.to_string(),
        })?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::Manifest {
                line: line_no,
                msg: format!("duplicate id `{}`", rec.id),
            });
        }
        let image = RgbImage::load(&dir.join(&rec.file))?;
        let mut boxes = Vec::with_capacity(rec.boxes.len());
        for b in &rec.boxes {
            let bbox = BBox::new(b.x0, b.y0, b.x1, b.y1).map_err(|e| Error::Record {
                id: rec.id.clone(),
                msg: e.to_string(),
            })?;
            boxes.push(LabeledBox {
                category: b.category.clone(),
                bbox,
                view: b.view,
            });
        }
        let item = LabeledImage {
            id: rec.id,
            image: Arc::new(image),
            boxes,
            provenance: rec.provenance,
            foreground: None,
        };
        item.validate()?;
        items.push(item);
    }
    Ok(Dataset {
        items,
        manifest_path: Some(path.to_path_buf()),
        seed: 0,
    })
}
