//! The subset of a COCO instances file the synthesis pipeline needs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Boxes may overhang the image by this many pixels before the file is rejected.
pub const BOUNDS_TOLERANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageInfo {
    pub file_name: String,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocoBox {
    pub annotation_id: u64,
    pub category_id: u64,
    pub bbox: BoundingBox,
}

/// Images, categories and per-image boxes, keyed by the decimal image id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CocoAnnotations {
    pub images: BTreeMap<String, ImageInfo>,
    pub categories: BTreeMap<u64, String>,
    /// Sorted by annotation id within each image.
    pub boxes: BTreeMap<String, Vec<CocoBox>>,
}

#[derive(Deserialize)]
struct RawFile {
    #[serde(default)]
    images: Vec<RawImage>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
    #[serde(default)]
    categories: Vec<RawCategory>,
}

#[derive(Deserialize)]
struct RawImage {
    id: u64,
    #[serde(default)]
    file_name: String,
    width: f64,
    height: f64,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
}

impl CocoAnnotations {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Json(source) => Error::Parse {
                path: path.to_path_buf(),
                line: source.line(),
                message: source.to_string(),
            },
            other => other,
        })
    }

    /// Parses and validates: ids must resolve and boxes must be non-degenerate and
    /// inside their image up to [`BOUNDS_TOLERANCE`].
    pub fn parse(json: &str) -> Result<Self> {
        let raw: RawFile = serde_json::from_str(json)?;
        let mut out = CocoAnnotations::default();
        for img in raw.images {
            out.images.insert(
                img.id.to_string(),
                ImageInfo {
                    file_name: img.file_name,
                    width: img.width,
                    height: img.height,
                },
            );
        }
        for cat in raw.categories {
            out.categories.insert(cat.id, cat.name);
        }
        for ann in raw.annotations {
            let image_key = ann.image_id.to_string();
            let image = out.images.get(&image_key).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "annotation {} references unknown image {}",
                    ann.id, ann.image_id
                ))
            })?;
            if !out.categories.contains_key(&ann.category_id) {
                return Err(Error::InvalidInput(format!(
                    "annotation {} references unknown category {}",
                    ann.id, ann.category_id
                )));
            }
            let bbox = BoundingBox::from_xywh(&ann.bbox)
                .map_err(|e| Error::InvalidInput(format!("annotation {}: {e}", ann.id)))?;
            if !bbox.within(image.width, image.height, BOUNDS_TOLERANCE) {
                return Err(Error::InvalidInput(format!(
                    "annotation {} extends outside image {} ({}x{})",
                    ann.id, ann.image_id, image.width, image.height
                )));
            }
            out.boxes.entry(image_key).or_default().push(CocoBox {
                annotation_id: ann.id,
                category_id: ann.category_id,
                bbox,
            });
        }
        for boxes in out.boxes.values_mut() {
            boxes.sort_by_key(|b| b.annotation_id);
        }
        Ok(out)
    }

    pub fn category_name(&self, id: u64) -> Option<&str> {
        self.categories.get(&id).map(String::as_str)
    }

    /// Case-insensitive lookup of a category name.
    pub fn has_category(&self, name: &str) -> bool {
        self.categories
            .values()
            .any(|c| c.eq_ignore_ascii_case(name))
    }
}
