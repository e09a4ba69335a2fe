//! COCO-subset annotation manifest.

use super::PipelineError;
use crate::geometry::Box2D;
use crate::label_assignment::InstanceAnnotation;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Deserialize)]
struct RawManifest {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
    categories: Vec<RawCategory>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Deserialize)]
struct RawImage {
    id: u64,
    #[serde(alias = "file")]
    file_name: String,
    width: usize,
    height: usize,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
}

/// Annotation with its box in corner form, clamped to the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationRecord {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: Box2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestLoad {
    pub manifest: DatasetManifest,
    pub warnings: Vec<String>,
}

fn warn_extra(warnings: &mut Vec<String>, what: &str, extra: &BTreeMap<String, Value>) {
    for key in extra.keys() {
        warnings.push(format!("{what}: ignoring unknown key \"{key}\""));
    }
}

pub fn parse_manifest(text: &str, source: &str) -> Result<ManifestLoad, PipelineError> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| PipelineError::Parse {
        source_name: source.to_string(),
        message: e.to_string(),
    })?;
    let mut warnings = Vec::new();
    warn_extra(&mut warnings, "manifest", &raw.extra);

    let mut image_sizes = BTreeMap::new();
    for (i, img) in raw.images.iter().enumerate() {
        warn_extra(&mut warnings, &format!("images[{i}]"), &img.extra);
        if image_sizes.insert(img.id, (img.width, img.height)).is_some() {
            return Err(PipelineError::DuplicateId { kind: "image", id: img.id });
        }
        if img.width == 0 || img.height == 0 {
            return Err(PipelineError::InvalidRecord {
                kind: "images",
                index: i,
                message: "width and height must be positive".into(),
            });
        }
    }
    let mut category_ids = BTreeSet::new();
    for (i, cat) in raw.categories.iter().enumerate() {
        warn_extra(&mut warnings, &format!("categories[{i}]"), &cat.extra);
        if !category_ids.insert(cat.id) {
            return Err(PipelineError::DuplicateId { kind: "category", id: cat.id });
        }
    }

    let mut annotation_ids = BTreeSet::new();
    let mut annotations = Vec::with_capacity(raw.annotations.len());
    for (i, ann) in raw.annotations.iter().enumerate() {
        warn_extra(&mut warnings, &format!("annotations[{i}]"), &ann.extra);
        if !annotation_ids.insert(ann.id) {
            return Err(PipelineError::DuplicateId { kind: "annotation", id: ann.id });
        }
        let &(w, h) = image_sizes.get(&ann.image_id).ok_or(PipelineError::DanglingReference {
            kind: "annotations",
            index: i,
            field: "image_id",
            id: ann.image_id,
        })?;
        if !category_ids.contains(&ann.category_id) {
            return Err(PipelineError::DanglingReference {
                kind: "annotations",
                index: i,
                field: "category_id",
                id: ann.category_id,
            });
        }
        let [x, y, bw, bh] = ann.bbox;
        if !(bw > 0.0 && bh > 0.0) || !x.is_finite() || !y.is_finite() || !bw.is_finite() || !bh.is_finite() {
            return Err(PipelineError::InvalidRecord {
                kind: "annotations",
                index: i,
                message: format!("bbox {:?} needs finite values and positive width/height", ann.bbox),
            });
        }
        let full = Box2D::from_xywh(x, y, bw, bh).expect("validated above");
        let clamped = full.clamp_to(w as f64, h as f64).ok_or_else(|| PipelineError::InvalidRecord {
            kind: "annotations",
            index: i,
            message: format!("bbox {:?} lies entirely outside the {w}x{h} image", ann.bbox),
        })?;
        if clamped != full {
            warnings.push(format!(
                "annotations[{i}] (id {}): bbox {:?} clamped to the {w}x{h} image",
                ann.id, ann.bbox
            ));
        }
        annotations.push(AnnotationRecord {
            id: ann.id,
            image_id: ann.image_id,
            category_id: ann.category_id,
            bbox: clamped,
        });
    }

    let manifest = DatasetManifest {
        images: raw
            .images
            .into_iter()
            .map(|r| ImageRecord { id: r.id, file_name: r.file_name, width: r.width, height: r.height })
            .collect(),
        annotations,
        categories: raw.categories.into_iter().map(|c| Category { id: c.id, name: c.name }).collect(),
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ManifestLoad { manifest, warnings })
}

pub fn load_manifest(path: &Path) -> Result<ManifestLoad, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

#[derive(Serialize)]
struct OutAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct OutManifest<'a> {
    images: &'a [ImageRecord],
    annotations: Vec<OutAnnotation>,
    categories: &'a [Category],
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        let out = OutManifest {
            images: &self.images,
            annotations: self
                .annotations
                .iter()
                .map(|a| OutAnnotation {
                    id: a.id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    bbox: a.bbox.to_xywh(),
                })
                .collect(),
            categories: &self.categories,
        };
        super::json::to_string(&out)
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Images sorted by id.
    pub fn sorted_images(&self) -> Vec<&ImageRecord> {
        let mut v: Vec<_> = self.images.iter().collect();
        v.sort_by_key(|i| i.id);
        v
    }

    /// Annotations of one image sorted by id.
    pub fn annotations_for(&self, image_id: u64) -> Vec<&AnnotationRecord> {
        let mut v: Vec<_> = self.annotations.iter().filter(|a| a.image_id == image_id).collect();
        v.sort_by_key(|a| a.id);
        v
    }

    pub fn instances_for(&self, image_id: u64) -> Vec<InstanceAnnotation> {
        self.annotations_for(image_id)
            .into_iter()
            .map(|a| InstanceAnnotation {
                instance_id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox: a.bbox,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": 1, "file_name": "a.ppm", "width": 64, "height": 48}],
        "annotations": [{"id": 7, "image_id": 1, "category_id": 3, "bbox": [4, 5, 20, 10]}],
        "categories": [{"id": 3, "name": "cup"}]
    }"#;

    #[test]
    fn minimal_manifest() {
        let m = parse_manifest(MINIMAL, "t").unwrap();
        assert!(m.warnings.is_empty());
        assert_eq!(m.manifest.images.len(), 1);
        assert_eq!(m.manifest.annotations.len(), 1);
        assert_eq!(m.manifest.categories.len(), 1);
        assert_eq!(m.manifest.annotations[0].bbox, Box2D::new(4., 5., 24., 15.).unwrap());
    }

    #[test]
    fn dangling_image_reference() {
        let text = MINIMAL.replace("\"image_id\": 1", "\"image_id\": 9");
        match parse_manifest(&text, "t") {
            Err(PipelineError::DanglingReference { index: 0, field: "image_id", id: 9, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_category_reference() {
        let text = MINIMAL.replace("\"category_id\": 3", "\"category_id\": 4");
        assert!(matches!(
            parse_manifest(&text, "t"),
            Err(PipelineError::DanglingReference { field: "category_id", .. })
        ));
    }

    #[test]
    fn overhanging_box_is_clamped() {
        let text = MINIMAL.replace("[4, 5, 20, 10]", "[50, 5, 30, 10]");
        let m = parse_manifest(&text, "t").unwrap();
        assert_eq!(m.manifest.annotations[0].bbox, Box2D::new(50., 5., 64., 15.).unwrap());
        assert_eq!(m.warnings.len(), 1);
        assert!(m.warnings[0].contains("clamped"));
    }

    #[test]
    fn non_positive_box() {
        let text = MINIMAL.replace("[4, 5, 20, 10]", "[4, 5, 0, 10]");
        assert!(matches!(
            parse_manifest(&text, "t"),
            Err(PipelineError::InvalidRecord { kind: "annotations", index: 0, .. })
        ));
    }

    #[test]
    fn unknown_keys_warn() {
        let text = MINIMAL.replace("\"categories\"", "\"info\": {}, \"categories\"").replace(
            "\"name\": \"cup\"",
            "\"name\": \"cup\", \"supercategory\": \"x\"",
        );
        let m = parse_manifest(&text, "t").unwrap();
        assert_eq!(m.warnings.len(), 2);
    }

    #[test]
    fn parse_error_names_the_source() {
        match parse_manifest("{", "broken.json") {
            Err(PipelineError::Parse { source_name, .. }) => assert_eq!(source_name, "broken.json"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let m = parse_manifest(MINIMAL, "t").unwrap().manifest;
        let again = parse_manifest(&m.to_json(), "t").unwrap().manifest;
        assert_eq!(m, again);
    }
}
