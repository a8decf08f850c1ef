//! COCO-style `images` / `annotations` / `categories` adapter.
//!
//! Keypoints are flattened to ten `[x, y, v]` triples with `v` in `{0, 2}`.
//! On import a `v = 0` triple at the origin is treated as "not annotated",
//! any other `v = 0` triple as an occluded node.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::types::{
    BBox, DatasetManifest, DomainTag, ImageRecord, Keypoint, Provenance, ShootAnnotation, Split, MAX_KEYPOINTS,
    SHOOT_CLASS,
};
use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    /// Original manifest record id; ignored by COCO tooling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default)]
    pub keypoints: Vec<f64>,
    #[serde(default)]
    pub num_keypoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    #[serde(default)]
    pub keypoints: Vec<String>,
    #[serde(default)]
    pub skeleton: Vec<[u32; 2]>,
}

fn shoot_category() -> CocoCategory {
    CocoCategory {
        id: 1,
        name: SHOOT_CLASS.to_string(),
        keypoints: (1..=MAX_KEYPOINTS).map(|i| format!("node_{i}")).collect(),
        skeleton: (1..MAX_KEYPOINTS as u32).map(|i| [i, i + 1]).collect(),
    }
}

/// Exports a manifest. Image ids are assigned 1.. in record order.
pub fn to_coco(m: &DatasetManifest) -> CocoDataset {
    let mut images = Vec::with_capacity(m.records.len());
    let mut annotations = Vec::new();
    for (i, r) in m.records.iter().enumerate() {
        let image_id = i as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            file_name: r.path.clone(),
            width: r.width,
            height: r.height,
            record_id: Some(r.id.clone()),
        });
        for ann in &r.annotations {
            let mut flat = vec![0.0; MAX_KEYPOINTS * 3];
            for kp in &ann.keypoints {
                let slot = (usize::from(kp.index) - 1) * 3;
                flat[slot] = kp.x;
                flat[slot + 1] = kp.y;
                flat[slot + 2] = if kp.visible { 2.0 } else { 0.0 };
            }
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id,
                category_id: 1,
                bbox: [ann.bbox.x, ann.bbox.y, ann.bbox.w, ann.bbox.h],
                area: ann.bbox.area(),
                iscrowd: 0,
                keypoints: flat,
                num_keypoints: ann.visible_count(),
            });
        }
    }
    CocoDataset {
        images,
        annotations,
        categories: vec![shoot_category()],
    }
}

/// Labels applied to every record created by [`from_coco`].
#[derive(Debug, Clone)]
pub struct CocoImportOptions {
    pub domain: DomainTag,
    pub split: Split,
    pub provenance: Provenance,
}

/// Imports a COCO dataset. The result is not validated; run
/// [`validate_manifest`](super::validate_manifest) afterwards.
pub fn from_coco(coco: &CocoDataset, opts: &CocoImportOptions) -> Result<DatasetManifest, DatasetError> {
    let mut by_image: BTreeMap<u64, Vec<ShootAnnotation>> = BTreeMap::new();
    for a in &coco.annotations {
        if a.keypoints.len() % 3 != 0 || a.keypoints.len() > MAX_KEYPOINTS * 3 {
            return Err(DatasetError::Manifest(format!(
                "coco annotation {}: {} keypoint values is not a list of at most {MAX_KEYPOINTS} triples",
                a.id,
                a.keypoints.len()
            )));
        }
        let keypoints = a
            .keypoints
            .chunks_exact(3)
            .enumerate()
            .filter_map(|(i, t)| {
                let (x, y, v) = (t[0], t[1], t[2]);
                if v <= 0.0 && x == 0.0 && y == 0.0 {
                    None
                } else {
                    Some(Keypoint::new(i as u8 + 1, x, y, v > 0.0))
                }
            })
            .collect();
        let [x, y, w, h] = a.bbox;
        by_image
            .entry(a.image_id)
            .or_default()
            .push(ShootAnnotation::new(BBox::new(x, y, w, h), keypoints));
    }
    let mut records = Vec::with_capacity(coco.images.len());
    for img in &coco.images {
        let id = img.record_id.clone().unwrap_or_else(|| file_stem(&img.file_name));
        records.push(ImageRecord {
            id,
            path: img.file_name.clone(),
            width: img.width,
            height: img.height,
            domain: opts.domain.name.clone(),
            split: opts.split,
            provenance: opts.provenance,
            annotations: by_image.remove(&img.id).unwrap_or_default(),
        });
    }
    if let Some((orphan, _)) = by_image.into_iter().next() {
        return Err(DatasetError::Manifest(format!(
            "coco annotations reference unknown image id {orphan}"
        )));
    }
    Ok(DatasetManifest::new(vec![opts.domain.clone()], records))
}

fn file_stem(name: &str) -> String {
    std::path::Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> DatasetManifest {
        DatasetManifest::new(
            vec![DomainTag::new("night", "night")],
            vec![ImageRecord {
                id: "img-a".into(),
                path: "a.png".into(),
                width: 512,
                height: 512,
                domain: "night".into(),
                split: Split::Train,
                provenance: Provenance::Real,
                annotations: vec![ShootAnnotation::new(
                    BBox::new(5.0, 6.0, 30.0, 90.0),
                    vec![
                        Keypoint::new(1, 10.0, 10.0, true),
                        Keypoint::new(3, 12.0, 40.0, false),
                        Keypoint::new(4, 14.0, 80.0, true),
                    ],
                )],
            }],
        )
    }

    #[test]
    fn export_layout() {
        let coco = to_coco(&manifest());
        assert_eq!(coco.categories[0].name, "Shoot");
        assert_eq!(coco.categories[0].keypoints[9], "node_10");
        let a = &coco.annotations[0];
        assert_eq!(a.keypoints.len(), 30);
        assert_eq!(&a.keypoints[0..3], &[10.0, 10.0, 2.0]);
        assert_eq!(&a.keypoints[3..6], &[0.0, 0.0, 0.0]);
        assert_eq!(&a.keypoints[6..9], &[12.0, 40.0, 0.0]);
        assert_eq!(a.num_keypoints, 2);
        assert_eq!(a.area, 2700.0);
    }

    #[test]
    fn import_restores_manifest() {
        let m = manifest();
        let opts = CocoImportOptions {
            domain: DomainTag::new("night", "night"),
            split: Split::Train,
            provenance: Provenance::Real,
        };
        let back = from_coco(&to_coco(&m), &opts).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn orphan_annotation_rejected() {
        let mut coco = to_coco(&manifest());
        coco.annotations[0].image_id = 99;
        let opts = CocoImportOptions {
            domain: DomainTag::new("night", "night"),
            split: Split::Train,
            provenance: Provenance::Real,
        };
        assert!(from_coco(&coco, &opts).is_err());
    }
}
