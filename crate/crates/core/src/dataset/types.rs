use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Current manifest schema version.
pub const SCHEMA_VERSION: u32 = 1;
/// The only object class carried by the dataset.
pub const SHOOT_CLASS: &str = "Shoot";
/// Nodes are labelled `node_1` .. `node_10`.
pub const MAX_KEYPOINTS: usize = 10;

/// A visual domain such as `night` or `day`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainTag {
    pub name: String,
    /// Key into [`PromptConfig::per_domain`](super::PromptConfig).
    pub prompt_key: String,
}

impl DomainTag {
    pub fn new(name: impl Into<String>, prompt_key: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            prompt_key: prompt_key.into(),
        }
    }
}

/// Axis-aligned box in pixels, top-left origin. Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Checks the box against an image of `width` x `height` pixels.
    pub fn check_within(&self, width: u32, height: u32) -> Result<(), String> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite {
            return Err("bbox has non-finite coordinates".into());
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(format!("bbox size {}x{} is not positive", self.w, self.h));
        }
        if self.x < 0.0 || self.y < 0.0 {
            return Err(format!("bbox origin ({}, {}) is negative", self.x, self.y));
        }
        if self.right() > f64::from(width) {
            return Err(format!("bbox x+w = {} exceeds image width {}", self.right(), width));
        }
        if self.bottom() > f64::from(height) {
            return Err(format!("bbox y+h = {} exceeds image height {}", self.bottom(), height));
        }
        Ok(())
    }

    /// True if `(x, y)` lies inside the box grown by `margin` on every side.
    pub fn contains_with_margin(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.x - margin && x <= self.right() + margin && y >= self.y - margin && y <= self.bottom() + margin
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, w, h] = <[f64; 4]>::deserialize(d)?;
        Ok(BBox { x, y, w, h })
    }
}

/// One node of a shoot. Serialized as `[index, x, y, visible]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Node ordinal, 1-based, counted from the top of the shoot.
    pub index: u8,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub const fn new(index: u8, x: f64, y: f64, visible: bool) -> Self {
        Self { index, x, y, visible }
    }
}

impl Serialize for Keypoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.index, self.x, self.y, self.visible).serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VisibleFlag {
    Bool(bool),
    Number(f64),
}

impl<'de> Deserialize<'de> for Keypoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (index, x, y, flag) = <(f64, f64, f64, VisibleFlag)>::deserialize(d)?;
        if index.fract() != 0.0 || !(0.0..=255.0).contains(&index) {
            return Err(D::Error::custom(format!(
                "keypoint index {index} is not a small integer"
            )));
        }
        let visible = match flag {
            VisibleFlag::Bool(b) => b,
            VisibleFlag::Number(v) => v > 0.0,
        };
        Ok(Keypoint {
            index: index as u8,
            x,
            y,
            visible,
        })
    }
}

/// A single `Shoot` instance: one box plus up to ten ordered nodes.
///
/// Nodes that were not annotated are simply absent; occluded nodes may
/// instead be present with `visible == false`. Both encodings are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootAnnotation {
    pub bbox: BBox,
    #[serde(default)]
    pub keypoints: Vec<Keypoint>,
}

impl ShootAnnotation {
    pub fn new(bbox: BBox, keypoints: Vec<Keypoint>) -> Self {
        Self { bbox, keypoints }
    }

    pub fn class_name(&self) -> &'static str {
        SHOOT_CLASS
    }

    pub fn keypoint(&self, index: u8) -> Option<&Keypoint> {
        self.keypoints.iter().find(|k| k.index == index)
    }

    pub fn visible_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.visible).count()
    }

    /// Checks the annotation invariants against its image size.
    ///
    /// `order_tolerance` is the slack (in pixels) allowed when a lower node
    /// sits above its predecessor; with 0 every visible node must be strictly
    /// below the previous one.
    pub fn check(&self, width: u32, height: u32, margin: f64, order_tolerance: f64) -> Result<(), String> {
        self.bbox.check_within(width, height)?;
        if self.keypoints.len() > MAX_KEYPOINTS {
            return Err(format!(
                "{} keypoints, at most {MAX_KEYPOINTS} allowed",
                self.keypoints.len()
            ));
        }
        let mut prev_index = 0u8;
        let mut prev_visible_y: Option<(u8, f64)> = None;
        for kp in &self.keypoints {
            if kp.index == 0 || usize::from(kp.index) > MAX_KEYPOINTS {
                return Err(format!("keypoint index {} outside 1..={MAX_KEYPOINTS}", kp.index));
            }
            if kp.index <= prev_index {
                return Err(format!("keypoint indices not strictly increasing at node {}", kp.index));
            }
            prev_index = kp.index;
            if !kp.visible {
                continue;
            }
            if !(kp.x.is_finite() && kp.y.is_finite()) {
                return Err(format!("node {} has non-finite coordinates", kp.index));
            }
            if !self.bbox.contains_with_margin(kp.x, kp.y, margin) {
                return Err(format!(
                    "node {} at ({}, {}) lies outside its bbox (margin {margin})",
                    kp.index, kp.x, kp.y
                ));
            }
            if let Some((pi, py)) = prev_visible_y {
                if kp.y + order_tolerance <= py {
                    return Err(format!(
                        "node {} (y={}) is not below node {pi} (y={py})",
                        kp.index, kp.y
                    ));
                }
            }
            prev_visible_y = Some((kp.index, kp.y));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Transferred,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    /// Image file, relative to the manifest's directory unless absolute.
    pub path: String,
    pub width: u32,
    pub height: u32,
    /// Name of an entry in the manifest's domain table.
    pub domain: String,
    pub split: Split,
    pub provenance: Provenance,
    #[serde(default)]
    pub annotations: Vec<ShootAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub domains: Vec<DomainTag>,
    #[serde(default)]
    pub records: Vec<ImageRecord>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            domains: Vec::new(),
            records: Vec::new(),
        }
    }
}

impl DatasetManifest {
    pub fn new(domains: Vec<DomainTag>, records: Vec<ImageRecord>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            domains,
            records,
        }
    }

    pub fn domain(&self, name: &str) -> Option<&DomainTag> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn record(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records of one domain, in manifest order.
    pub fn records_in_domain<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = &'a ImageRecord> + 'a {
        self.records.iter().filter(move |r| r.domain == domain)
    }

    /// A new manifest sharing this domain table but holding only the
    /// records accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&ImageRecord) -> bool) -> DatasetManifest {
        DatasetManifest {
            schema_version: self.schema_version,
            domains: self.domains.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shoot() -> ShootAnnotation {
        ShootAnnotation::new(
            BBox::new(100.0, 50.0, 40.0, 200.0),
            vec![
                Keypoint::new(1, 120.0, 60.0, true),
                Keypoint::new(2, 118.0, 120.0, true),
                Keypoint::new(3, 121.0, 190.0, false),
            ],
        )
    }

    #[test]
    fn keypoint_json_accepts_numeric_visibility() {
        let kp: Keypoint = serde_json::from_str("[3, 1.5, 2.0, 2]").unwrap();
        assert_eq!(kp, Keypoint::new(3, 1.5, 2.0, true));
        let kp: Keypoint = serde_json::from_str("[3, 1.5, 2.0, 0]").unwrap();
        assert!(!kp.visible);
        assert_eq!(serde_json::to_string(&kp).unwrap(), "[3,1.5,2.0,false]");
    }

    #[test]
    fn bbox_serializes_as_array() {
        let b = BBox::new(1.0, 2.0, 3.0, 4.5);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.0,4.5]");
    }

    #[test]
    fn valid_annotation_passes() {
        shoot().check(512, 512, 5.0, 0.0).unwrap();
    }

    #[test]
    fn node_order_is_strict_by_default() {
        let mut a = shoot();
        a.keypoints[1].y = 60.0;
        assert!(a.check(512, 512, 5.0, 0.0).is_err());
        // with one pixel of slack equal heights pass
        a.check(512, 512, 5.0, 1.0).unwrap();
    }

    #[test]
    fn invisible_nodes_skip_geometry_checks() {
        let mut a = shoot();
        a.keypoints[2] = Keypoint::new(3, 0.0, 0.0, false);
        a.check(512, 512, 5.0, 0.0).unwrap();
    }

    #[test]
    fn keypoint_margin() {
        let mut a = shoot();
        a.keypoints[0].x = 95.0;
        a.check(512, 512, 5.0, 0.0).unwrap();
        a.keypoints[0].x = 94.9;
        assert!(a.check(512, 512, 5.0, 0.0).is_err());
    }

    #[test]
    fn duplicate_index_rejected() {
        let mut a = shoot();
        a.keypoints[1].index = 1;
        let err = a.check(512, 512, 5.0, 0.0).unwrap_err();
        assert!(err.contains("strictly increasing"), "{err}");
    }

    #[test]
    fn bbox_must_fit_image() {
        let b = BBox::new(500.0, 0.0, 100.0, 10.0);
        let err = b.check_within(512, 512).unwrap_err();
        assert!(err.contains("600"), "{err}");
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).check_within(512, 512).is_err());
    }
}
