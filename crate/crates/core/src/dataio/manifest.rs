//! Dataset manifests: one JSON document listing categories, images and
//! either raster paths (semantic, panoptic) or RLE annotations (instance).
//!
//! ```json
//! {"task": "instance",
//!  "categories": [{"id": 1, "name": "dog", "wnid": "n02084071"}],
//!  "images": [{"id": 7, "width": 640, "height": 480}],
//!  "annotations": [{"image_id": 7, "category_id": 1, "score": 0.9,
//!                   "segmentation": {"size": [480, 640], "counts": "..."}}]}
//! ```
//!
//! Loading validates references and sizes, then sorts images and
//! annotations into a canonical order so results never depend on the order
//! of the document.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::coco::{decode_counts, encode_counts};
use super::{DataError, RleMask, SegbRaster};
use crate::instance::{ImageInfo, InstanceMask, InstanceSet};
use crate::panoptic::{PanopticImage, PanopticMap, PanopticSet, Segment, VOID};
use crate::semantic::{ClassRaster, SemanticImage, SemanticSet, IGNORE};
use crate::similarity::LabelSpec;
use crate::{CategoryId, Error};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Semantic,
    Instance,
    Panoptic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wnid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isthing: Option<bool>,
}

impl Category {
    pub fn new(id: CategoryId, name: &str) -> Self {
        Category {
            id,
            name: name.to_string(),
            wnid: None,
            alias: None,
            isthing: None,
        }
    }

    /// Categories without the flag count as stuff.
    pub fn is_thing(&self) -> bool {
        self.isthing.unwrap_or(false)
    }

    pub fn label_spec(&self) -> LabelSpec {
        LabelSpec {
            name: self.name.clone(),
            id: self.id,
            wnid: self.wnid.clone(),
            alias: self.alias.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    Runs(Vec<u32>),
    Compressed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Counts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: u64,
    pub category_id: CategoryId,
    /// Present exactly on predictions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub segmentation: Segmentation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Gt,
    Pred,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub image_id: u64,
    pub which: Which,
    pub id: u32,
    pub category_id: CategoryId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ignore_id: Option<u32>,
    pub categories: Vec<Category>,
    pub images: Vec<ImageEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<Annotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments_info: Vec<SegmentInfo>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            DataError::schema(path, e.into_inner().to_string())
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

/// A validated manifest in canonical order, with decoded masks.
#[derive(Clone, Debug)]
pub struct Dataset {
    manifest: Manifest,
    base_dir: PathBuf,
    /// Parallel to `manifest.annotations`.
    masks: Vec<RleMask>,
}

pub fn load_manifest(path: &Path) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    Dataset::from_manifest(Manifest::from_json(&text).map_err(|e| e.in_file(path))?, base)
        .map_err(|e| e.in_file(path))
}

fn decode_segmentation(seg: &Segmentation) -> Result<RleMask, DataError> {
    let [h, w] = seg.size;
    match &seg.counts {
        Counts::Runs(runs) => RleMask::canonicalize(h, w, runs),
        Counts::Compressed(text) => RleMask::canonicalize(h, w, &decode_counts(text)?),
    }
}

fn cmp_annotations(a: (&Annotation, &RleMask), b: (&Annotation, &RleMask)) -> Ordering {
    let score = |x: &Annotation| x.score.map_or(f64::INFINITY, |s| s);
    a.0.image_id
        .cmp(&b.0.image_id)
        .then(a.0.score.is_some().cmp(&b.0.score.is_some()))
        .then(score(b.0).total_cmp(&score(a.0)))
        .then(a.0.category_id.cmp(&b.0.category_id))
        .then(a.1.counts().cmp(b.1.counts()))
        .then_with(|| {
            let bits = |x: &Annotation| x.bbox.map(|b| b.map(f64::to_bits));
            bits(a.0).cmp(&bits(b.0))
        })
}

impl Dataset {
    /// Validates `manifest` and sorts it canonically. Raster paths are
    /// resolved against `base_dir`.
    pub fn from_manifest(mut manifest: Manifest, base_dir: PathBuf) -> Result<Self, DataError> {
        let mut cat_ids = HashSet::new();
        for (k, c) in manifest.categories.iter().enumerate() {
            if !cat_ids.insert(c.id) {
                return Err(DataError::schema(format!("categories[{k}].id"), format!("duplicate id {}", c.id)));
            }
            if Some(c.id) == manifest.ignore_id {
                return Err(DataError::schema(
                    format!("categories[{k}].id"),
                    format!("id {} is the ignore id", c.id),
                ));
            }
        }
        let mut images: HashMap<u64, (u32, u32)> = HashMap::new();
        for (k, im) in manifest.images.iter().enumerate() {
            if images.insert(im.id, (im.height, im.width)).is_some() {
                return Err(DataError::schema(format!("images[{k}].id"), format!("duplicate id {}", im.id)));
            }
            if manifest.task != Task::Instance && im.gt.is_none() {
                return Err(DataError::schema(format!("images[{k}].gt"), "missing raster path"));
            }
        }
        let dangling = |what: &str, k: usize, field: &str, v: String| {
            DataError::DanglingReference(format!("{what}[{k}].{field} = {v} names no such entry"))
        };
        let mut masks = Vec::with_capacity(manifest.annotations.len());
        for (k, a) in manifest.annotations.iter().enumerate() {
            let dims = images
                .get(&a.image_id)
                .ok_or_else(|| dangling("annotations", k, "image_id", a.image_id.to_string()))?;
            if !cat_ids.contains(&a.category_id) {
                return Err(dangling("annotations", k, "category_id", a.category_id.to_string()));
            }
            if a.segmentation.size != [dims.0, dims.1] {
                return Err(DataError::schema(
                    format!("annotations[{k}].segmentation.size"),
                    format!("{:?} differs from the image size [{}, {}]", a.segmentation.size, dims.0, dims.1),
                ));
            }
            if let Some(s) = a.score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(DataError::schema(format!("annotations[{k}].score"), format!("{s} outside [0, 1]")));
                }
            }
            let mask = decode_segmentation(&a.segmentation).map_err(|e| {
                DataError::schema(format!("annotations[{k}].segmentation.counts"), e.to_string())
            })?;
            if let Some(area) = a.area {
                if area != mask.area() {
                    return Err(DataError::schema(
                        format!("annotations[{k}].area"),
                        format!("declared {area}, mask has {}", mask.area()),
                    ));
                }
            }
            masks.push(mask);
        }
        let mut seen_segments = HashSet::new();
        for (k, s) in manifest.segments_info.iter().enumerate() {
            if !images.contains_key(&s.image_id) {
                return Err(dangling("segments_info", k, "image_id", s.image_id.to_string()));
            }
            if !cat_ids.contains(&s.category_id) {
                return Err(dangling("segments_info", k, "category_id", s.category_id.to_string()));
            }
            if s.id == VOID {
                return Err(DataError::schema(format!("segments_info[{k}].id"), "0 is reserved for void"));
            }
            if !seen_segments.insert((s.image_id, s.which, s.id)) {
                return Err(DataError::schema(format!("segments_info[{k}].id"), "duplicate segment"));
            }
        }

        manifest.images.sort_by_key(|im| im.id);
        let mut pairs: Vec<(Annotation, RleMask)> = std::mem::take(&mut manifest.annotations)
            .into_iter()
            .zip(masks)
            .collect();
        pairs.sort_by(|a, b| cmp_annotations((&a.0, &a.1), (&b.0, &b.1)));
        let (annotations, masks): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        manifest.annotations = annotations;
        manifest
            .segments_info
            .sort_by_key(|s| (s.image_id, s.which, s.id));
        Ok(Dataset {
            manifest,
            base_dir,
            masks,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn task(&self) -> Task {
        self.manifest.task
    }

    pub fn categories(&self) -> &[Category] {
        &self.manifest.categories
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    fn hasher(&self) -> Sha256 {
        let mut h = Sha256::new();
        h.update(self.manifest.to_json().as_bytes());
        h
    }

    fn class_index(&self) -> HashMap<CategoryId, usize> {
        self.manifest
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id, i))
            .collect()
    }

    fn read_raster(&self, k: usize, field: &str, rel: &str, hasher: &mut Sha256) -> Result<SegbRaster, DataError> {
        let path = self.base_dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| DataError::io(&path, e))?;
        hasher.update(Sha256::digest(&bytes));
        let r = SegbRaster::read(&bytes).map_err(|e| e.in_file(&path))?;
        let im = &self.manifest.images[k];
        if (r.width(), r.height()) != (im.width, im.height) {
            return Err(DataError::schema(
                format!("images[{k}].{field}"),
                format!(
                    "raster is {}x{}, image is {}x{}",
                    r.width(),
                    r.height(),
                    im.width,
                    im.height
                ),
            ));
        }
        Ok(r)
    }

    /// Reads the class rasters. Returns the set and a digest over the
    /// canonical manifest and every raster file.
    pub fn semantic(&self) -> Result<(SemanticSet, String), Error> {
        let index = self.class_index();
        let mut hasher = self.hasher();
        let mut images = Vec::with_capacity(self.manifest.images.len());
        let to_classes = |r: SegbRaster, rel: &str| -> Result<ClassRaster, Error> {
            let sentinel = r.sentinel();
            let (w, h) = (r.width(), r.height());
            let ids = r
                .into_ids()
                .into_iter()
                .map(|v| {
                    if v == sentinel || Some(v) == self.manifest.ignore_id {
                        Ok(IGNORE)
                    } else {
                        index.get(&v).map(|&i| i as u32).ok_or_else(|| {
                            DataError::DanglingReference(format!("{rel}: pixel value {v} is not a category id"))
                        })
                    }
                })
                .collect::<Result<Vec<u32>, DataError>>()?;
            Ok(ClassRaster::new(w, h, ids)?)
        };
        for (k, im) in self.manifest.images.iter().enumerate() {
            let gt_rel = im.gt.as_deref().expect("validated");
            let gt = to_classes(self.read_raster(k, "gt", gt_rel, &mut hasher)?, gt_rel)?;
            let pred = match &im.pred {
                Some(rel) => Some(to_classes(self.read_raster(k, "pred", rel, &mut hasher)?, rel)?),
                None => None,
            };
            images.push(SemanticImage { id: im.id, gt, pred });
        }
        let set = SemanticSet {
            categories: self.manifest.categories.clone(),
            images,
        };
        Ok((set, hex::encode(hasher.finalize())))
    }

    /// Ground truth and predictions with decoded masks.
    pub fn instance(&self) -> Result<(InstanceSet, String), Error> {
        let index = self.class_index();
        let image_pos: HashMap<u64, usize> = self
            .manifest
            .images
            .iter()
            .enumerate()
            .map(|(i, im)| (im.id, i))
            .collect();
        let mut set = InstanceSet {
            categories: self.manifest.categories.clone(),
            images: self
                .manifest
                .images
                .iter()
                .map(|im| ImageInfo {
                    id: im.id,
                    width: im.width,
                    height: im.height,
                })
                .collect(),
            gts: Vec::new(),
            preds: Vec::new(),
        };
        for (a, mask) in self.manifest.annotations.iter().zip(&self.masks) {
            let m = InstanceMask {
                image: image_pos[&a.image_id],
                class: index[&a.category_id],
                score: a.score,
                mask: mask.clone(),
                bbox: a.bbox,
            };
            if m.score.is_some() {
                set.preds.push(m);
            } else {
                set.gts.push(m);
            }
        }
        Ok((set, hex::encode(self.hasher().finalize())))
    }

    /// Reads the segment rasters and joins them with `segments_info`.
    pub fn panoptic(&self) -> Result<(PanopticSet, String), Error> {
        let index = self.class_index();
        let mut hasher = self.hasher();
        let mut images = Vec::with_capacity(self.manifest.images.len());
        for (k, im) in self.manifest.images.iter().enumerate() {
            let segments = |which: Which| -> Vec<Segment> {
                self.manifest
                    .segments_info
                    .iter()
                    .filter(|s| s.image_id == im.id && s.which == which)
                    .map(|s| {
                        let class = index[&s.category_id];
                        Segment {
                            id: s.id,
                            class,
                            isthing: self.manifest.categories[class].is_thing(),
                        }
                    })
                    .collect()
            };
            let mut load = |field: &str, rel: &str, which: Which| -> Result<PanopticMap, Error> {
                let r = self.read_raster(k, field, rel, &mut hasher)?;
                let sentinel = r.sentinel();
                let (w, h) = (r.width(), r.height());
                let ids = r
                    .into_ids()
                    .into_iter()
                    .map(|v| if v == sentinel { VOID } else { v })
                    .collect();
                PanopticMap::new(w, h, ids, segments(which))
                    .map_err(|e| DataError::schema(format!("images[{k}].{field}"), e.to_string()).into())
            };
            let gt = load("gt", im.gt.as_deref().expect("validated"), Which::Gt)?;
            let pred = match &im.pred {
                Some(rel) => Some(load("pred", rel, Which::Pred)?),
                None => None,
            };
            images.push(PanopticImage { id: im.id, gt, pred });
        }
        let set = PanopticSet {
            categories: self.manifest.categories.clone(),
            images,
        };
        Ok((set, hex::encode(hasher.finalize())))
    }
}

/// A file to be written next to an exported manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportFile {
    /// Path relative to the manifest directory.
    pub name: String,
    pub bytes: Vec<u8>,
}

fn segb_bytes(width: u32, height: u32, ids: &[u32], sentinel_in: u32) -> Vec<u8> {
    let wide = ids.iter().any(|&v| v != sentinel_in && v >= u16::MAX as u32);
    let sentinel = if wide { u32::MAX } else { u16::MAX as u32 };
    let out: Vec<u32> = ids
        .iter()
        .map(|&v| if v == sentinel_in { sentinel } else { v })
        .collect();
    SegbRaster::new(width, height, wide, out)
        .expect("raster dimensions are consistent")
        .write()
}

pub fn export_semantic(set: &SemanticSet) -> (Manifest, Vec<ExportFile>) {
    let mut files = Vec::new();
    let mut images = Vec::new();
    let raster = |r: &ClassRaster| -> Vec<u32> {
        r.ids()
            .iter()
            .map(|&c| if c == IGNORE { IGNORE } else { set.categories[c as usize].id })
            .collect()
    };
    for im in &set.images {
        let gt_name = format!("gt/{}.segb", im.id);
        files.push(ExportFile {
            name: gt_name.clone(),
            bytes: segb_bytes(im.gt.width(), im.gt.height(), &raster(&im.gt), IGNORE),
        });
        let pred = im.pred.as_ref().map(|p| {
            let name = format!("pred/{}.segb", im.id);
            files.push(ExportFile {
                name: name.clone(),
                bytes: segb_bytes(p.width(), p.height(), &raster(p), IGNORE),
            });
            name
        });
        images.push(ImageEntry {
            id: im.id,
            width: im.gt.width(),
            height: im.gt.height(),
            gt: Some(gt_name),
            pred,
        });
    }
    let manifest = Manifest {
        task: Task::Semantic,
        ignore_id: None,
        categories: set.categories.clone(),
        images,
        annotations: Vec::new(),
        segments_info: Vec::new(),
    };
    (manifest, files)
}

pub fn export_instance(set: &InstanceSet) -> Manifest {
    let annotation = |m: &InstanceMask| Annotation {
        image_id: set.images[m.image].id,
        category_id: set.categories[m.class].id,
        score: m.score,
        segmentation: Segmentation {
            size: [m.mask.height(), m.mask.width()],
            counts: Counts::Compressed(encode_counts(m.mask.counts())),
        },
        bbox: m.bbox,
        area: Some(m.mask.area()),
    };
    Manifest {
        task: Task::Instance,
        ignore_id: None,
        categories: set.categories.clone(),
        images: set
            .images
            .iter()
            .map(|im| ImageEntry {
                id: im.id,
                width: im.width,
                height: im.height,
                gt: None,
                pred: None,
            })
            .collect(),
        annotations: set.gts.iter().chain(&set.preds).map(annotation).collect(),
        segments_info: Vec::new(),
    }
}

pub fn export_panoptic(set: &PanopticSet) -> (Manifest, Vec<ExportFile>) {
    let mut files = Vec::new();
    let mut images = Vec::new();
    let mut segments_info = Vec::new();
    for im in &set.images {
        let mut emit = |map: &PanopticMap, which: Which, dir: &str| {
            let name = format!("{dir}/{}.segb", im.id);
            files.push(ExportFile {
                name: name.clone(),
                bytes: segb_bytes(map.width(), map.height(), map.ids(), u32::MAX),
            });
            for s in map.segments() {
                segments_info.push(SegmentInfo {
                    image_id: im.id,
                    which,
                    id: s.id,
                    category_id: set.categories[s.class].id,
                });
            }
            name
        };
        let gt = emit(&im.gt, Which::Gt, "gt");
        let pred = im.pred.as_ref().map(|p| emit(p, Which::Pred, "pred"));
        images.push(ImageEntry {
            id: im.id,
            width: im.gt.width(),
            height: im.gt.height(),
            gt: Some(gt),
            pred,
        });
    }
    let manifest = Manifest {
        task: Task::Panoptic,
        ignore_id: None,
        categories: set.categories.clone(),
        images,
        annotations: Vec::new(),
        segments_info,
    };
    (manifest, files)
}
