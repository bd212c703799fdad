//! Synthetic predictions with controlled errors: label swaps, boundary
//! erosion and dropped segments, all driven by a seeded generator.
//!
//! Every image draws from its own ChaCha stream (the image id), so output
//! does not depend on thread count or image order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataio::Category;
use crate::instance::{InstanceMask, InstanceSet};
use crate::panoptic::{PanopticImage, PanopticMap, PanopticSet, Segment, VOID};
use crate::semantic::{ClassRaster, SemanticImage, SemanticSet, IGNORE};
use crate::{CategoryId, MetricError, RleMask, SimilarityMatrix};

/// Score given to every synthesized prediction.
pub const SYNTH_SCORE: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub enum SwapTarget {
    /// Most similar other class; lowest index on ties.
    Nearest,
    /// Any other class, uniformly.
    Uniform,
    /// Category id to category id; unmapped classes keep their label.
    Fixed(BTreeMap<CategoryId, CategoryId>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbConfig {
    pub swap_prob: f64,
    pub swap_target: SwapTarget,
    /// Boundary erosion in pixels (4-neighbourhood).
    pub erode_px: u32,
    pub drop_prob: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            swap_prob: 0.0,
            swap_target: SwapTarget::Nearest,
            erode_px: 0,
            drop_prob: 0.0,
            seed: 0,
        }
    }
}

struct Plan<'a> {
    cfg: &'a PerturbConfig,
    n: usize,
    nearest: Vec<usize>,
    fixed: Vec<usize>,
}

impl<'a> Plan<'a> {
    fn new(cfg: &'a PerturbConfig, categories: &[Category], s: Option<&SimilarityMatrix>) -> Result<Self, MetricError> {
        for (name, p) in [("swap_prob", cfg.swap_prob), ("drop_prob", cfg.drop_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(MetricError::Invalid(format!("{name} = {p} outside [0, 1]")));
            }
        }
        let n = categories.len();
        if let Some(s) = s {
            if s.len() != n {
                return Err(MetricError::DimensionMismatch {
                    expected: n,
                    found: s.len(),
                });
            }
        }
        let sim = |i: usize, j: usize| s.map_or(0.0, |s| s.get(i, j));
        let nearest = (0..n)
            .map(|i| {
                let mut best: Option<usize> = None;
                for j in (0..n).filter(|&j| j != i) {
                    if best.map_or(true, |b| sim(i, j) > sim(i, b)) {
                        best = Some(j);
                    }
                }
                best.unwrap_or(i)
            })
            .collect();
        let index: BTreeMap<CategoryId, usize> = categories.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        let mut fixed: Vec<usize> = (0..n).collect();
        if let SwapTarget::Fixed(map) = &cfg.swap_target {
            for (from, to) in map {
                let (Some(&a), Some(&b)) = (index.get(from), index.get(to)) else {
                    return Err(MetricError::Invalid(format!("swap map {from} -> {to} names an unknown category")));
                };
                fixed[a] = b;
            }
        }
        Ok(Plan { cfg, n, nearest, fixed })
    }

    fn rng(&self, image_id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(image_id);
        rng
    }

    /// `None` when the unit is dropped, else its (possibly swapped) class.
    /// Draws the same number of values whatever the outcome, except for the
    /// uniform target choice.
    fn decide(&self, class: usize, rng: &mut ChaCha8Rng) -> Option<usize> {
        let drop = rng.gen::<f64>() < self.cfg.drop_prob;
        let swap = rng.gen::<f64>() < self.cfg.swap_prob;
        if drop {
            return None;
        }
        if !swap {
            return Some(class);
        }
        Some(match &self.cfg.swap_target {
            SwapTarget::Nearest => self.nearest[class],
            SwapTarget::Fixed(_) => self.fixed[class],
            SwapTarget::Uniform => {
                if self.n < 2 {
                    class
                } else {
                    let k = rng.gen_range(0..self.n - 1);
                    if k >= class {
                        k + 1
                    } else {
                        k
                    }
                }
            }
        })
    }
}

/// Erodes a row-major mask `px` times: a pixel survives a step only when all
/// four neighbours inside the image are set.
pub fn erode(mask: &mut [bool], width: usize, height: usize, px: u32) {
    let mut next = mask.to_vec();
    for _ in 0..px {
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                next[i] = mask[i]
                    && (x == 0 || mask[i - 1])
                    && (x + 1 == width || mask[i + 1])
                    && (y == 0 || mask[i - width])
                    && (y + 1 == height || mask[i + width]);
            }
        }
        mask.copy_from_slice(&next);
    }
}

fn perturb_semantic_image(plan: &Plan, img: &SemanticImage) -> SemanticImage {
    let gt = &img.gt;
    let (w, h) = (gt.width() as usize, gt.height() as usize);
    let mut rng = plan.rng(img.id);
    let mut classes: Vec<u32> = gt.ids().iter().copied().filter(|&c| c != IGNORE).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut pred = vec![IGNORE; w * h];
    for c in classes {
        let Some(label) = plan.decide(c as usize, &mut rng) else {
            continue;
        };
        let mut region: Vec<bool> = gt.ids().iter().map(|&v| v == c).collect();
        erode(&mut region, w, h, plan.cfg.erode_px);
        for (p, keep) in pred.iter_mut().zip(region) {
            if keep {
                *p = label as u32;
            }
        }
    }
    SemanticImage {
        id: img.id,
        gt: gt.clone(),
        pred: Some(ClassRaster::new(gt.width(), gt.height(), pred).expect("same shape")),
    }
}

/// Fills in `pred` for every image from its ground truth.
pub fn synth_semantic(
    set: &SemanticSet,
    cfg: &PerturbConfig,
    s: Option<&SimilarityMatrix>,
) -> Result<SemanticSet, MetricError> {
    let plan = Plan::new(cfg, &set.categories, s)?;
    Ok(SemanticSet {
        categories: set.categories.clone(),
        images: set.images.par_iter().map(|img| perturb_semantic_image(&plan, img)).collect(),
    })
}

/// Replaces the predictions with perturbed copies of the ground truth.
pub fn synth_instance(
    set: &InstanceSet,
    cfg: &PerturbConfig,
    s: Option<&SimilarityMatrix>,
) -> Result<InstanceSet, MetricError> {
    let plan = Plan::new(cfg, &set.categories, s)?;
    let mut by_image: Vec<Vec<&InstanceMask>> = vec![Vec::new(); set.images.len()];
    for g in &set.gts {
        by_image[g.image].push(g);
    }
    let preds: Vec<Vec<InstanceMask>> = by_image
        .par_iter()
        .enumerate()
        .map(|(i, gts)| {
            let mut rng = plan.rng(set.images[i].id);
            let mut out = Vec::new();
            for g in gts {
                let Some(class) = plan.decide(g.class, &mut rng) else {
                    continue;
                };
                let mask = if plan.cfg.erode_px == 0 {
                    g.mask.clone()
                } else {
                    let (h, w) = g.mask.size();
                    let mut bits = g.mask.decode_row_major();
                    erode(&mut bits, w as usize, h as usize, plan.cfg.erode_px);
                    RleMask::encode_row_major(&bits, h, w).expect("same shape")
                };
                out.push(InstanceMask {
                    image: i,
                    class,
                    score: Some(SYNTH_SCORE),
                    mask,
                    bbox: None,
                });
            }
            out
        })
        .collect();
    Ok(InstanceSet {
        categories: set.categories.clone(),
        images: set.images.clone(),
        gts: set.gts.clone(),
        preds: preds.into_iter().flatten().collect(),
    })
}

fn perturb_panoptic_image(plan: &Plan, categories: &[Category], img: &PanopticImage) -> PanopticImage {
    let gt = &img.gt;
    let (w, h) = (gt.width() as usize, gt.height() as usize);
    let mut rng = plan.rng(img.id);
    let mut ids = vec![VOID; w * h];
    let mut segments = Vec::new();
    for seg in gt.segments() {
        let Some(class) = plan.decide(seg.class, &mut rng) else {
            continue;
        };
        let mut region: Vec<bool> = gt.ids().iter().map(|&v| v == seg.id).collect();
        erode(&mut region, w, h, plan.cfg.erode_px);
        let mut any = false;
        for (p, keep) in ids.iter_mut().zip(region) {
            if keep {
                *p = seg.id;
                any = true;
            }
        }
        if any {
            segments.push(Segment {
                id: seg.id,
                class,
                isthing: categories[class].is_thing(),
            });
        }
    }
    PanopticImage {
        id: img.id,
        gt: gt.clone(),
        pred: Some(PanopticMap::new(gt.width(), gt.height(), ids, segments).expect("segments come from the raster")),
    }
}

pub fn synth_panoptic(
    set: &PanopticSet,
    cfg: &PerturbConfig,
    s: Option<&SimilarityMatrix>,
) -> Result<PanopticSet, MetricError> {
    let plan = Plan::new(cfg, &set.categories, s)?;
    Ok(PanopticSet {
        categories: set.categories.clone(),
        images: set
            .images
            .par_iter()
            .map(|img| perturb_panoptic_image(&plan, &set.categories, img))
            .collect(),
    })
}
