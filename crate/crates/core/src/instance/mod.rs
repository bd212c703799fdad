//! Mask / box IoU, greedy matching and COCO-style AP with similarity-weighted
//! true and false positives.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataio::report::{ClassRow, SimilarityRef};
use crate::dataio::{Category, DataError, MetricReport, RleMask};
use crate::{MetricError, Mode, SimilarityMatrix};

mod ap;

pub use ap::{average_precision, ApResult, Interpolation, PrCurve, Record};

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMask {
    /// Position of the image in [`InstanceSet::images`].
    pub image: usize,
    /// Position of the category in [`InstanceSet::categories`].
    pub class: usize,
    /// Present on predictions only.
    pub score: Option<f64>,
    pub mask: RleMask,
    /// `[x, y, w, h]`; derived from the mask when absent.
    pub bbox: Option<[f64; 4]>,
}

impl InstanceMask {
    pub fn area(&self) -> u64 {
        self.mask.area()
    }

    pub fn bounding_box(&self) -> [f64; 4] {
        self.bbox
            .or_else(|| self.mask.bbox())
            .unwrap_or([0.0; 4])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSet {
    pub categories: Vec<Category>,
    pub images: Vec<ImageInfo>,
    pub gts: Vec<InstanceMask>,
    pub preds: Vec<InstanceMask>,
}

pub fn mask_iou(a: &InstanceMask, b: &InstanceMask) -> Result<f64, MetricError> {
    a.mask
        .iou(&b.mask)
        .map_err(|e| MetricError::ShapeMismatch(e.to_string()))
}

/// IoU of two `[x, y, w, h]` rectangles.
pub fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = ((a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0])).max(0.0);
    let ih = ((a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchSet {
    /// `(gt, pred, iou)` in the order the predictions were processed.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
    pub delta: f64,
}

impl MatchSet {
    /// Every gt and prediction used at most once, every pair at or above
    /// the threshold.
    pub fn is_consistent(&self, n_gt: usize, n_pred: usize) -> bool {
        let mut g_seen = vec![false; n_gt];
        let mut p_seen = vec![false; n_pred];
        let mark = |seen: &mut Vec<bool>, i: usize| i < seen.len() && !std::mem::replace(&mut seen[i], true);
        self.pairs.iter().all(|&(g, p, iou)| {
            iou >= self.delta && mark(&mut g_seen, g) && mark(&mut p_seen, p)
        }) && self.unmatched_gt.iter().all(|&g| mark(&mut g_seen, g))
            && self.unmatched_pred.iter().all(|&p| mark(&mut p_seen, p))
            && g_seen.iter().all(|&b| b)
            && p_seen.iter().all(|&b| b)
    }
}

/// Greedy matching. Predictions are visited in `order`; each claims the
/// unassigned compatible ground truth with the largest IoU `>= delta`,
/// preferring non-ignored ground truth and the lowest index on ties.
/// `ious` is row-major `[pred][gt]`.
pub fn greedy_match(
    n_gt: usize,
    order: &[usize],
    ious: &[f64],
    delta: f64,
    compatible: impl Fn(usize, usize) -> bool,
    gt_ignore: &[bool],
) -> MatchSet {
    let mut taken = vec![false; n_gt];
    let mut pairs = Vec::new();
    let mut unmatched_pred = Vec::new();
    for &p in order {
        let row = &ious[p * n_gt..(p + 1) * n_gt];
        let mut best: Option<usize> = None;
        for g in 0..n_gt {
            if taken[g] || row[g] < delta || !compatible(g, p) {
                continue;
            }
            best = match best {
                None => Some(g),
                Some(b) => {
                    let better = match (gt_ignore[b], gt_ignore[g]) {
                        (true, false) => true,
                        (false, true) => false,
                        _ => row[g] > row[b],
                    };
                    Some(if better { g } else { b })
                }
            };
        }
        match best {
            Some(g) => {
                taken[g] = true;
                pairs.push((g, p, row[g]));
            }
            None => unmatched_pred.push(p),
        }
    }
    let unmatched_gt = (0..n_gt).filter(|&g| !taken[g]).collect();
    let ms = MatchSet {
        pairs,
        unmatched_gt,
        unmatched_pred,
        delta,
    };
    debug_assert!(ms.is_consistent(n_gt, ious.len().checked_div(n_gt).unwrap_or(order.len())));
    ms
}

/// Predictions by descending score; equal scores keep input order.
pub fn score_order(preds: &[InstanceMask]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| score(&preds[b]).total_cmp(&score(&preds[a])));
    order
}

fn score(m: &InstanceMask) -> f64 {
    m.score.unwrap_or(0.0)
}

fn mask_ious(gts: &[&InstanceMask], preds: &[&InstanceMask]) -> Result<Vec<f64>, MetricError> {
    let mut out = Vec::with_capacity(gts.len() * preds.len());
    for p in preds {
        for g in gts {
            out.push(mask_iou(g, p)?);
        }
    }
    Ok(out)
}

fn matcher(
    gts: &[InstanceMask],
    preds: &[InstanceMask],
    delta: f64,
    aware: bool,
) -> Result<MatchSet, MetricError> {
    let g: Vec<&InstanceMask> = gts.iter().collect();
    let p: Vec<&InstanceMask> = preds.iter().collect();
    let ious = if gts.is_empty() { Vec::new() } else { mask_ious(&g, &p)? };
    let ignore = vec![false; gts.len()];
    Ok(greedy_match(
        gts.len(),
        &score_order(preds),
        &ious,
        delta,
        |gi, pi| !aware || gts[gi].class == preds[pi].class,
        &ignore,
    ))
}

/// Matching with every label treated as one "object" class.
pub fn match_class_agnostic(
    gts: &[InstanceMask],
    preds: &[InstanceMask],
    delta: f64,
) -> Result<MatchSet, MetricError> {
    matcher(gts, preds, delta, false)
}

/// Matching restricted to identical categories.
pub fn match_class_aware(
    gts: &[InstanceMask],
    preds: &[InstanceMask],
    delta: f64,
) -> Result<MatchSet, MetricError> {
    matcher(gts, preds, delta, true)
}

/// PR records for one match set. A matched pair credits `S[ci][cj]` true
/// positive to the gt class and `1 - S[ci][cj]` false positive to the
/// predicted class; unmatched predictions are full false positives.
/// Zero-weight records are not emitted. `s = None` means the identity.
pub fn build_pr(
    matches: &MatchSet,
    gt_classes: &[usize],
    preds: &[(usize, f64)],
    s: Option<&SimilarityMatrix>,
) -> Vec<Record> {
    let sim = |i: usize, j: usize| match s {
        Some(s) => s.get(i, j),
        None => f64::from(u8::from(i == j)),
    };
    let mut out = Vec::new();
    for &(g, p, _) in &matches.pairs {
        let (ci, (cj, score)) = (gt_classes[g], preds[p]);
        let w = sim(ci, cj);
        if w > 0.0 {
            out.push(Record::new(ci, score, w, 0.0, p));
        }
        if ci != cj && w < 1.0 {
            out.push(Record::new(cj, score, 0.0, 1.0 - w, p));
        }
    }
    for &p in &matches.unmatched_pred {
        let (cj, score) = preds[p];
        out.push(Record::new(cj, score, 0.0, 1.0, p));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IouKernel {
    Mask,
    Box,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceParams {
    pub mode: Mode,
    pub kernel: IouKernel,
    pub interpolation: Interpolation,
    /// Pool every record into one "object" curve instead of per-class curves.
    pub single_curve: bool,
    pub max_dets: usize,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            mode: Mode::Vanilla,
            kernel: IouKernel::Mask,
            interpolation: Interpolation::Coco101,
            single_curve: false,
            max_dets: 100,
        }
    }
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

/// Area ranges: all, small (< 32²), medium (32² to 96²), large (> 96²).
const AREA_RANGES: [(f64, f64); 4] = [
    (0.0, f64::INFINITY),
    (0.0, 1024.0),
    (1024.0, 9216.0),
    (9216.0, f64::INFINITY),
];

fn in_range(area: f64, range: usize) -> bool {
    let (lo, hi) = AREA_RANGES[range];
    match range {
        1 => area < hi,
        3 => area > lo,
        _ => area >= lo && area <= hi,
    }
}

struct ImageEval {
    /// `[threshold][range]` record lists.
    records: Vec<Vec<Record>>,
    /// `[range][class]` gt counts.
    gt_counts: Vec<Vec<u64>>,
}

fn eval_image(
    image: usize,
    gts: &[&InstanceMask],
    preds: &[&InstanceMask],
    n_classes: usize,
    params: &InstanceParams,
    s: Option<&SimilarityMatrix>,
    deltas: &[f64],
) -> Result<ImageEval, MetricError> {
    let ious = match params.kernel {
        IouKernel::Mask => mask_ious(gts, preds)?,
        IouKernel::Box => {
            let mut v = Vec::with_capacity(gts.len() * preds.len());
            for p in preds {
                for g in gts {
                    v.push(box_iou(g.bounding_box(), p.bounding_box()));
                }
            }
            v
        }
    };
    let area = |m: &InstanceMask| match params.kernel {
        IouKernel::Mask => m.area() as f64,
        IouKernel::Box => {
            let b = m.bounding_box();
            b[2] * b[3]
        }
    };
    let gt_area: Vec<f64> = gts.iter().map(|m| area(m)).collect();
    let pred_area: Vec<f64> = preds.iter().map(|m| area(m)).collect();
    let order: Vec<usize> = (0..preds.len()).collect();
    let aware = params.mode == Mode::Vanilla;
    let gt_classes: Vec<usize> = gts.iter().map(|g| g.class).collect();
    let pred_info: Vec<(usize, f64)> = preds.iter().map(|p| (p.class, score(p))).collect();
    let sim = if params.mode == Mode::Open { s } else { None };

    let mut records = Vec::with_capacity(deltas.len() * AREA_RANGES.len());
    let mut gt_counts = vec![vec![0u64; n_classes]; AREA_RANGES.len()];
    for (r, counts) in gt_counts.iter_mut().enumerate() {
        for (g, m) in gts.iter().enumerate() {
            if in_range(gt_area[g], r) {
                counts[m.class] += 1;
            }
        }
    }
    for &delta in deltas {
        for r in 0..AREA_RANGES.len() {
            let ignore: Vec<bool> = gt_area.iter().map(|&a| !in_range(a, r)).collect();
            let ms = greedy_match(
                gts.len(),
                &order,
                &ious,
                delta,
                |g, p| !aware || gts[g].class == preds[p].class,
                &ignore,
            );
            // drop predictions matched to ignored gt, and unmatched ones
            // outside the area range
            let kept = MatchSet {
                pairs: ms.pairs.iter().copied().filter(|&(g, _, _)| !ignore[g]).collect(),
                unmatched_gt: Vec::new(),
                unmatched_pred: ms
                    .unmatched_pred
                    .iter()
                    .copied()
                    .filter(|&p| in_range(pred_area[p], r))
                    .collect(),
                delta,
            };
            let mut recs = build_pr(&kept, &gt_classes, &pred_info, sim);
            for rec in &mut recs {
                rec.image = image;
            }
            records.push(recs);
        }
    }
    Ok(ImageEval { records, gt_counts })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceResult {
    pub thresholds: Vec<f64>,
    /// Class names of the curves: the categories, or one "object" class.
    pub curve_classes: usize,
    /// `[threshold]` AP over all areas.
    pub per_threshold: Vec<ApResult>,
    /// Per-class AP averaged over thresholds.
    pub per_class: Vec<Option<f64>>,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (n, sum) = v.into_iter().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| sum / n as f64)
}

/// Mean over thresholds of a per-class AP, then over classes.
fn averaged(results: &[&ApResult]) -> (Vec<Option<f64>>, Option<f64>) {
    let classes = results.first().map_or(0, |r| r.per_class.len());
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let vals: Vec<f64> = results.iter().filter_map(|r| r.per_class[c]).collect();
            if vals.len() == results.len() {
                mean(vals)
            } else {
                None
            }
        })
        .collect();
    let overall = mean(per_class.iter().flatten().copied());
    (per_class, overall)
}

/// Evaluates a whole dataset. Open mode needs `s`, aligned to the category
/// order; the other modes use the identity.
pub fn evaluate_instance(
    set: &InstanceSet,
    s: Option<&SimilarityMatrix>,
    params: &InstanceParams,
) -> Result<InstanceResult, MetricError> {
    let n = set.categories.len();
    if params.mode == Mode::Open {
        let s = s.ok_or_else(|| MetricError::Invalid("open mode needs a similarity matrix".into()))?;
        if s.len() != n {
            return Err(MetricError::DimensionMismatch {
                expected: n,
                found: s.len(),
            });
        }
    }
    for m in set.gts.iter().chain(&set.preds) {
        if m.class >= n {
            return Err(MetricError::ClassOutOfRange {
                class: m.class as u32,
                classes: n,
            });
        }
        if m.image >= set.images.len() {
            return Err(MetricError::Invalid(format!("mask refers to image #{}", m.image)));
        }
    }
    let mut gts_by_image: Vec<Vec<&InstanceMask>> = vec![Vec::new(); set.images.len()];
    for g in &set.gts {
        gts_by_image[g.image].push(g);
    }
    let mut preds_by_image: Vec<Vec<&InstanceMask>> = vec![Vec::new(); set.images.len()];
    for p in &set.preds {
        preds_by_image[p.image].push(p);
    }
    for preds in &mut preds_by_image {
        // stable: equal scores keep input order
        preds.sort_by(|a, b| score(b).total_cmp(&score(a)));
        preds.truncate(params.max_dets);
    }
    let deltas = thresholds();
    let evals: Vec<ImageEval> = (0..set.images.len())
        .into_par_iter()
        .map(|i| eval_image(i, &gts_by_image[i], &preds_by_image[i], n, params, s, &deltas))
        .collect::<Result<_, _>>()?;

    let curve_classes = if params.single_curve { 1 } else { n };
    let nr = AREA_RANGES.len();
    let mut results: Vec<Vec<ApResult>> = Vec::with_capacity(deltas.len());
    for t in 0..deltas.len() {
        let mut row = Vec::with_capacity(nr);
        for r in 0..nr {
            let mut curve = PrCurve::new(curve_classes);
            for e in &evals {
                for (c, &k) in e.gt_counts[r].iter().enumerate() {
                    curve.add_gt(if params.single_curve { 0 } else { c }, k);
                }
                for rec in &e.records[t * nr + r] {
                    let mut rec = rec.clone();
                    if params.single_curve {
                        rec.class = 0;
                    }
                    curve.push(rec);
                }
            }
            row.push(average_precision(&curve, params.interpolation));
        }
        results.push(row);
    }
    let over = |r: usize| -> Vec<&ApResult> { results.iter().map(|row| &row[r]).collect() };
    let (per_class, ap) = averaged(&over(0));
    let at = |d: f64| {
        deltas
            .iter()
            .position(|&x| x == d)
            .and_then(|t| results[t][0].mean)
    };
    Ok(InstanceResult {
        thresholds: deltas.clone(),
        curve_classes,
        per_threshold: results.iter().map(|row| row[0].clone()).collect(),
        per_class,
        ap,
        ap50: at(0.5),
        ap75: at(0.75),
        ap_small: averaged(&over(1)).1,
        ap_medium: averaged(&over(2)).1,
        ap_large: averaged(&over(3)).1,
    })
}

/// Report with AP, AP50, AP75, APs/m/l and one `AP<δ>` entry per threshold.
pub fn instance_report(
    task: &str,
    categories: &[Category],
    result: &InstanceResult,
    mode: Mode,
    similarity: Option<SimilarityRef>,
) -> Result<MetricReport, DataError> {
    let mut report = MetricReport::new(task, mode, similarity)?;
    let sum = &mut report.summary;
    sum.insert("AP".into(), result.ap);
    sum.insert("AP50".into(), result.ap50);
    sum.insert("AP75".into(), result.ap75);
    sum.insert("APs".into(), result.ap_small);
    sum.insert("APm".into(), result.ap_medium);
    sum.insert("APl".into(), result.ap_large);
    for (d, r) in result.thresholds.iter().zip(&result.per_threshold) {
        sum.insert(format!("AP{}", (d * 100.0).round()), r.mean);
    }
    let per_class_at = |t: usize, c: usize| result.per_threshold.get(t).and_then(|r| r.per_class[c]);
    let t50 = result.thresholds.iter().position(|&d| d == 0.5).unwrap_or(0);
    let t75 = result.thresholds.iter().position(|&d| d == 0.75).unwrap_or(0);
    for c in 0..result.curve_classes {
        let (id, name) = if result.curve_classes == 1 && categories.len() != 1 {
            (0, "object".to_string())
        } else {
            (categories[c].id, categories[c].name.clone())
        };
        let values = BTreeMap::from([
            ("AP".to_string(), result.per_class[c]),
            ("AP50".to_string(), per_class_at(t50, c)),
            ("AP75".to_string(), per_class_at(t75, c)),
        ]);
        report.per_class.push(ClassRow { id, name, values });
    }
    Ok(report)
}
