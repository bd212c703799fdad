//! Panoptic quality over non-overlapping segment maps, vanilla and open.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::dataio::report::{ClassRow, SimilarityRef};
use crate::dataio::{Category, DataError, MetricReport};
use crate::{MetricError, Mode, SimilarityMatrix};

/// Raster id for unlabeled pixels.
pub const VOID: u32 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub id: u32,
    /// Position in the category list.
    pub class: usize,
    pub isthing: bool,
}

/// Row-major segment ids plus the segment table.
#[derive(Clone, Debug, PartialEq)]
pub struct PanopticMap {
    width: u32,
    height: u32,
    ids: Vec<u32>,
    segments: Vec<Segment>,
}

impl PanopticMap {
    /// Every non-void raster id must have exactly one segment entry, and
    /// every entry must occur in the raster.
    pub fn new(width: u32, height: u32, ids: Vec<u32>, mut segments: Vec<Segment>) -> Result<Self, MetricError> {
        if ids.len() != width as usize * height as usize {
            return Err(MetricError::ShapeMismatch(format!(
                "{} ids for a {width}x{height} raster",
                ids.len()
            )));
        }
        segments.sort_by_key(|s| s.id);
        if let Some(w) = segments.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(MetricError::Invalid(format!("segment {} listed twice", w[0].id)));
        }
        if segments.first().is_some_and(|s| s.id == VOID) {
            return Err(MetricError::Invalid("segment id 0 is reserved for void".into()));
        }
        let mut seen = vec![false; segments.len()];
        let mut last: Option<(u32, usize)> = None;
        for &v in &ids {
            if v == VOID {
                continue;
            }
            let k = match last {
                Some((id, k)) if id == v => k,
                _ => segments
                    .binary_search_by_key(&v, |s| s.id)
                    .map_err(|_| MetricError::Invalid(format!("raster id {v} has no segment entry")))?,
            };
            seen[k] = true;
            last = Some((v, k));
        }
        if let Some(k) = seen.iter().position(|&b| !b) {
            return Err(MetricError::Invalid(format!(
                "segment {} does not occur in the raster",
                segments[k].id
            )));
        }
        Ok(PanopticMap {
            width,
            height,
            ids,
            segments,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Sorted by id.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_index(&self, id: u32) -> Option<usize> {
        self.segments.binary_search_by_key(&id, |s| s.id).ok()
    }
}

/// Pairwise overlaps between the segments of a gt and a predicted map.
/// Indices are positions in the maps' segment lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Overlaps {
    pub gt_area: Vec<u64>,
    pub pred_area: Vec<u64>,
    /// Pixels of each predicted segment lying on gt void.
    pub pred_void: Vec<u64>,
    /// `(gt, pred) -> intersection`, sorted.
    pub intersections: BTreeMap<(usize, usize), u64>,
}

impl Overlaps {
    /// IoU with the prediction's gt-void pixels removed from the union.
    pub fn iou(&self, g: usize, p: usize) -> f64 {
        let inter = self.intersections.get(&(g, p)).copied().unwrap_or(0);
        let union = self.gt_area[g] + self.pred_area[p] - inter - self.pred_void[p];
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

pub fn segment_overlaps(gt: &PanopticMap, pred: &PanopticMap) -> Result<Overlaps, MetricError> {
    if (gt.width, gt.height) != (pred.width, pred.height) {
        return Err(MetricError::ShapeMismatch(format!(
            "gt is {}x{}, prediction is {}x{}",
            gt.width, gt.height, pred.width, pred.height
        )));
    }
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    for (&g, &p) in gt.ids.iter().zip(&pred.ids) {
        *joint.entry((g, p)).or_insert(0) += 1;
    }
    let mut out = Overlaps {
        gt_area: vec![0; gt.segments.len()],
        pred_area: vec![0; pred.segments.len()],
        pred_void: vec![0; pred.segments.len()],
        intersections: BTreeMap::new(),
    };
    for (&(g, p), &n) in &joint {
        let gi = (g != VOID).then(|| gt.segment_index(g).expect("validated map"));
        let pi = (p != VOID).then(|| pred.segment_index(p).expect("validated map"));
        if let Some(gi) = gi {
            out.gt_area[gi] += n;
        }
        if let Some(pi) = pi {
            out.pred_area[pi] += n;
            match gi {
                Some(gi) => {
                    out.intersections.insert((gi, pi), n);
                }
                None => out.pred_void[pi] += n,
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentMatches {
    /// `(gt, pred, iou)` sorted by gt.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Pairs with IoU > 0.5. Vanilla requires the same category, open only the
/// same thing/stuff status.
pub fn pq_match(ov: &Overlaps, gt: &PanopticMap, pred: &PanopticMap, mode: Mode) -> SegmentMatches {
    let mut g_used = vec![false; gt.segments.len()];
    let mut p_used = vec![false; pred.segments.len()];
    let mut pairs = Vec::new();
    for &(g, p) in ov.intersections.keys() {
        let (gs, ps) = (gt.segments[g], pred.segments[p]);
        let compatible = match mode {
            Mode::Open => gs.isthing == ps.isthing,
            _ => gs.class == ps.class,
        };
        if !compatible {
            continue;
        }
        let iou = ov.iou(g, p);
        if iou > 0.5 {
            assert!(!g_used[g] && !p_used[p], "IoU > 0.5 admits one partner per segment");
            g_used[g] = true;
            p_used[p] = true;
            pairs.push((g, p, iou));
        }
    }
    SegmentMatches {
        pairs,
        unmatched_gt: (0..g_used.len()).filter(|&g| !g_used[g]).collect(),
        unmatched_pred: (0..p_used.len()).filter(|&p| !p_used[p]).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PqStats {
    pub tp: Vec<f64>,
    pub fp: Vec<f64>,
    pub fn_: Vec<f64>,
    pub iou_sum: Vec<f64>,
}

impl PqStats {
    pub fn new(n: usize) -> Self {
        PqStats {
            tp: vec![0.0; n],
            fp: vec![0.0; n],
            fn_: vec![0.0; n],
            iou_sum: vec![0.0; n],
        }
    }

    pub fn classes(&self) -> usize {
        self.tp.len()
    }

    pub fn merge(&mut self, other: &PqStats) {
        for (a, b) in [
            (&mut self.tp, &other.tp),
            (&mut self.fp, &other.fp),
            (&mut self.fn_, &other.fn_),
            (&mut self.iou_sum, &other.iou_sum),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Adds one image's matches. A matched pair (gt class `ci`, predicted `cj`)
/// adds `S` to `tp[ci]` and `IoU·S` to `iou_sum[ci]`; across classes it also
/// adds `1 - S` to `fn[ci]` and to `fp[cj]`. A predicted segment with more
/// than half of its area on gt void never counts as a false positive.
pub fn pq_accumulate(
    stats: &mut PqStats,
    matches: &SegmentMatches,
    ov: &Overlaps,
    gt: &PanopticMap,
    pred: &PanopticMap,
    s: Option<&SimilarityMatrix>,
) {
    let sim = |i: usize, j: usize| match s {
        Some(s) => s.get(i, j),
        None => f64::from(u8::from(i == j)),
    };
    let void_dominated = |p: usize| 2 * ov.pred_void[p] > ov.pred_area[p];
    for &(g, p, iou) in &matches.pairs {
        let (ci, cj) = (gt.segments[g].class, pred.segments[p].class);
        let w = sim(ci, cj);
        stats.tp[ci] += w;
        stats.iou_sum[ci] += iou * w;
        if ci != cj {
            stats.fn_[ci] += 1.0 - w;
            if !void_dominated(p) {
                stats.fp[cj] += 1.0 - w;
            }
        }
    }
    for &g in &matches.unmatched_gt {
        stats.fn_[gt.segments[g].class] += 1.0;
    }
    for &p in &matches.unmatched_pred {
        if !void_dominated(p) {
            stats.fp[pred.segments[p].class] += 1.0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quality {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PqResult {
    /// `None` for classes with no tp, fp or fn mass.
    pub per_class: Vec<Option<Quality>>,
    pub all: Option<Quality>,
    pub things: Option<Quality>,
    pub stuff: Option<Quality>,
}

impl PqResult {
    /// Unweighted mean over the listed classes that have a value.
    pub fn subset_mean(&self, classes: impl IntoIterator<Item = usize>) -> Option<Quality> {
        let qs: Vec<Quality> = classes
            .into_iter()
            .filter_map(|c| self.per_class.get(c).copied().flatten())
            .collect();
        if qs.is_empty() {
            return None;
        }
        let n = qs.len() as f64;
        Some(Quality {
            pq: qs.iter().map(|q| q.pq).sum::<f64>() / n,
            sq: qs.iter().map(|q| q.sq).sum::<f64>() / n,
            rq: qs.iter().map(|q| q.rq).sum::<f64>() / n,
        })
    }
}

/// Per-class SQ, RQ and PQ; class means overall and over things / stuff.
pub fn pq_finalize(stats: &PqStats, isthing: &[bool]) -> PqResult {
    let per_class: Vec<Option<Quality>> = (0..stats.classes())
        .map(|c| {
            let (tp, fp, fn_) = (stats.tp[c], stats.fp[c], stats.fn_[c]);
            if tp + fp + fn_ <= 0.0 {
                return None;
            }
            let sq = if tp > 0.0 { stats.iou_sum[c] / tp } else { 0.0 };
            let rq = tp / (tp + 0.5 * fp + 0.5 * fn_);
            Some(Quality { pq: sq * rq, sq, rq })
        })
        .collect();
    let mut r = PqResult {
        per_class,
        all: None,
        things: None,
        stuff: None,
    };
    let n = stats.classes();
    r.all = r.subset_mean(0..n);
    r.things = r.subset_mean((0..n).filter(|&c| isthing[c]));
    r.stuff = r.subset_mean((0..n).filter(|&c| !isthing[c]));
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanopticImage {
    pub id: u64,
    pub gt: PanopticMap,
    pub pred: Option<PanopticMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanopticSet {
    pub categories: Vec<Category>,
    pub images: Vec<PanopticImage>,
}

/// Per-image stats in parallel, merged in image order. Open mode uses `s`
/// (aligned to the categories), vanilla the identity.
pub fn evaluate_panoptic(
    set: &PanopticSet,
    mode: Mode,
    s: Option<&SimilarityMatrix>,
) -> Result<(PqStats, PqResult), MetricError> {
    let n = set.categories.len();
    let s = match mode {
        Mode::Open => {
            let s = s.ok_or_else(|| MetricError::Invalid("open mode needs a similarity matrix".into()))?;
            if s.len() != n {
                return Err(MetricError::DimensionMismatch {
                    expected: n,
                    found: s.len(),
                });
            }
            Some(s)
        }
        Mode::Vanilla => None,
        Mode::VanillaAgnostic => {
            return Err(MetricError::Invalid("panoptic quality has no vanilla_agnostic mode".into()))
        }
    };
    let per_image: Vec<PqStats> = set
        .images
        .par_iter()
        .map(|img| {
            let pred = img.pred.as_ref().ok_or(MetricError::MissingPrediction(img.id))?;
            for seg in img.gt.segments.iter().chain(&pred.segments) {
                if seg.class >= n {
                    return Err(MetricError::ClassOutOfRange {
                        class: seg.class as u32,
                        classes: n,
                    });
                }
            }
            let ov = segment_overlaps(&img.gt, pred)?;
            let m = pq_match(&ov, &img.gt, pred, mode);
            let mut st = PqStats::new(n);
            pq_accumulate(&mut st, &m, &ov, &img.gt, pred, s);
            Ok(st)
        })
        .collect::<Result<_, MetricError>>()?;
    let mut stats = PqStats::new(n);
    for st in &per_image {
        stats.merge(st);
    }
    let isthing: Vec<bool> = set.categories.iter().map(Category::is_thing).collect();
    let result = pq_finalize(&stats, &isthing);
    Ok((stats, result))
}

/// `known` optionally names the category ids of the known classes; the
/// report then adds known/unknown means over the thing classes.
pub fn panoptic_report(
    categories: &[Category],
    result: &PqResult,
    mode: Mode,
    similarity: Option<SimilarityRef>,
    known: Option<&[crate::CategoryId]>,
) -> Result<MetricReport, DataError> {
    let mut report = MetricReport::new("panoptic", mode, similarity)?;
    let mut put = |prefix: &str, q: Option<Quality>| {
        report.summary.insert(format!("PQ{prefix}"), q.map(|q| q.pq));
        report.summary.insert(format!("SQ{prefix}"), q.map(|q| q.sq));
        report.summary.insert(format!("RQ{prefix}"), q.map(|q| q.rq));
    };
    put("", result.all);
    put("_th", result.things);
    put("_st", result.stuff);
    if let Some(known) = known {
        let things = categories.iter().enumerate().filter(|(_, c)| c.is_thing());
        let (k, u): (Vec<_>, Vec<_>) = things.partition(|(_, c)| known.contains(&c.id));
        put("_known", result.subset_mean(k.into_iter().map(|(i, _)| i)));
        put("_unknown", result.subset_mean(u.into_iter().map(|(i, _)| i)));
    }
    for (c, cat) in categories.iter().enumerate() {
        let q = result.per_class[c];
        report.per_class.push(ClassRow {
            id: cat.id,
            name: cat.name.clone(),
            values: BTreeMap::from([
                ("PQ".to_string(), q.map(|q| q.pq)),
                ("SQ".to_string(), q.map(|q| q.sq)),
                ("RQ".to_string(), q.map(|q| q.rq)),
            ]),
        });
    }
    Ok(report)
}
