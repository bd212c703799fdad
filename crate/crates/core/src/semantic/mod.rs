//! Pixel-level confusion counting and vanilla / open mIoU.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataio::report::{ClassRow, SimilarityRef};
use crate::dataio::{Category, DataError, MetricReport};
use crate::{MetricError, Mode, SimilarityMatrix};

/// Class index excluded from evaluation.
pub const IGNORE: u32 = u32::MAX;

/// Row-major per-pixel class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassRaster {
    width: u32,
    height: u32,
    ids: Vec<u32>,
}

impl ClassRaster {
    pub fn new(width: u32, height: u32, ids: Vec<u32>) -> Result<Self, MetricError> {
        if ids.len() != width as usize * height as usize {
            return Err(MetricError::ShapeMismatch(format!(
                "{} ids for a {width}x{height} raster",
                ids.len()
            )));
        }
        Ok(ClassRaster { width, height, ids })
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

    pub fn ids_mut(&mut self) -> &mut [u32] {
        &mut self.ids
    }
}

/// `counts[i][j]`: pixels of ground-truth class `i` predicted as `j`.
/// Pixels predicted as [`IGNORE`] land in `unlabeled[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
    unlabeled: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        ConfusionMatrix {
            n,
            counts: vec![0; n * n],
            unlabeled: vec![0; n],
        }
    }

    /// Builds a matrix from row-major counts with nothing unlabeled.
    pub fn from_counts(n: usize, counts: Vec<u64>) -> Result<Self, MetricError> {
        if counts.len() != n * n {
            return Err(MetricError::ShapeMismatch(format!(
                "{} counts for {n} classes",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix {
            n,
            counts,
            unlabeled: vec![0; n],
        })
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    pub fn add(&mut self, i: usize, j: usize, count: u64) {
        self.counts[i * self.n + j] += count;
    }

    pub fn unlabeled(&self, i: usize) -> u64 {
        self.unlabeled[i]
    }

    pub fn add_unlabeled(&mut self, i: usize, count: u64) {
        self.unlabeled[i] += count;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricError> {
        if other.n != self.n {
            return Err(MetricError::ShapeMismatch(format!(
                "cannot merge {} and {} classes",
                self.n, other.n
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.unlabeled.iter_mut().zip(&other.unlabeled) {
            *a += b;
        }
        Ok(())
    }

    /// Evaluated pixels.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.unlabeled.iter().sum::<u64>()
    }

    pub fn gt_total(&self, i: usize) -> u64 {
        self.counts[i * self.n..(i + 1) * self.n].iter().sum::<u64>() + self.unlabeled[i]
    }

    pub fn pred_total(&self, j: usize) -> u64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    /// Classes that occur in the ground truth or the prediction.
    pub fn presence(&self) -> Vec<bool> {
        (0..self.n)
            .map(|i| self.gt_total(i) > 0 || self.pred_total(i) > 0)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftCounts {
    pub tp: Vec<f64>,
    pub fp: Vec<f64>,
    pub fn_: Vec<f64>,
}

pub fn accumulate_into(
    cm: &mut ConfusionMatrix,
    gt: &ClassRaster,
    pred: &ClassRaster,
) -> Result<(), MetricError> {
    if (gt.width, gt.height) != (pred.width, pred.height) {
        return Err(MetricError::ShapeMismatch(format!(
            "gt is {}x{}, prediction is {}x{}",
            gt.width, gt.height, pred.width, pred.height
        )));
    }
    let n = cm.n;
    let out_of_range = |c: u32| MetricError::ClassOutOfRange { class: c, classes: n };
    for (&g, &p) in gt.ids.iter().zip(&pred.ids) {
        if g == IGNORE {
            continue;
        }
        let gi = g as usize;
        if gi >= n {
            return Err(out_of_range(g));
        }
        if p == IGNORE {
            cm.unlabeled[gi] += 1;
        } else if (p as usize) < n {
            cm.counts[gi * n + p as usize] += 1;
        } else {
            return Err(out_of_range(p));
        }
    }
    Ok(())
}

pub fn accumulate_confusion(
    gt: &ClassRaster,
    pred: &ClassRaster,
    n: usize,
) -> Result<ConfusionMatrix, MetricError> {
    let mut cm = ConfusionMatrix::new(n);
    accumulate_into(&mut cm, gt, pred)?;
    Ok(cm)
}

pub fn hard_counts(c: &ConfusionMatrix) -> SoftCounts {
    let n = c.n;
    let mut out = SoftCounts {
        tp: vec![0.0; n],
        fp: vec![0.0; n],
        fn_: vec![0.0; n],
    };
    for i in 0..n {
        let diag = c.get(i, i);
        out.tp[i] = diag as f64;
        out.fn_[i] = (c.gt_total(i) - diag) as f64;
        out.fp[i] = (c.pred_total(i) - diag) as f64;
    }
    out
}

/// Similarity-weighted counts: a pixel of class `i` predicted as `j` adds
/// `S[i][j]` to `tp[i]` and `1 - S[i][j]` to both `fn[i]` and `fp[j]`.
/// Unlabeled predictions have similarity 0 to every class.
pub fn soft_counts(c: &ConfusionMatrix, s: &SimilarityMatrix) -> Result<SoftCounts, MetricError> {
    let n = c.n;
    if s.len() != n {
        return Err(MetricError::DimensionMismatch {
            expected: n,
            found: s.len(),
        });
    }
    let mut out = SoftCounts {
        tp: vec![0.0; n],
        fp: vec![0.0; n],
        fn_: vec![0.0; n],
    };
    for i in 0..n {
        let (mut tp, mut fn_, mut fp) = (0.0, 0.0, 0.0);
        for j in 0..n {
            let cij = c.get(i, j) as f64;
            let sij = s.get(i, j);
            tp += sij * cij;
            fn_ += (1.0 - sij) * cij;
            fp += (1.0 - s.get(j, i)) * c.get(j, i) as f64;
        }
        out.tp[i] = tp;
        out.fn_[i] = fn_ + c.unlabeled[i] as f64;
        out.fp[i] = fp;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiouResult {
    /// `None` for classes left out of the mean.
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

/// Per-class IoU and the unweighted mean over classes that are present and
/// have a non-zero denominator.
pub fn miou(counts: &SoftCounts, presence: &[bool]) -> MiouResult {
    let per_class: Vec<Option<f64>> = (0..counts.tp.len())
        .map(|i| {
            let denom = counts.tp[i] + counts.fp[i] + counts.fn_[i];
            (presence[i] && denom > 0.0).then(|| counts.tp[i] / denom)
        })
        .collect();
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!included.is_empty()).then(|| included.iter().sum::<f64>() / included.len() as f64);
    MiouResult { per_class, mean }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticImage {
    pub id: u64,
    pub gt: ClassRaster,
    pub pred: Option<ClassRaster>,
}

/// Class indices in the rasters are positions in `categories`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticSet {
    pub categories: Vec<Category>,
    pub images: Vec<SemanticImage>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticResult {
    pub confusion: ConfusionMatrix,
    pub vanilla: MiouResult,
    pub open: Option<MiouResult>,
}

/// Accumulates all images in parallel, then scores. `s` must already be
/// aligned to the category order.
pub fn evaluate_semantic(
    set: &SemanticSet,
    s: Option<&SimilarityMatrix>,
) -> Result<SemanticResult, MetricError> {
    let n = set.categories.len();
    let confusion = set
        .images
        .par_iter()
        .map(|img| {
            let pred = img.pred.as_ref().ok_or(MetricError::MissingPrediction(img.id))?;
            accumulate_confusion(&img.gt, pred, n)
        })
        .try_reduce(
            || ConfusionMatrix::new(n),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )?;
    let presence = confusion.presence();
    let vanilla = miou(&hard_counts(&confusion), &presence);
    let open = match s {
        Some(s) => Some(miou(&soft_counts(&confusion, s)?, &presence)),
        None => None,
    };
    Ok(SemanticResult {
        confusion,
        vanilla,
        open,
    })
}

/// Open-mode reports carry the open values under the plain keys and the
/// vanilla values next to them.
pub fn semantic_report(
    categories: &[Category],
    result: &SemanticResult,
    mode: Mode,
    similarity: Option<SimilarityRef>,
) -> Result<MetricReport, DataError> {
    let mut report = MetricReport::new("semantic", mode, similarity)?;
    let open = match (mode, &result.open) {
        (Mode::Open, Some(o)) => Some(o),
        (Mode::Open, None) => {
            return Err(DataError::schema("mode", "open mode needs a similarity matrix"))
        }
        _ => None,
    };
    let primary = open.unwrap_or(&result.vanilla);
    report.summary.insert("mIoU".into(), primary.mean);
    if open.is_some() {
        report.summary.insert("vanilla_mIoU".into(), result.vanilla.mean);
    }
    for (i, c) in categories.iter().enumerate() {
        let mut values = BTreeMap::new();
        values.insert("IoU".to_string(), primary.per_class[i]);
        if open.is_some() {
            values.insert("vanilla_IoU".to_string(), result.vanilla.per_class[i]);
        }
        report.per_class.push(ClassRow {
            id: c.id,
            name: c.name.clone(),
            values,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{LabelSpec, Method};

    fn labels(n: u32) -> Vec<LabelSpec> {
        (0..n).map(|i| LabelSpec::named(i, &format!("c{i}"))).collect()
    }

    #[test]
    fn enumeration_example() {
        let gt = ClassRaster::new(2, 2, vec![0, 0, 1, 1]).unwrap();
        let pred = ClassRaster::new(2, 2, vec![0, 1, 1, 1]).unwrap();
        let cm = accumulate_confusion(&gt, &pred, 2).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1)), (1, 1, 0, 2));
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn ignore_and_shape() {
        let gt = ClassRaster::new(2, 1, vec![IGNORE, IGNORE]).unwrap();
        let pred = ClassRaster::new(2, 1, vec![0, 1]).unwrap();
        assert_eq!(accumulate_confusion(&gt, &pred, 2).unwrap().total(), 0);
        let small = ClassRaster::new(1, 1, vec![0]).unwrap();
        assert!(matches!(
            accumulate_confusion(&gt, &small, 2),
            Err(MetricError::ShapeMismatch(_))
        ));
        let bad = ClassRaster::new(2, 1, vec![0, 5]).unwrap();
        assert!(accumulate_confusion(&pred, &bad, 2).is_err());
    }

    #[test]
    fn predicted_ignore_is_a_miss() {
        let gt = ClassRaster::new(2, 1, vec![0, 0]).unwrap();
        let pred = ClassRaster::new(2, 1, vec![0, IGNORE]).unwrap();
        let cm = accumulate_confusion(&gt, &pred, 1).unwrap();
        let s = SimilarityMatrix::identity(labels(1)).unwrap();
        let soft = soft_counts(&cm, &s).unwrap();
        assert_eq!(soft, hard_counts(&cm));
        assert_eq!((soft.tp[0], soft.fn_[0], soft.fp[0]), (1.0, 1.0, 0.0));
    }

    #[test]
    fn hard_and_soft_examples() {
        let cm = ConfusionMatrix::from_counts(2, vec![0, 10, 0, 0]).unwrap();
        let h = hard_counts(&cm);
        assert_eq!((h.tp[0], h.fn_[0], h.fp[1]), (0.0, 10.0, 10.0));
        let s = SimilarityMatrix::new(labels(2), Method::Path, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let soft = soft_counts(&cm, &s).unwrap();
        assert_eq!((soft.tp[0], soft.fn_[0], soft.fp[1]), (5.0, 5.0, 5.0));
        let r = miou(&soft, &cm.presence());
        assert_eq!(r.per_class[0], Some(0.5));
        let ones = SimilarityMatrix::new(labels(2), Method::Path, vec![1.0; 4]).unwrap();
        let all = soft_counts(&cm, &ones).unwrap();
        assert_eq!((all.tp[0], all.fp[1], all.fn_[0]), (10.0, 0.0, 0.0));
        let three = SimilarityMatrix::identity(labels(3)).unwrap();
        assert!(matches!(
            soft_counts(&cm, &three),
            Err(MetricError::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn absent_classes_are_excluded() {
        let cm = ConfusionMatrix::from_counts(3, vec![4, 0, 0, 0, 4, 0, 0, 0, 0]).unwrap();
        let r = miou(&hard_counts(&cm), &cm.presence());
        assert_eq!(r.per_class, vec![Some(1.0), Some(1.0), None]);
        assert_eq!(r.mean, Some(1.0));
    }
}
