//! Precision-recall curves with fractional weights, and their area.

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub class: usize,
    pub score: f64,
    pub tp: f64,
    pub fp: f64,
    /// Image position and rank within the image; orders equal scores.
    pub image: usize,
    pub pred: usize,
}

impl Record {
    pub fn new(class: usize, score: f64, tp: f64, fp: f64, pred: usize) -> Self {
        Record {
            class,
            score,
            tp,
            fp,
            image: 0,
            pred,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrCurve {
    records: Vec<Record>,
    gt_counts: Vec<u64>,
}

impl PrCurve {
    pub fn new(classes: usize) -> Self {
        PrCurve {
            records: Vec::new(),
            gt_counts: vec![0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.gt_counts.len()
    }

    pub fn add_gt(&mut self, class: usize, count: u64) {
        self.gt_counts[class] += count;
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn gt_count(&self, class: usize) -> u64 {
        self.gt_counts[class]
    }

    /// Precision and recall after each record of `class`, records ordered by
    /// descending score, then image, then rank.
    pub fn precision_recall(&self, class: usize) -> (Vec<f64>, Vec<f64>) {
        let mut recs: Vec<&Record> = self.records.iter().filter(|r| r.class == class).collect();
        recs.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.image.cmp(&b.image))
                .then(a.pred.cmp(&b.pred))
        });
        let gt = self.gt_counts[class] as f64;
        let (mut tp, mut fp) = (0.0, 0.0);
        let mut precision = Vec::with_capacity(recs.len());
        let mut recall = Vec::with_capacity(recs.len());
        for r in recs {
            tp += r.tp;
            fp += r.fp;
            precision.push(if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 });
            recall.push(tp / gt);
        }
        (precision, recall)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    /// Mean interpolated precision at recall 0, 0.01, ..., 1.
    Coco101,
    /// Exact area under the interpolated curve.
    AllPoints,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApResult {
    /// `None` for classes without ground truth.
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

fn envelope(precision: &mut [f64]) {
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i] < precision[i + 1] {
            precision[i] = precision[i + 1];
        }
    }
}

fn area(precision: &[f64], recall: &[f64], interp: Interpolation) -> f64 {
    match interp {
        Interpolation::Coco101 => {
            let mut q = precision.to_vec();
            envelope(&mut q);
            let mut sum = 0.0;
            for t in 0..=100 {
                let r = t as f64 / 100.0;
                let idx = recall.partition_point(|&x| x < r);
                if idx < q.len() {
                    sum += q[idx];
                }
            }
            sum / 101.0
        }
        Interpolation::AllPoints => {
            let mut mrec = Vec::with_capacity(recall.len() + 2);
            mrec.push(0.0);
            mrec.extend_from_slice(recall);
            mrec.push(1.0);
            let mut mpre = Vec::with_capacity(precision.len() + 2);
            mpre.push(0.0);
            mpre.extend_from_slice(precision);
            mpre.push(0.0);
            envelope(&mut mpre);
            let mut sum = 0.0;
            for i in 0..mrec.len() - 1 {
                if mrec[i + 1] != mrec[i] {
                    sum += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
                }
            }
            sum
        }
    }
}

/// Per-class AP and the mean over classes with at least one ground truth.
pub fn average_precision(curve: &PrCurve, interp: Interpolation) -> ApResult {
    let per_class: Vec<Option<f64>> = (0..curve.classes())
        .map(|c| {
            (curve.gt_count(c) > 0).then(|| {
                let (p, r) = curve.precision_recall(c);
                area(&p, &r, interp)
            })
        })
        .collect();
    let vals: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    ApResult { per_class, mean }
}
