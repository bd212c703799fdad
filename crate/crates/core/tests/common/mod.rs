//! Random dataset generators and brute-force reference evaluators shared by
//! the integration tests and the acceptance suite. The evaluators work from
//! raw pixels and the counting rules only; they do not call the metric
//! modules.
#![allow(dead_code)]

use openmetrics::instance::{ImageInfo, InstanceMask, InstanceSet, Interpolation};
use openmetrics::panoptic::{PanopticImage, PanopticMap, PanopticSet, Segment, VOID};
use openmetrics::semantic::{ClassRaster, SemanticImage, SemanticSet, IGNORE};
use openmetrics::{Category, LabelSpec, Method, Mode, RleMask, SimilarityMatrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(n: usize) -> Vec<LabelSpec> {
    (0..n).map(|i| LabelSpec::named(i as u32, &format!("c{i}"))).collect()
}

pub fn categories(n: usize, rng: &mut impl Rng) -> Vec<Category> {
    (0..n)
        .map(|i| {
            let mut c = Category::new(i as u32, &format!("c{i}"));
            c.isthing = Some(rng.gen_bool(0.5));
            c
        })
        .collect()
}

pub fn identity(n: usize) -> SimilarityMatrix {
    SimilarityMatrix::identity(labels(n)).unwrap()
}

/// Symmetric, unit diagonal; a share of exact 0 and 1 entries so the
/// boundary cases of the weighting rules come up.
pub fn random_sim(rng: &mut impl Rng, n: usize) -> SimilarityMatrix {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
        for j in i + 1..n {
            let x = match rng.gen_range(0..10) {
                0..=2 => 0.0,
                3 => 1.0,
                _ => rng.gen::<f64>(),
            };
            v[i * n + j] = x;
            v[j * n + i] = x;
        }
    }
    SimilarityMatrix::new(labels(n), Method::Path, v).unwrap()
}

fn sim_of(s: Option<&SimilarityMatrix>, i: usize, j: usize) -> f64 {
    match s {
        Some(s) => s.get(i, j),
        None => f64::from(u8::from(i == j)),
    }
}

// ---------------------------------------------------------------- semantic

pub fn semantic_set(rng: &mut impl Rng, n: usize, images: usize) -> SemanticSet {
    let mut categories = categories(n, rng);
    for c in &mut categories {
        c.isthing = None;
    }
    let images = (0..images)
        .map(|k| {
            let (w, h) = (rng.gen_range(1..12u32), rng.gen_range(1..12u32));
            let len = (w * h) as usize;
            let gt: Vec<u32> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        IGNORE
                    } else {
                        rng.gen_range(0..n as u32)
                    }
                })
                .collect();
            let keep = rng.gen::<f64>();
            let pred: Vec<u32> = gt
                .iter()
                .map(|&g| {
                    if rng.gen_bool(0.05) {
                        IGNORE
                    } else if g != IGNORE && rng.gen_bool(keep) {
                        g
                    } else {
                        rng.gen_range(0..n as u32)
                    }
                })
                .collect();
            SemanticImage {
                id: k as u64,
                gt: ClassRaster::new(w, h, gt).unwrap(),
                pred: Some(ClassRaster::new(w, h, pred).unwrap()),
            }
        })
        .collect();
    SemanticSet { categories, images }
}

/// Per-pixel soft counting; `None` for hard counts.
pub fn oracle_miou(set: &SemanticSet, s: Option<&SimilarityMatrix>) -> (Vec<Option<f64>>, Option<f64>) {
    let n = set.categories.len();
    let (mut tp, mut fp, mut fn_) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut present = vec![false; n];
    for img in &set.images {
        let pred = img.pred.as_ref().unwrap();
        for (&g, &p) in img.gt.ids().iter().zip(pred.ids()) {
            if g == IGNORE {
                continue;
            }
            let g = g as usize;
            present[g] = true;
            if p == IGNORE {
                fn_[g] += 1.0;
                continue;
            }
            let p = p as usize;
            present[p] = true;
            tp[g] += sim_of(s, g, p);
            fn_[g] += 1.0 - sim_of(s, g, p);
            fp[p] += 1.0 - sim_of(s, p, g);
        }
    }
    let per: Vec<Option<f64>> = (0..n)
        .map(|c| {
            let d = tp[c] + fp[c] + fn_[c];
            (present[c] && d > 0.0).then(|| tp[c] / d)
        })
        .collect();
    let vals: Vec<f64> = per.iter().flatten().copied().collect();
    let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    (per, mean)
}

// ---------------------------------------------------------------- instance

fn rect_bits(rng: &mut impl Rng, w: u32, h: u32) -> Vec<bool> {
    let x0 = rng.gen_range(0..w);
    let y0 = rng.gen_range(0..h);
    let x1 = rng.gen_range(x0..w) + 1;
    let y1 = rng.gen_range(y0..h) + 1;
    let mut bits = vec![false; (w * h) as usize];
    for y in y0..y1 {
        for x in x0..x1 {
            bits[(y * w + x) as usize] = true;
        }
    }
    bits
}

fn jitter(rng: &mut impl Rng, bits: &[bool], w: u32, h: u32, flip: f64) -> Vec<bool> {
    let (dx, dy) = (rng.gen_range(-1i32..=1), rng.gen_range(-1i32..=1));
    let mut out = vec![false; bits.len()];
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let (sx, sy) = (x - dx, y - dy);
            let on = sx >= 0 && sy >= 0 && sx < w as i32 && sy < h as i32 && bits[(sy * w as i32 + sx) as usize];
            out[(y * w as i32 + x) as usize] = on ^ rng.gen_bool(flip);
        }
    }
    out
}

const SCORES: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 0.9];

/// At most `max_images` images with at most 5 ground-truth masks each.
/// `rects` keeps every mask an exact filled rectangle.
pub fn instance_set(rng: &mut impl Rng, n: usize, max_images: usize, rects: bool) -> InstanceSet {
    let categories = categories(n, rng);
    let n_images = rng.gen_range(1..=max_images);
    let mut images = Vec::new();
    let (mut gts, mut preds) = (Vec::new(), Vec::new());
    for i in 0..n_images {
        let (w, h) = (rng.gen_range(4..14u32), rng.gen_range(4..14u32));
        images.push(ImageInfo {
            id: i as u64 + 1,
            width: w,
            height: h,
        });
        let mk = |bits: &[bool], class: usize, score: Option<f64>| InstanceMask {
            image: i,
            class,
            score,
            mask: RleMask::encode_row_major(bits, h, w).unwrap(),
            bbox: None,
        };
        for _ in 0..rng.gen_range(0..=5) {
            let bits = rect_bits(rng, w, h);
            let class = rng.gen_range(0..n);
            gts.push(mk(&bits, class, None));
            if rng.gen_bool(0.7) {
                let pb = if rects { rect_near(rng, &bits, w, h) } else { jitter(rng, &bits, w, h, 0.05) };
                let pc = if rng.gen_bool(0.5) { class } else { rng.gen_range(0..n) };
                preds.push(mk(&pb, pc, Some(*SCORES.choose(rng).unwrap())));
            }
        }
        for _ in 0..rng.gen_range(0..=2) {
            let bits = rect_bits(rng, w, h);
            preds.push(mk(&bits, rng.gen_range(0..n), Some(*SCORES.choose(rng).unwrap())));
        }
    }
    // spread predictions of different images through the list
    preds.shuffle(rng);
    InstanceSet {
        categories,
        images,
        gts,
        preds,
    }
}

fn rect_near(rng: &mut impl Rng, bits: &[bool], w: u32, h: u32) -> Vec<bool> {
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if bits[(y * w + x) as usize] {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    let mut grow = |v: u32, lo: u32, hi: u32| (v as i64 + rng.gen_range(-1i64..=1)).clamp(lo as i64, hi as i64) as u32;
    let (nx0, ny0) = (grow(x0, 0, w - 1), grow(y0, 0, h - 1));
    let (nx1, ny1) = (grow(x1, nx0 + 1, w), grow(y1, ny0 + 1, h));
    let mut out = vec![false; bits.len()];
    for y in ny0..ny1 {
        for x in nx0..nx1 {
            out[(y * w + x) as usize] = true;
        }
    }
    out
}

pub struct OracleAp {
    pub per_class: Vec<Option<f64>>,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
}

fn pixel_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn interpolated_ap(mut recs: Vec<(f64, usize, usize, f64, f64)>, n_gt: usize, interp: Interpolation) -> f64 {
    recs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut prec = Vec::new();
    let mut rec = Vec::new();
    for r in &recs {
        tp += r.3;
        fp += r.4;
        prec.push(if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 });
        rec.push(tp / n_gt as f64);
    }
    // best precision at this recall or beyond
    let best_from = |k: usize, p: &[f64]| p[k..].iter().copied().fold(0.0, f64::max);
    match interp {
        Interpolation::Coco101 => {
            let mut sum = 0.0;
            for t in 0..=100 {
                let r = t as f64 / 100.0;
                if let Some(k) = rec.iter().position(|&x| x >= r) {
                    sum += best_from(k, &prec);
                }
            }
            sum / 101.0
        }
        Interpolation::AllPoints => {
            let mut area = 0.0;
            let mut last = 0.0;
            for k in 0..rec.len() {
                if rec[k] > last {
                    area += (rec[k] - last) * best_from(k, &prec);
                    last = rec[k];
                }
            }
            area
        }
    }
}

/// Greedy COCO-style AP over the whole area range, mask IoU, small sets
/// only (every prediction kept).
pub fn oracle_ap(set: &InstanceSet, mode: Mode, s: Option<&SimilarityMatrix>, interp: Interpolation) -> OracleAp {
    let n = set.categories.len();
    let s = if mode == Mode::Open { s } else { None };
    let mut n_gt = vec![0usize; n];
    for g in &set.gts {
        n_gt[g.class] += 1;
    }
    let deltas: Vec<f64> = (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect();
    let mut table: Vec<Vec<Option<f64>>> = Vec::new();
    for &delta in &deltas {
        // (score, image, rank, tp, fp) per class
        let mut recs: Vec<Vec<(f64, usize, usize, f64, f64)>> = vec![Vec::new(); n];
        for img in 0..set.images.len() {
            let gts: Vec<&InstanceMask> = set.gts.iter().filter(|g| g.image == img).collect();
            let gbits: Vec<Vec<bool>> = gts.iter().map(|g| g.mask.decode()).collect();
            let mut preds: Vec<&InstanceMask> = set.preds.iter().filter(|p| p.image == img).collect();
            preds.sort_by(|a, b| b.score.unwrap().total_cmp(&a.score.unwrap()));
            let mut taken = vec![false; gts.len()];
            for (rank, p) in preds.iter().enumerate() {
                let pbits = p.mask.decode();
                let score = p.score.unwrap();
                let mut best: Option<(usize, f64)> = None;
                for (g, gm) in gts.iter().enumerate() {
                    if taken[g] || (mode == Mode::Vanilla && gm.class != p.class) {
                        continue;
                    }
                    let iou = pixel_iou(&gbits[g], &pbits);
                    if iou >= delta && best.map_or(true, |(_, b)| iou > b) {
                        best = Some((g, iou));
                    }
                }
                let cj = p.class;
                match best {
                    Some((g, _)) => {
                        taken[g] = true;
                        let ci = gts[g].class;
                        let w = sim_of(s, ci, cj);
                        if w > 0.0 {
                            recs[ci].push((score, img, rank, w, 0.0));
                        }
                        if ci != cj && w < 1.0 {
                            recs[cj].push((score, img, rank, 0.0, 1.0 - w));
                        }
                    }
                    None => recs[cj].push((score, img, rank, 0.0, 1.0)),
                }
            }
        }
        table.push(
            (0..n)
                .map(|c| (n_gt[c] > 0).then(|| interpolated_ap(recs[c].clone(), n_gt[c], interp)))
                .collect(),
        );
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let per_class: Vec<Option<f64>> = (0..n)
        .map(|c| {
            let v: Vec<f64> = table.iter().filter_map(|row| row[c]).collect();
            if v.len() == deltas.len() {
                mean(&v)
            } else {
                None
            }
        })
        .collect();
    let at = |t: usize| mean(&table[t].iter().flatten().copied().collect::<Vec<_>>());
    OracleAp {
        ap: mean(&per_class.iter().flatten().copied().collect::<Vec<_>>()),
        per_class,
        ap50: at(0),
        ap75: at(5),
    }
}

// ---------------------------------------------------------------- panoptic

fn segments_for(ids: &[u32], classes: &dyn Fn(u32) -> usize, cats: &[Category]) -> Vec<Segment> {
    let mut seen: Vec<u32> = ids.iter().copied().filter(|&v| v != VOID).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.into_iter()
        .map(|id| {
            let class = classes(id);
            Segment {
                id,
                class,
                isthing: cats[class].is_thing(),
            }
        })
        .collect()
}

fn paint(rng: &mut impl Rng, ids: &mut [u32], w: u32, h: u32, id: u32) {
    let bits = rect_bits(rng, w, h);
    for (v, b) in ids.iter_mut().zip(bits) {
        if b {
            *v = id;
        }
    }
}

/// Rectangles painted over each other; predictions are the gt with pixel
/// noise, shifted labels and a few invented segments, some on void.
pub fn panoptic_set(rng: &mut impl Rng, n: usize, images: usize) -> PanopticSet {
    let categories = categories(n, rng);
    let images = (0..images)
        .map(|k| {
            let (w, h) = (rng.gen_range(4..12u32), rng.gen_range(4..12u32));
            let len = (w * h) as usize;
            let mut gt = vec![if rng.gen_bool(0.7) { 1 } else { VOID }; len];
            let n_seg = rng.gen_range(1..=5u32);
            for id in 2..=n_seg + 1 {
                paint(rng, &mut gt, w, h, id);
            }
            if rng.gen_bool(0.3) {
                paint(rng, &mut gt, w, h, VOID);
            }
            for v in gt.iter_mut() {
                if rng.gen_bool(0.03) {
                    *v = VOID;
                }
            }
            let gt_class: Vec<usize> = (0..=n_seg + 1).map(|_| rng.gen_range(0..n)).collect();

            let noise = rng.gen_range(0.0..0.3);
            let mut pred: Vec<u32> = gt
                .iter()
                .map(|&g| {
                    if rng.gen_bool(noise) {
                        rng.gen_range(0..=n_seg + 1)
                    } else {
                        g
                    }
                })
                .collect();
            let extra = rng.gen_range(0..=2u32);
            for id in 0..extra {
                paint(rng, &mut pred, w, h, 100 + id);
            }
            let keep = rng.gen::<f64>();
            let pred_class: Vec<usize> = (0..=n_seg + 1)
                .map(|c| if rng.gen_bool(keep) { gt_class[c as usize] } else { rng.gen_range(0..n) })
                .collect();
            let extra_class: Vec<usize> = (0..extra).map(|_| rng.gen_range(0..n)).collect();

            let gs = segments_for(&gt, &|id| gt_class[id as usize], &categories);
            let ps = segments_for(
                &pred,
                &|id| if id >= 100 { extra_class[(id - 100) as usize] } else { pred_class[id as usize] },
                &categories,
            );
            PanopticImage {
                id: k as u64,
                gt: PanopticMap::new(w, h, gt, gs).unwrap(),
                pred: Some(PanopticMap::new(w, h, pred, ps).unwrap()),
            }
        })
        .collect();
    PanopticSet { categories, images }
}

#[derive(Clone, Copy, Debug)]
pub struct OracleQuality {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
}

/// Pixel-scan PQ: every (gt, pred) pair's overlap is counted directly.
pub fn oracle_pq(set: &PanopticSet, mode: Mode, s: Option<&SimilarityMatrix>) -> (Vec<Option<OracleQuality>>, Option<f64>) {
    let n = set.categories.len();
    let s = if mode == Mode::Open { s } else { None };
    let (mut tp, mut fp, mut fn_, mut iou_sum) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for img in &set.images {
        let (gt, pred) = (&img.gt, img.pred.as_ref().unwrap());
        let count = |f: &dyn Fn(u32, u32) -> bool| gt.ids().iter().zip(pred.ids()).filter(|(&g, &p)| f(g, p)).count();
        let mut g_hit = vec![false; gt.segments().len()];
        let mut p_hit = vec![false; pred.segments().len()];
        for (pi, ps) in pred.segments().iter().enumerate() {
            let p_area = count(&|_, p| p == ps.id);
            let p_void = count(&|g, p| p == ps.id && g == VOID);
            let void_dominated = 2 * p_void > p_area;
            for (gi, gs) in gt.segments().iter().enumerate() {
                let ok = match mode {
                    Mode::Open => gs.isthing == ps.isthing,
                    _ => gs.class == ps.class,
                };
                if !ok {
                    continue;
                }
                let inter = count(&|g, p| g == gs.id && p == ps.id);
                let g_area = count(&|g, _| g == gs.id);
                let union = g_area + p_area - inter - p_void;
                let iou = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
                if iou > 0.5 {
                    assert!(!g_hit[gi] && !p_hit[pi]);
                    g_hit[gi] = true;
                    p_hit[pi] = true;
                    let (ci, cj) = (gs.class, ps.class);
                    let w = sim_of(s, ci, cj);
                    tp[ci] += w;
                    iou_sum[ci] += w * iou;
                    if ci != cj {
                        fn_[ci] += 1.0 - w;
                        if !void_dominated {
                            fp[cj] += 1.0 - w;
                        }
                    }
                }
            }
            if !p_hit[pi] && !void_dominated {
                fp[ps.class] += 1.0;
            }
        }
        for (gi, gs) in gt.segments().iter().enumerate() {
            if !g_hit[gi] {
                fn_[gs.class] += 1.0;
            }
        }
    }
    let per: Vec<Option<OracleQuality>> = (0..n)
        .map(|c| {
            if tp[c] + fp[c] + fn_[c] <= 0.0 {
                return None;
            }
            let sq = if tp[c] > 0.0 { iou_sum[c] / tp[c] } else { 0.0 };
            let rq = tp[c] / (tp[c] + 0.5 * fp[c] + 0.5 * fn_[c]);
            Some(OracleQuality { pq: sq * rq, sq, rq })
        })
        .collect();
    let pqs: Vec<f64> = per.iter().flatten().map(|q| q.pq).collect();
    let all = (!pqs.is_empty()).then(|| pqs.iter().sum::<f64>() / pqs.len() as f64);
    (per, all)
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

pub fn all_close(a: &[Option<f64>], b: &[Option<f64>], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, tol))
}

// ---------------------------------------------------------------- wordnet

/// Random single-rooted hypernym DAG. Node 0 is the root; every other node
/// has one to three parents among the earlier nodes. Offsets are shuffled so
/// offset order and insertion order disagree.
pub struct Dag {
    pub offsets: Vec<u32>,
    pub parents: Vec<Vec<usize>>,
}

pub fn random_dag(rng: &mut impl Rng, n: usize) -> Dag {
    let mut offsets: Vec<u32> = (0..n as u32).map(|k| 1000 + 17 * k).collect();
    offsets[1..].shuffle(rng);
    let parents = (0..n)
        .map(|k| {
            if k == 0 {
                return Vec::new();
            }
            let want = match rng.gen_range(0..10) {
                0..=6 => 1,
                7..=8 => 2,
                _ => 3,
            };
            let mut ps: Vec<usize> = (0..k).collect();
            ps.shuffle(rng);
            ps.truncate(want.min(k));
            ps
        })
        .collect();
    Dag { offsets, parents }
}

impl Dag {
    /// `(index.noun, data.noun)` in WordNet grind format.
    pub fn grind(&self) -> (String, String) {
        let mut data = String::new();
        let mut index = Vec::new();
        for (k, ps) in self.parents.iter().enumerate() {
            let ptrs: String = ps.iter().map(|&p| format!(" @ {:08} n 0000", self.offsets[p])).collect();
            data.push_str(&format!(
                "{:08} 03 n 01 w{k} 0 {:03}{ptrs} | node {k}\n",
                self.offsets[k],
                ps.len()
            ));
            index.push(format!("w{k} n 1 0 1 0 {:08}\n", self.offsets[k]));
        }
        index.sort();
        (index.concat(), data)
    }

    /// Every upward path from `k`, as node lists starting at `k`.
    fn paths(&self, k: usize) -> Vec<Vec<usize>> {
        if self.parents[k].is_empty() {
            return vec![vec![k]];
        }
        let mut out = Vec::new();
        for &p in &self.parents[k] {
            for mut tail in self.paths(p) {
                tail.insert(0, k);
                out.push(tail);
            }
        }
        out
    }

    /// Minimum edge distance from `k` to each of its ancestors (itself at 0).
    fn distances(&self, k: usize) -> Vec<Option<u32>> {
        let mut d = vec![None; self.offsets.len()];
        for path in self.paths(k) {
            for (steps, &node) in path.iter().enumerate() {
                let s = steps as u32;
                if d[node].map_or(true, |x| s < x) {
                    d[node] = Some(s);
                }
            }
        }
        d
    }

    /// Nodes on the shortest path to the root, root counted as 1.
    pub fn depth(&self, k: usize) -> u32 {
        self.paths(k).iter().map(|p| p.len() as u32).min().unwrap()
    }

    /// `(distance, lcs node, path, wup)` by enumeration of all paths.
    pub fn oracle(&self, a: usize, b: usize) -> (u32, usize, f64, f64) {
        let (da, db) = (self.distances(a), self.distances(b));
        let mut best: Option<(u32, u32, usize)> = None;
        for h in 0..self.offsets.len() {
            if let (Some(x), Some(y)) = (da[h], db[h]) {
                let key = (x + y, self.offsets[h], h);
                if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
        let (d, _, h) = best.expect("common root");
        let dl = 2.0 * self.depth(h) as f64;
        (d, h, 1.0 / (1.0 + d as f64), dl / (d as f64 + dl))
    }
}
