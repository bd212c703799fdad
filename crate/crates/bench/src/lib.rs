//! Deterministic inputs for the benchmarks.

use openmetrics::semantic::ClassRaster;
use openmetrics::{LabelSpec, Method, RleMask, SimilarityMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Blocky class raster: `block`-sized tiles of random classes.
pub fn class_raster(r: &mut impl Rng, w: u32, h: u32, classes: u32, block: u32) -> ClassRaster {
    let tiles_x = w.div_ceil(block);
    let tiles: Vec<u32> = (0..tiles_x * h.div_ceil(block)).map(|_| r.gen_range(0..classes)).collect();
    let ids = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| tiles[((y / block) * tiles_x + x / block) as usize])
        .collect();
    ClassRaster::new(w, h, ids).unwrap()
}

/// `pred` agrees with `gt` except on a `noise` share of pixels.
pub fn noisy_copy(r: &mut impl Rng, gt: &ClassRaster, classes: u32, noise: f64) -> ClassRaster {
    let ids = gt
        .ids()
        .iter()
        .map(|&g| if r.gen_bool(noise) { r.gen_range(0..classes) } else { g })
        .collect();
    ClassRaster::new(gt.width(), gt.height(), ids).unwrap()
}

/// Filled ellipse, column-major RLE.
pub fn ellipse(h: u32, w: u32, cx: f64, cy: f64, rx: f64, ry: f64) -> RleMask {
    let bits: Vec<bool> = (0..h * w)
        .map(|i| {
            let (x, y) = ((i / h) as f64, (i % h) as f64);
            ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0
        })
        .collect();
    RleMask::encode(&bits, h, w).unwrap()
}

pub fn random_sim(r: &mut impl Rng, n: usize) -> SimilarityMatrix {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
        for j in i + 1..n {
            let x = r.gen::<f64>() * 0.5;
            v[i * n + j] = x;
            v[j * n + i] = x;
        }
    }
    let labels = (0..n).map(|i| LabelSpec::named(i as u32, &format!("c{i}"))).collect();
    SimilarityMatrix::new(labels, Method::Path, v).unwrap()
}
