//! Run-length encoded binary masks in column-major pixel order.
//!
//! `counts` alternates background and foreground runs, starting with
//! background; a mask that starts with foreground has a leading zero run.

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl RleMask {
    /// Validates the counts: they must sum to `height·width` and contain no
    /// zero run other than a leading one.
    pub fn new(height: u32, width: u32, counts: Vec<u32>) -> Result<Self, DataError> {
        check_sum(height, width, &counts)?;
        if let Some(k) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(DataError::BadCounts(format!("zero run at position {}", k + 1)));
        }
        if counts.len() == 1 && counts[0] == 0 {
            return Err(DataError::BadCounts("lone zero run".into()));
        }
        Ok(RleMask {
            height,
            width,
            counts,
        })
    }

    /// Accepts any counts with the right sum and rewrites them canonically
    /// (interior zero runs merged away).
    pub fn canonicalize(height: u32, width: u32, counts: &[u32]) -> Result<Self, DataError> {
        check_sum(height, width, counts)?;
        let mut out: Vec<u32> = Vec::with_capacity(counts.len());
        let mut fg = false;
        for &c in counts {
            if c > 0 {
                // a run continues the previous one if it has the same value
                let same = out.len() % 2 == usize::from(!fg) && !out.is_empty();
                if same {
                    *out.last_mut().unwrap() += c;
                } else {
                    if fg && out.is_empty() {
                        out.push(0);
                    }
                    out.push(c);
                }
            }
            fg = !fg;
        }
        Ok(RleMask {
            height,
            width,
            counts: out,
        })
    }

    /// Encodes a column-major bitmask (`bits[y + height·x]`).
    pub fn encode(bits: &[bool], height: u32, width: u32) -> Result<Self, DataError> {
        if bits.len() != height as usize * width as usize {
            return Err(DataError::ShapeMismatch(format!(
                "{} pixels for a {height}x{width} mask",
                bits.len()
            )));
        }
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in bits {
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        if !bits.is_empty() {
            counts.push(run);
        }
        Ok(RleMask {
            height,
            width,
            counts,
        })
    }

    /// Encodes a row-major bitmask (`bits[x + width·y]`).
    pub fn encode_row_major(bits: &[bool], height: u32, width: u32) -> Result<Self, DataError> {
        let (h, w) = (height as usize, width as usize);
        if bits.len() != h * w {
            return Err(DataError::ShapeMismatch(format!(
                "{} pixels for a {height}x{width} mask",
                bits.len()
            )));
        }
        let mut col = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                col[y + h * x] = bits[x + w * y];
            }
        }
        Self::encode(&col, height, width)
    }

    /// Decodes to a column-major bitmask.
    pub fn decode(&self) -> Vec<bool> {
        let mut bits = Vec::with_capacity(self.pixels());
        let mut fg = false;
        for &c in &self.counts {
            bits.extend(std::iter::repeat(fg).take(c as usize));
            fg = !fg;
        }
        bits
    }

    /// Decodes to a row-major bitmask.
    pub fn decode_row_major(&self) -> Vec<bool> {
        let (h, w) = (self.height as usize, self.width as usize);
        let col = self.decode();
        let mut out = vec![false; h * w];
        for x in 0..w {
            for y in 0..h {
                out[x + w * y] = col[y + h * x];
            }
        }
        out
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn size(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn pixels(&self) -> usize {
        self.height as usize * self.width as usize
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Tight `[x, y, w, h]` box around the foreground, or `None` when empty.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        let h = self.height as u64;
        let (mut x0, mut y0, mut x1, mut y1) = (u64::MAX, u64::MAX, 0, 0);
        let mut pos = 0u64;
        let mut any = false;
        for (i, &c) in self.counts.iter().enumerate() {
            let c = c as u64;
            if i % 2 == 1 && c > 0 {
                any = true;
                let (first, last) = (pos, pos + c - 1);
                let (xa, xb) = (first / h, last / h);
                x0 = x0.min(xa);
                x1 = x1.max(xb);
                if xa == xb {
                    y0 = y0.min(first % h);
                    y1 = y1.max(last % h);
                } else {
                    y0 = 0;
                    y1 = h - 1;
                }
            }
            pos += c;
        }
        any.then(|| {
            [
                x0 as f64,
                y0 as f64,
                (x1 - x0 + 1) as f64,
                (y1 - y0 + 1) as f64,
            ]
        })
    }

    /// Foreground pixels shared with `other`, by walking both run lists.
    pub fn intersection(&self, other: &RleMask) -> Result<u64, DataError> {
        if self.size() != other.size() {
            return Err(DataError::ShapeMismatch(format!(
                "mask sizes {:?} and {:?} differ",
                self.size(),
                other.size()
            )));
        }
        let (a, b) = (&self.counts, &other.counts);
        let (mut i, mut j) = (0usize, 0usize);
        let (mut ra, mut rb) = (0u64, 0u64);
        let mut inter = 0u64;
        loop {
            while ra == 0 {
                if i >= a.len() {
                    return Ok(inter);
                }
                ra = a[i] as u64;
                i += 1;
            }
            while rb == 0 {
                if j >= b.len() {
                    return Ok(inter);
                }
                rb = b[j] as u64;
                j += 1;
            }
            let step = ra.min(rb);
            // run index parity: odd index = foreground; i/j already advanced
            if i % 2 == 0 && j % 2 == 0 {
                inter += step;
            }
            ra -= step;
            rb -= step;
        }
    }

    /// Intersection over union; two empty masks give 0.
    pub fn iou(&self, other: &RleMask) -> Result<f64, DataError> {
        let inter = self.intersection(other)?;
        let union = self.area() + other.area() - inter;
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }
}

fn check_sum(height: u32, width: u32, counts: &[u32]) -> Result<(), DataError> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    let area = height as u64 * width as u64;
    if total != area {
        return Err(DataError::BadCounts(format!(
            "runs sum to {total}, mask has {area} pixels"
        )));
    }
    Ok(())
}
