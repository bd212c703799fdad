//! The compressed `counts` string used by COCO RLE annotations.
//!
//! Each count (after the third, as a difference to the count two places
//! earlier) is written as little-endian groups of five bits, one printable
//! character per group: `48 + bits`, with `0x20` set while more groups follow.
//! The last group is sign-extended from bit 4 on decode.

use super::rle::RleMask;
use super::DataError;

pub fn coco_counts_encode(mask: &RleMask) -> String {
    encode_counts(mask.counts())
}

pub fn encode_counts(counts: &[u32]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut ch = (x & 0x1f) as u8;
            x >>= 5;
            let more = if ch & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                ch |= 0x20;
            }
            out.push((ch + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}

/// Decodes the raw run lengths without checking them against a mask size.
pub fn decode_counts(text: &str) -> Result<Vec<u32>, DataError> {
    let bytes = text.as_bytes();
    let mut counts: Vec<u32> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut shift = 0u32;
        loop {
            let b = bytes[p];
            if !(48..=111).contains(&b) {
                return Err(DataError::BadChar {
                    position: p,
                    byte: b,
                });
            }
            let ch = (b - 48) as i64;
            if shift > 58 {
                return Err(DataError::Overflow(p));
            }
            x |= (ch & 0x1f) << shift;
            shift += 5;
            p += 1;
            if ch & 0x20 == 0 {
                if ch & 0x10 != 0 && shift < 64 {
                    x |= -1i64 << shift;
                }
                break;
            }
            if p >= bytes.len() {
                return Err(DataError::BadCounts("string ends inside a count".into()));
            }
        }
        let k = counts.len();
        if k > 2 {
            x += counts[k - 2] as i64;
        }
        let c = u32::try_from(x).map_err(|_| DataError::Overflow(p - 1))?;
        counts.push(c);
    }
    Ok(counts)
}

/// Decodes and validates against the mask size; the counts must already be
/// canonical.
pub fn coco_counts_decode(text: &str, height: u32, width: u32) -> Result<RleMask, DataError> {
    RleMask::new(height, width, decode_counts(text)?)
}
