//! SEGB: a minimal little-endian raster of 16- or 32-bit ids.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SEGB"
//!      4     1  version (1)
//!      5     1  flags (bit 0 set: 32-bit ids, clear: 16-bit ids)
//!      6     2  reserved, zero
//!      8     4  width  (u32 LE)
//!     12     4  height (u32 LE)
//!     16   w*h  ids, row-major, 2 or 4 bytes each (LE)
//! ```
//!
//! The all-ones id of the active width is the ignore/void sentinel.

use std::path::Path;

use super::DataError;

pub const MAGIC: &[u8; 4] = b"SEGB";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegbRaster {
    width: u32,
    height: u32,
    wide: bool,
    ids: Vec<u32>,
}

impl SegbRaster {
    pub fn new(width: u32, height: u32, wide: bool, ids: Vec<u32>) -> Result<Self, DataError> {
        let expected = width as usize * height as usize;
        if ids.len() != expected {
            return Err(DataError::ShapeMismatch(format!(
                "{} ids for a {width}x{height} raster",
                ids.len()
            )));
        }
        if !wide {
            if let Some(v) = ids.iter().find(|&&v| v > u16::MAX as u32) {
                return Err(DataError::ShapeMismatch(format!("id {v} does not fit in 16 bits")));
            }
        }
        Ok(SegbRaster {
            width,
            height,
            wide,
            ids,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_wide(&self) -> bool {
        self.wide
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.ids
    }

    /// The ignore/void id for this raster's id width.
    pub fn sentinel(&self) -> u32 {
        if self.wide {
            u32::MAX
        } else {
            u16::MAX as u32
        }
    }

    pub fn read(bytes: &[u8]) -> Result<Self, DataError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(DataError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(DataError::TruncatedPayload {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if bytes[4] != VERSION {
            return Err(DataError::BadVersion(bytes[4]));
        }
        let flags = bytes[5];
        if flags & !1 != 0 || bytes[6] != 0 || bytes[7] != 0 {
            return Err(DataError::BadHeader(format!(
                "flags {flags:#04x}, reserved {:#04x}{:02x}",
                bytes[6], bytes[7]
            )));
        }
        let wide = flags & 1 == 1;
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let unit = if wide { 4 } else { 2 };
        let expected = (width as usize)
            .checked_mul(height as usize)
            .and_then(|n| n.checked_mul(unit))
            .ok_or_else(|| DataError::BadHeader(format!("{width}x{height} raster too large")))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(DataError::TruncatedPayload {
                expected: HEADER_LEN + expected,
                found: bytes.len(),
            });
        }
        if payload.len() > expected {
            return Err(DataError::TrailingBytes(payload.len() - expected));
        }
        let ids = if wide {
            payload
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        } else {
            payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes(c.try_into().unwrap()) as u32)
                .collect()
        };
        Ok(SegbRaster {
            width,
            height,
            wide,
            ids,
        })
    }

    pub fn write(&self) -> Vec<u8> {
        let unit = if self.wide { 4 } else { 2 };
        let mut out = Vec::with_capacity(HEADER_LEN + self.ids.len() * unit);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(u8::from(self.wide));
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        if self.wide {
            for &v in &self.ids {
                out.extend_from_slice(&v.to_le_bytes());
            }
        } else {
            for &v in &self.ids {
                out.extend_from_slice(&(v as u16).to_le_bytes());
            }
        }
        out
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
        Self::read(&bytes).map_err(|e| e.in_file(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_file_is_eighteen_bytes() {
        let r = SegbRaster::new(1, 1, false, vec![7]).unwrap();
        let bytes = r.write();
        assert_eq!(bytes.len(), 18);
        assert_eq!(&bytes[..8], b"SEGB\x01\x00\x00\x00");
        assert_eq!(&bytes[16..], &[7, 0]);
        assert_eq!(SegbRaster::read(&bytes).unwrap(), r);
    }

    #[test]
    fn wide_ids() {
        let r = SegbRaster::new(2, 1, true, vec![70000, u32::MAX]).unwrap();
        let back = SegbRaster::read(&r.write()).unwrap();
        assert_eq!(back.ids(), &[70000, u32::MAX]);
        assert_eq!(back.sentinel(), u32::MAX);
    }

    #[test]
    fn narrow_rasters_reject_wide_values() {
        assert!(SegbRaster::new(1, 1, false, vec![70000]).is_err());
    }

    #[test]
    fn error_paths() {
        let good = SegbRaster::new(2, 2, false, vec![1, 2, 3, 4]).unwrap().write();
        assert!(matches!(SegbRaster::read(b"PNG\x00"), Err(DataError::BadMagic)));
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(SegbRaster::read(&v2), Err(DataError::BadVersion(2))));
        assert!(matches!(
            SegbRaster::read(&good[..good.len() - 1]),
            Err(DataError::TruncatedPayload { .. })
        ));
        assert!(matches!(SegbRaster::read(&good[..10]), Err(DataError::TruncatedPayload { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(SegbRaster::read(&long), Err(DataError::TrailingBytes(1))));
        let mut flags = good;
        flags[5] = 0x80;
        assert!(matches!(SegbRaster::read(&flags), Err(DataError::BadHeader(_))));
    }
}
