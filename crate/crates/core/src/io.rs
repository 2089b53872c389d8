//! Tensor interchange ("MGT1") and PGM heatmap export.
//!
//! MGT1 layout: ASCII magic `MGT1\n`, `ndim: u32 LE`, `dims: u32 LE × ndim`,
//! payload `f32 LE × prod(dims)` row-major. Nothing may follow the payload.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const TENSOR_MAGIC: &[u8; 5] = b"MGT1\n";

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub(crate) fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.buf.len() < n {
            return None;
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Some(head)
    }

    pub(crate) fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Option<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4)?)?;
        Some(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect(),
        )
    }
}

/// Serializes `t` as MGT1. Values are narrowed to `f32`.
pub fn write_tensor(t: &Tensor, out: &mut impl Write) -> Result<()> {
    out.write_all(TENSOR_MAGIC)?;
    out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(Error::Format(format!("value {v} does not fit in f32")));
        }
        out.write_all(&narrowed.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor(bytes: &[u8]) -> Result<Tensor> {
    if !bytes.starts_with(TENSOR_MAGIC) {
        return Err(Error::Format("missing MGT1 magic header".into()));
    }
    let mut r = ByteReader::new(&bytes[TENSOR_MAGIC.len()..]);
    let ndim = r.u32().ok_or_else(|| Error::Format("truncated ndim".into()))? as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format(format!("implausible ndim {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(r.u32().ok_or_else(|| Error::Format("truncated dims".into()))? as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("declared size overflows".into()))?;
    let data = r.f32s(count).ok_or_else(|| {
        Error::Format(format!(
            "declared {count} values but only {} payload bytes present",
            r.remaining()
        ))
    })?;
    if !r.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after payload", r.remaining())));
    }
    Tensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor(t, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(&fs::read(path)?)
}

/// Height, width and the per-pixel sum of absolute values over channels.
///
/// Rank 3 is read as CHW, rank 2 as HW, rank 1 as a single row.
pub fn spatial_magnitude(t: &Tensor) -> (usize, usize, Vec<f64>) {
    let (c, h, w) = match *t.shape() {
        [c, h, w] => (c, h, w),
        [h, w] => (1, h, w),
        [n] => (1, 1, n),
        _ => {
            let n = t.len();
            (1, 1, n)
        }
    };
    let plane = h * w;
    let mut out = vec![0.0; plane];
    for ch in 0..c {
        for (o, v) in out.iter_mut().zip(&t.data()[ch * plane..(ch + 1) * plane]) {
            *o += v.abs();
        }
    }
    (h, w, out)
}

/// Binary PGM (P5): per-pixel |·| channel sum, min-max scaled to 0–255.
/// A constant map renders as all zeros.
pub fn heatmap_pgm(t: &Tensor) -> Vec<u8> {
    let (h, w, mag) = spatial_magnitude(t);
    let lo = mag.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mag.iter().map(|&v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn save_heatmap(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, heatmap_pgm(t))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tensor_header_layout() {
        let t = Tensor::new(vec![1, 2], vec![1.5, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"MGT1\n");
        assert_eq!(&buf[5..9], &2u32.to_le_bytes());
        assert_eq!(&buf[9..13], &1u32.to_le_bytes());
        assert_eq!(&buf[13..17], &2u32.to_le_bytes());
        assert_eq!(&buf[17..21], &1.5f32.to_le_bytes());
        assert_eq!(buf.len(), 25);
    }

    #[test]
    fn corrupt_tensor_files() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        assert!(read_tensor(&buf[..buf.len() - 2]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_tensor(&extra).is_err());
        assert!(read_tensor(b"XXXX\n").is_err());
    }

    #[test]
    fn heatmap_scaling() {
        let t = Tensor::new(vec![2, 1, 3], vec![0.0, 1.0, -2.0, 0.0, 1.0, 0.0]).unwrap();
        let pgm = heatmap_pgm(&t);
        let header = b"P5\n3 1\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[0, 255, 255]);
    }

    proptest! {
        #[test]
        fn f32_values_round_trip(vals in prop::collection::vec(-1e6f32..1e6, 1..40)) {
            let t = Tensor::from_vec(vals.iter().map(|&v| v as f64).collect()).unwrap();
            let mut buf = Vec::new();
            write_tensor(&t, &mut buf).unwrap();
            prop_assert_eq!(read_tensor(&buf).unwrap(), t);
        }
    }
}
