//! Big-endian IDX reader (MNIST/EMNIST layout).
//!
//! Images are IDX3 (`0x00000803`, dims n×rows×cols, unsigned bytes) and labels
//! are IDX1 (`0x00000801`, dim n). Pixels are scaled to [0, 1].

use std::path::Path;

use crate::data::Example;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            offset: self.pos as u64,
            message: "truncated header".into(),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated {what}: need {n} bytes from offset {}", self.pos),
            }),
        }
    }
}

fn expect_magic(c: &mut Cursor<'_>, want: u32) -> Result<()> {
    let got = c.u32()?;
    if got != want {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {got:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

/// Parse in-memory IDX3 image and IDX1 label buffers.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Vec<Example>> {
    let mut ic = Cursor { bytes: images, pos: 0 };
    expect_magic(&mut ic, IMAGES_MAGIC)?;
    let n = ic.u32()? as usize;
    let rows = ic.u32()? as usize;
    let cols = ic.u32()? as usize;

    let mut lc = Cursor { bytes: labels, pos: 0 };
    expect_magic(&mut lc, LABELS_MAGIC)?;
    let ln = lc.u32()? as usize;
    if ln != n {
        return Err(Error::Format {
            offset: 4,
            message: format!("label count {ln} does not match image count {n}"),
        });
    }

    let dim = rows * cols;
    let pixels = ic.take(n * dim, "image data")?;
    let label_bytes = lc.take(n, "label data")?;
    pixels
        .chunks_exact(dim.max(1))
        .take(n)
        .zip(label_bytes)
        .map(|(img, &label)| Example::new(img.iter().map(|&p| p as f64 / 255.0).collect(), label as usize))
        .collect()
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<Example>> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels)
}
