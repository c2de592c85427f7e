//! MMTF binary feature files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "MMTF" | u32 version=1 | u32 layout (0=pooled, 1=spatial)
//! u32 rows | u32 C | u32 H | u32 W          (H = W = 1 for pooled)
//! rows × C × H × W float32 payload
//! ```
//!
//! Values are stored as f32 and widened to f64 in memory.

use super::{FeatureLayout, FeatureSet};
use crate::error::{Error, Result};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MMTF";
const VERSION: u32 = 1;

pub fn write_features(fs: &FeatureSet, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let layout = match fs.layout() {
        FeatureLayout::Pooled => 0u32,
        FeatureLayout::Spatial => 1u32,
    };
    w.write_all(&layout.to_le_bytes())?;
    let (h, width) = fs.grid();
    for dim in [fs.rows(), fs.channels(), h, width] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    for r in 0..fs.rows() {
        for &v in fs.row(r) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureSet> {
    let f = std::fs::File::open(path)?;
    let mut r = Reader {
        inner: BufReader::new(f),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"MMTF\""),
        });
    }
    let version = r.read_u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let layout = match r.read_u32("layout")? {
        0 => FeatureLayout::Pooled,
        1 => FeatureLayout::Spatial,
        other => {
            return Err(Error::Format {
                offset: 8,
                msg: format!("unknown layout code {other}"),
            })
        }
    };
    let rows = r.read_u32("rows")? as usize;
    let channels = r.read_u32("channels")? as usize;
    let height = r.read_u32("height")? as usize;
    let width = r.read_u32("width")? as usize;
    if layout == FeatureLayout::Pooled && (height != 1 || width != 1) {
        return Err(Error::Format {
            offset: 20,
            msg: format!("pooled layout requires H = W = 1, got {height}×{width}"),
        });
    }
    let count = rows * channels * height * width;
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 4];
    for _ in 0..count {
        r.read_exact(&mut buf, "float payload")?;
        data.push(f32::from_le_bytes(buf) as f64);
    }
    // trailing bytes are a format error too
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(Error::Format {
            offset: r.offset,
            msg: "trailing bytes after declared payload".into(),
        });
    }
    FeatureSet::new(layout, rows, channels, height, width, data).map_err(|e| Error::Format {
        offset: 7,
        msg: e.to_string(),
    })
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::Format {
                offset: self.offset,
                msg: format!("short read while reading {what}"),
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf, what)?;
        Ok(u32::from_le_bytes(buf))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f32_exact(v: f64) -> f64 {
        v as f32 as f64
    }

    #[test]
    fn header_echo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.mmtf");
        let fs = FeatureSet::new(
            FeatureLayout::Pooled,
            3,
            8,
            1,
            1,
            (0..24).map(|i| f32_exact(i as f64 * 0.5)).collect(),
        )
        .unwrap();
        write_features(&fs, &path).unwrap();
        let loaded = load_features(&path).unwrap();
        assert_eq!(loaded.rows(), 3);
        assert_eq!(loaded.channels(), 8);
        assert_eq!(loaded.layout(), FeatureLayout::Pooled);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spatial.mmtf");
        let fs = FeatureSet::new(
            FeatureLayout::Spatial,
            2,
            4,
            2,
            2,
            (0..32).map(|i| f32_exact((i as f64).sin())).collect(),
        )
        .unwrap();
        write_features(&fs, &path).unwrap();
        let loaded = load_features(&path).unwrap();
        assert_eq!(loaded, fs);
        // file bytes are stable across a second write
        let path2 = dir.path().join("spatial2.mmtf");
        write_features(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn truncated_file_reports_exact_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.mmtf");
        let fs = FeatureSet::new(FeatureLayout::Pooled, 2, 4, 1, 1, vec![1.0; 8]).unwrap();
        write_features(&fs, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // drop the last float: payload starts at 28, 8 floats = 32 bytes
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match load_features(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 28 + 7 * 4),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mmtf");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_features(&path),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}
