//! Shared binary layout: 8-byte magic, u32 version, u64 header length, a
//! UTF-8 JSON header, then little-endian f64 values.

use std::io::Write;

use crate::error::{CoreError, Result};

pub fn write_container<W: Write>(
    w: &mut W,
    magic: &[u8; 8],
    version: u32,
    header: &[u8],
    arrays: &[&[f64]],
) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(header)?;
    let mut buf = Vec::with_capacity(arrays.iter().map(|a| a.len() * 8).sum());
    for a in arrays {
        for v in *a {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

/// Cursor over a container's bytes that reports truncation by offset.
pub struct ContainerReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ContainerReader<'a> {
    /// Checks magic and version and returns the raw header.
    pub fn open(bytes: &'a [u8], magic: &[u8; 8], version: u32, what: &'static str) -> Result<(Self, &'a [u8])> {
        let mut r = Self { bytes, pos: 0 };
        let m = r.take(8)?;
        if m != magic {
            return Err(CoreError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let found = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if found != version {
            return Err(CoreError::Version {
                what,
                found,
                expected: version,
            });
        }
        let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| CoreError::Format("header length overflows".into()))?;
        let header = r.take(len)?;
        Ok((r, header))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CoreError::Truncated {
                offset: self.bytes.len() as u64,
                needed: (n - available) as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count.checked_mul(8).ok_or_else(|| CoreError::Format("array too large".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(CoreError::Format(format!(
                "{} trailing bytes after payload at offset {}",
                self.bytes.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let mut buf = Vec::new();
        write_container(&mut buf, b"TESTTEST", 3, b"{}", &[&[1.0, -2.5], &[f64::MIN_POSITIVE]]).unwrap();
        buf
    }

    #[test]
    fn round_trip() {
        let buf = sample();
        let (mut r, h) = ContainerReader::open(&buf, b"TESTTEST", 3, "test").unwrap();
        assert_eq!(h, b"{}");
        assert_eq!(r.f64s(3).unwrap(), vec![1.0, -2.5, f64::MIN_POSITIVE]);
        r.finish().unwrap();
    }

    #[test]
    fn version_and_truncation_errors() {
        let buf = sample();
        let err = ContainerReader::open(&buf, b"TESTTEST", 4, "test").err().unwrap();
        assert!(err.to_string().contains('3') && err.to_string().contains('4'), "{err}");
        let cut = &buf[..buf.len() - 5];
        let (mut r, _) = ContainerReader::open(cut, b"TESTTEST", 3, "test").unwrap();
        match r.f64s(3) {
            Err(CoreError::Truncated { offset, needed }) => {
                assert_eq!(offset, cut.len() as u64);
                assert_eq!(needed, 5);
            }
            other => panic!("{other:?}"),
        }
        assert!(ContainerReader::open(&buf, b"OTHERMAG", 3, "test").is_err());
    }
}
