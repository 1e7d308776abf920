//! Little-endian primitives shared by the binary file formats.

use crate::error::{Error, Result};

pub(crate) struct ByteReader<'a> {
    what: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(what: &'static str, buf: &'a [u8]) -> Self {
        Self { what, buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated {
                what: self.what,
                offset: self.pos,
                needed: n,
                expected: self.pos + n,
                actual: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// `n` little-endian f32 values, widened to f64.
    pub fn f32_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    pub fn f64_into(&mut self, dst: &mut [f64]) -> Result<()> {
        let bytes = self.take(dst.len() * 8)?;
        for (d, c) in dst.iter_mut().zip(bytes.chunks_exact(8)) {
            *d = f64::from_le_bytes(c.try_into().unwrap());
        }
        Ok(())
    }

    /// u16 length prefix followed by UTF-8 bytes.
    pub fn short_string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::Format {
            what: self.what,
            message: format!("id is not UTF-8: {e}"),
        })
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.array::<4>()?;
        if &got != expected {
            return Err(Error::Format {
                what: self.what,
                message: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&got),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let v = self.u32()?;
        if v != expected {
            return Err(Error::Format {
                what: self.what,
                message: format!("unsupported version {v}, expected {expected}"),
            });
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format {
                what: self.what,
                message: format!("{} trailing bytes after offset {}", self.buf.len() - self.pos, self.pos),
            });
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u128(&mut self, v: u128) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64_slice(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn f32_slice(&mut self, vs: &[f64]) {
        for &v in vs {
            self.bytes(&(v as f32).to_le_bytes());
        }
    }

    pub fn count_u16(&mut self, what: &'static str, n: usize) -> Result<()> {
        let v = u16::try_from(n).map_err(|_| Error::Format {
            what,
            message: format!("count {n} exceeds u16 range"),
        })?;
        self.u16(v);
        Ok(())
    }

    pub fn short_string(&mut self, what: &'static str, s: &str) -> Result<()> {
        self.count_u16(what, s.len())?;
        self.bytes(s.as_bytes());
        Ok(())
    }
}
