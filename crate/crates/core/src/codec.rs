//! Little-endian primitives shared by the binary file formats.

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{MeraError, Result};
use crate::numcore::Matrix;

/// Cursor over an untrusted byte buffer that reports offsets on failure.
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(MeraError::format(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.remaining()
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let at = self.pos;
        let got = self.take(8, "magic")?;
        if got != magic {
            return Err(MeraError::format(
                at,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    std::str::from_utf8(magic).unwrap_or("?")
                ),
            ));
        }
        Ok(())
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, what)?))
    }

    pub fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let at = self.pos;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| MeraError::format(at, format!("{what} is not valid UTF-8")))
    }

    /// Reads `rows * cols` little-endian `f32` values and widens them.
    pub fn f32_matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        if cols == 0 {
            return Err(MeraError::format(
                self.pos,
                format!("{what} has zero columns"),
            ));
        }
        let count = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| MeraError::format(self.pos, format!("{what} size overflows")))?;
        let at = self.pos;
        let bytes = self.take(count, what)?;
        let mut data = Vec::with_capacity(rows * cols);
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = LittleEndian::read_f32(chunk);
            if !v.is_finite() {
                return Err(MeraError::format(
                    at + 4 * i,
                    format!("non-finite value in {what}"),
                ));
            }
            data.push(v as f64);
        }
        Matrix::new(rows, cols, data)
    }
}

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        let mut b = [0u8; 4];
        LittleEndian::write_u32(&mut b, v);
        self.buf.extend_from_slice(&b);
    }

    pub fn len_u32(&mut self, n: usize) -> Result<()> {
        let v = u32::try_from(n)
            .map_err(|_| MeraError::Dimension(format!("{n} does not fit in 32 bits")))?;
        self.u32(v);
        Ok(())
    }

    pub fn string(&mut self, s: &str) -> Result<()> {
        self.len_u32(s.len())?;
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    /// Narrows every value to `f32`.
    pub fn f32_values(&mut self, m: &Matrix) {
        let mut b = [0u8; 4];
        for &v in m.data() {
            LittleEndian::write_f32(&mut b, v as f32);
            self.buf.extend_from_slice(&b);
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}
