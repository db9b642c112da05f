//! Little-endian helpers shared by the binary containers (`SPMX`, `QVSM`,
//! `SVDM`, `LINM`, `KNNM`).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("corrupt stream: truncated while reading {what} at byte {offset}")]
    Truncated { what: &'static str, offset: usize },
    #[error("corrupt stream: bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("corrupt stream: unsupported version {0}")]
    Version(u8),
    #[error("corrupt stream: {0}")]
    Invalid(String),
    #[error("corrupt stream: {0} trailing bytes")]
    Trailing(usize),
}

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u8) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(magic);
        buf.push(version);
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, leaving the cursor just past them.
    pub fn open(data: &'a [u8], magic: &[u8; 4], version: u8) -> Result<Self, DecodeError> {
        let mut r = Self { data, pos: 0 };
        let found: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if &found != magic {
            return Err(DecodeError::BadMagic {
                expected: *magic,
                found,
            });
        }
        let v = r.u8("version")?;
        if v != version {
            return Err(DecodeError::Version(v));
        }
        Ok(r)
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or(DecodeError::Truncated {
                what,
                offset: self.pos,
            })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, DecodeError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &'static str) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// Reads a length field and checks that `len * elem_size` bytes are still
    /// available, so hostile lengths cannot trigger huge allocations.
    pub fn len(&mut self, what: &'static str, elem_size: usize) -> Result<usize, DecodeError> {
        let n = self.u64(what)?;
        self.check_len(n, what, elem_size)
    }

    pub fn check_len(
        &self,
        n: u64,
        what: &'static str,
        elem_size: usize,
    ) -> Result<usize, DecodeError> {
        let n = usize::try_from(n).map_err(|_| DecodeError::Invalid(format!("{what} overflows")))?;
        match n.checked_mul(elem_size) {
            Some(bytes) if bytes <= self.remaining() => Ok(n),
            _ => Err(DecodeError::Truncated {
                what,
                offset: self.pos,
            }),
        }
    }

    pub fn u32_vec(&mut self, n: usize, what: &'static str) -> Result<Vec<u32>, DecodeError> {
        let raw = self.take(n.checked_mul(4).ok_or(DecodeError::Truncated { what, offset: self.pos })?, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u64_vec(&mut self, n: usize, what: &'static str) -> Result<Vec<u64>, DecodeError> {
        let raw = self.take(n.checked_mul(8).ok_or(DecodeError::Truncated { what, offset: self.pos })?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn f64_vec(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, DecodeError> {
        let raw = self.take(n.checked_mul(8).ok_or(DecodeError::Truncated { what, offset: self.pos })?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_and_version_checked() {
        let bytes = Writer::new(b"ABCD", 1).finish();
        assert!(Reader::open(&bytes, b"ABCD", 1).is_ok());
        assert!(matches!(
            Reader::open(&bytes, b"ABCE", 1),
            Err(DecodeError::BadMagic { .. })
        ));
        assert_eq!(
            Reader::open(&bytes, b"ABCD", 2).err(),
            Some(DecodeError::Version(1))
        );
        assert!(matches!(
            Reader::open(&bytes[..3], b"ABCD", 1),
            Err(DecodeError::Truncated { .. })
        ));
    }

    #[test]
    fn hostile_length_rejected() {
        let mut w = Writer::new(b"ABCD", 1);
        w.u64(u64::MAX / 2);
        let bytes = w.finish();
        let mut r = Reader::open(&bytes, b"ABCD", 1).unwrap();
        assert!(r.len("n", 8).is_err());
    }
}
