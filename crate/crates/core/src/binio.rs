//! Little-endian framing shared by the checkpoint and record containers.

use sha2::{Digest, Sha256};

pub(crate) const DIGEST_LEN: usize = 32;

#[derive(Debug)]
pub(crate) enum BinError {
    Truncated,
    Malformed(String),
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], at: usize) -> Self {
        Self { bytes, at }
    }

    pub fn at_end(&self) -> bool {
        self.at == self.bytes.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], BinError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(BinError::Truncated)?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<u32, BinError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32, BinError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize, BinError> {
        self.u32().map(|v| v as usize)
    }

    pub fn text(&mut self) -> Result<&'a str, BinError> {
        let len = self.usize()?;
        std::str::from_utf8(self.take(len)?).map_err(|_| BinError::Malformed("text is not UTF-8".into()))
    }

    pub fn floats(&mut self, n: usize) -> Result<Vec<f32>, BinError> {
        let raw = self.take(n.checked_mul(4).ok_or(BinError::Truncated)?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    /// A count that must not exceed the bytes left when each item takes at
    /// least `item_size` bytes.
    pub fn count(&mut self, item_size: usize) -> Result<usize, BinError> {
        let n = self.usize()?;
        if n.saturating_mul(item_size) > self.bytes.len() - self.at {
            return Err(BinError::Truncated);
        }
        Ok(n)
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

pub(crate) fn put_text(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub(crate) fn seal(mut out: Vec<u8>) -> Vec<u8> {
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Splits off and checks the trailing digest.
pub(crate) fn unseal(bytes: &[u8]) -> Option<&[u8]> {
    if bytes.len() < DIGEST_LEN {
        return None;
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    (Sha256::digest(body).as_slice() == digest).then_some(body)
}
