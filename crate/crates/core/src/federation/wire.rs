//! Big-endian, length-prefixed primitives for message payloads.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigUint;

use crate::error::{bail, Result};
use crate::paillier::Ciphertext;

/// Upper bound on any declared element count, against hostile lengths.
const MAX_LEN: usize = 1 << 28;

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn len(&mut self, n: usize) {
        self.u32(n as u32);
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.buf.extend_from_slice(b);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn biguint(&mut self, v: &BigUint) {
        self.bytes(&v.to_bytes_be());
    }

    pub fn cipher(&mut self, c: &Ciphertext) {
        c.write_to(&mut self.buf);
    }

    pub fn bits(&mut self, b: &BitVec) {
        self.u32(b.len as u32);
        self.buf.extend_from_slice(&b.bytes);
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            bail!(Decode, "truncated payload: need {n} bytes at offset {}", self.pos);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            bail!(Decode, "{} trailing bytes", self.buf.len() - self.pos);
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => bail!(Decode, "invalid bool byte {b}"),
        }
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn len(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > MAX_LEN {
            bail!(Decode, "declared length {n} too large");
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| crate::Error::Decode("invalid utf-8".into()))
    }

    pub fn biguint(&mut self) -> Result<BigUint> {
        Ok(BigUint::from_bytes_be(self.bytes()?))
    }

    pub fn cipher(&mut self) -> Result<Ciphertext> {
        let (c, used) = Ciphertext::read_from(&self.buf[self.pos..])?;
        self.pos += used;
        Ok(c)
    }

    pub fn bits(&mut self) -> Result<BitVec> {
        let len = self.u32()? as usize;
        if len > MAX_LEN {
            bail!(Decode, "bit vector of {len} bits too large");
        }
        let bytes = self.take(len.div_ceil(8))?.to_vec();
        if len % 8 != 0 && bytes.last().is_some_and(|b| b >> (len % 8) != 0) {
            bail!(Decode, "bit vector has padding bits set");
        }
        Ok(BitVec { len, bytes })
    }

    /// Read a count-prefixed sequence.
    pub fn seq<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        let n = self.len()?;
        let mut out = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            out.push(item(self)?);
        }
        Ok(out)
    }
}

/// Fixed-length bit vector, least significant bit first within each byte.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitVec {
    len: usize,
    bytes: Vec<u8>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self { len, bytes: vec![0; len.div_ceil(8)] }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut b = Self::zeros(len);
        for i in 0..len {
            if f(i) {
                b.set(i, true);
            }
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.bytes[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit {i} out of range");
        if v {
            self.bytes[i / 8] |= 1 << (i % 8);
        } else {
            self.bytes[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_roundtrip() {
        let mut w = Writer::new();
        w.u8(7);
        w.bool(true);
        w.u16(513);
        w.u32(70000);
        w.u64(u64::MAX - 3);
        w.f64(-0.125);
        w.str("guest");
        w.biguint(&BigUint::from(123456789u64));
        let bits = BitVec::from_fn(11, |i| i % 3 == 0);
        w.bits(&bits);
        let buf = w.finish();
        let mut r = Reader::new(&buf);
        assert_eq!(r.u8().unwrap(), 7);
        assert!(r.bool().unwrap());
        assert_eq!(r.u16().unwrap(), 513);
        assert_eq!(r.u32().unwrap(), 70000);
        assert_eq!(r.u64().unwrap(), u64::MAX - 3);
        assert_eq!(r.f64().unwrap(), -0.125);
        assert_eq!(r.str().unwrap(), "guest");
        assert_eq!(r.biguint().unwrap(), BigUint::from(123456789u64));
        assert_eq!(r.bits().unwrap(), bits);
        r.done().unwrap();
    }

    #[test]
    fn truncation_is_an_error() {
        let mut w = Writer::new();
        w.bytes(&[1, 2, 3]);
        let buf = w.finish();
        assert!(Reader::new(&buf[..5]).bytes().is_err());
        assert!(Reader::new(&[0xff, 0xff, 0xff, 0xff]).bytes().is_err());
    }

    #[test]
    fn bitvec_ops() {
        let mut b = BitVec::zeros(10);
        b.set(9, true);
        b.set(0, true);
        assert_eq!(b.count_ones(), 2);
        assert_eq!(b.ones().collect::<Vec<_>>(), vec![0, 9]);
        assert!(!b.get(10));
        // padding bits must be clear
        assert!(Reader::new(&[0, 0, 0, 3, 0xff]).bits().is_err());
    }
}
