//! Little-endian binary container of named records, shared by model
//! checkpoints (`MQTM`) and dataset call files (`MQTD`).
//!
//! ```text
//! magic      [u8; 4]
//! version    u32
//! header_len u32, header: UTF-8 (JSON)
//! n_records  u32
//! record*    name_len u32, name: UTF-8, dtype u8, rank u8, dims u64 * rank, payload
//! ```
//!
//! dtype codes: 0 = f32, 1 = f64, 2 = u32, 3 = UTF-8 text (rank 1, dims = [byte length]).

use numcore::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum RecordData {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
    U32 { shape: Vec<usize>, data: Vec<u32> },
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub data: RecordData,
}

impl Record {
    pub fn f32(name: impl Into<String>, t: Tensor<f32>) -> Self {
        Self {
            name: name.into(),
            data: RecordData::F32(t),
        }
    }

    pub fn f64(name: impl Into<String>, t: Tensor<f64>) -> Self {
        Self {
            name: name.into(),
            data: RecordData::F64(t),
        }
    }

    pub fn u32(name: impl Into<String>, data: Vec<u32>) -> Self {
        Self {
            name: name.into(),
            data: RecordData::U32 {
                shape: vec![data.len()],
                data,
            },
        }
    }

    pub fn text(name: impl Into<String>, s: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            data: RecordData::Text(s.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub version: u32,
    pub header: String,
    pub records: Vec<Record>,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    fn missing(&self, name: &str) -> Error {
        Error::format(String::from_utf8_lossy(&self.magic), format!("missing record `{name}`"))
    }

    pub fn f32(&self, name: &str) -> Result<&Tensor<f32>> {
        match self.get(name).map(|r| &r.data) {
            Some(RecordData::F32(t)) => Ok(t),
            Some(_) => Err(Error::format(name, "expected f32 record")),
            None => Err(self.missing(name)),
        }
    }

    pub fn f64(&self, name: &str) -> Result<&Tensor<f64>> {
        match self.get(name).map(|r| &r.data) {
            Some(RecordData::F64(t)) => Ok(t),
            Some(_) => Err(Error::format(name, "expected f64 record")),
            None => Err(self.missing(name)),
        }
    }

    pub fn u32(&self, name: &str) -> Result<&[u32]> {
        match self.get(name).map(|r| &r.data) {
            Some(RecordData::U32 { data, .. }) => Ok(data),
            Some(_) => Err(Error::format(name, "expected u32 record")),
            None => Err(self.missing(name)),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.get(name).map(|r| &r.data) {
            Some(RecordData::Text(s)) => Ok(s),
            Some(_) => Err(Error::format(name, "expected text record")),
            None => Err(self.missing(name)),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_str(&mut out, &self.header);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            put_str(&mut out, &r.name);
            let (code, shape): (u8, Vec<usize>) = match &r.data {
                RecordData::F32(t) => (0, t.shape().to_vec()),
                RecordData::F64(t) => (1, t.shape().to_vec()),
                RecordData::U32 { shape, .. } => (2, shape.clone()),
                RecordData::Text(s) => (3, vec![s.len()]),
            };
            out.push(code);
            out.push(shape.len() as u8);
            for d in &shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            match &r.data {
                RecordData::F32(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                RecordData::F64(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                RecordData::U32 { data, .. } => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                RecordData::Text(s) => out.extend_from_slice(s.as_bytes()),
            }
        }
        out
    }

    /// Parse `bytes`, checking the magic and that the version is supported.
    pub fn decode(bytes: &[u8], magic: [u8; 4], supported: &[u32]) -> Result<Self> {
        let ctx = String::from_utf8_lossy(&magic).into_owned();
        let mut cur = Cursor { bytes, pos: 0, ctx: &ctx };
        let got = cur.take(4)?;
        if got != magic {
            return Err(Error::format(&ctx, format!("bad magic {:?}", String::from_utf8_lossy(got))));
        }
        let version = cur.u32()?;
        if !supported.contains(&version) {
            return Err(Error::format(&ctx, format!("unsupported version {version}")));
        }
        let header = cur.string()?;
        let n = cur.u32()? as usize;
        let mut records = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name = cur.string()?;
            let code = cur.u8()?;
            let rank = cur.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cur.u64()? as usize);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let numel = numel.ok_or_else(|| Error::format(&ctx, format!("record `{name}` has overflowing shape")))?;
            let data = match code {
                0 => {
                    let raw = cur.take(numel.saturating_mul(4))?;
                    let v = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                    RecordData::F32(Tensor::new(shape, v)?)
                }
                1 => {
                    let raw = cur.take(numel.saturating_mul(8))?;
                    let v = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                    RecordData::F64(Tensor::new(shape, v)?)
                }
                2 => {
                    let raw = cur.take(numel.saturating_mul(4))?;
                    let data = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
                    RecordData::U32 { shape, data }
                }
                3 => {
                    if rank != 1 {
                        return Err(Error::format(&ctx, format!("text record `{name}` must have rank 1")));
                    }
                    let raw = cur.take(numel)?;
                    let s = std::str::from_utf8(raw)
                        .map_err(|_| Error::format(&ctx, format!("record `{name}` is not UTF-8")))?;
                    RecordData::Text(s.to_string())
                }
                other => return Err(Error::format(&ctx, format!("record `{name}` has unknown dtype {other}"))),
            };
            records.push(Record { name, data });
        }
        if cur.pos != bytes.len() {
            return Err(Error::format(&ctx, format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(Self {
            magic,
            version,
            header,
            records,
        })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    ctx: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.ctx,
                format!("truncated: need {n} bytes at offset {}, have {}", self.pos, self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        std::str::from_utf8(raw)
            .map(str::to_string)
            .map_err(|_| Error::format(self.ctx, "string is not UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        Container {
            magic: *b"TEST",
            version: 1,
            header: "{\"a\":1}".into(),
            records: vec![
                Record::f32("w", Tensor::new(vec![2, 2], vec![1.0, -0.5, f32::MIN_POSITIVE, 3.25]).unwrap()),
                Record::f64("t", Tensor::new(vec![1, 3], vec![0.1, 0.2, 0.3]).unwrap()),
                Record::u32("labels", vec![0, 5, 2]),
                Record::text("words", "hello world"),
            ],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.encode();
        let back = Container::decode(&bytes, *b"TEST", &[1]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn truncation_detected_everywhere() {
        let bytes = sample().encode();
        for cut in 0..bytes.len() {
            assert!(Container::decode(&bytes[..cut], *b"TEST", &[1]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn wrong_magic_and_version() {
        let bytes = sample().encode();
        assert!(Container::decode(&bytes, *b"NOPE", &[1]).is_err());
        assert!(Container::decode(&bytes, *b"TEST", &[2]).is_err());
    }
}
