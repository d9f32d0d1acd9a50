//! Append-only binary cache of sampled QFI matrices.
//!
//! Layout: the 8-byte magic `GMCACHE1`, a little-endian `u32` length, the
//! header as JSON, then fixed-width little-endian records
//!
//! ```text
//! counter u64 | status u8 | has_phases u8 | w_sms w_tms w_disp f64
//! | phases [f64; 2n] | qfi [f64; d*d], row-major
//! ```
//!
//! with `n` channel modes and `d` parameters taken from the header. Failed
//! samples have status 1 and a NaN matrix.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use gaussmetric::channel::ChannelPoint;
use gaussmetric::metric::{CachedSample, SampleCache};
use gaussmetric::probe::{ResourceSplit, SamplingPolicy, SAMPLER_VERSION};
use gaussmetric::Error;
use nalgebra::DMatrix;
use serde::Serialize;

pub const MAGIC: &[u8; 8] = b"GMCACHE1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheHeader {
    pub sampler_version: u32,
    pub channel: ChannelPoint,
    pub budget: f64,
    pub seed: u64,
    pub policy: SamplingPolicy,
    pub labels: Vec<String>,
    pub epsilon: f64,
}

impl CacheHeader {
    pub fn new(
        channel: ChannelPoint,
        budget: f64,
        seed: u64,
        policy: SamplingPolicy,
        labels: Vec<String>,
        epsilon: f64,
    ) -> Self {
        Self { sampler_version: SAMPLER_VERSION, channel, budget, seed, policy, labels, epsilon }
    }

    fn bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("header serializes")
    }

    fn record_width(&self) -> usize {
        let n = self.channel.channel_modes();
        let d = self.labels.len();
        8 + 1 + 1 + 8 * (3 + 2 * n + d * d)
    }
}

#[derive(Debug)]
pub enum CacheError {
    Io(PathBuf, std::io::Error),
    /// Not a cache file, or written for a different run.
    Mismatch(PathBuf, String),
}

impl std::fmt::Display for CacheError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CacheError::Io(p, e) => write!(f, "cache {}: {e}", p.display()),
            CacheError::Mismatch(p, m) => write!(f, "cache {}: {m}", p.display()),
        }
    }
}

#[derive(Debug)]
pub struct FileCache {
    path: PathBuf,
    file: File,
    header: CacheHeader,
    records: BTreeMap<u64, CachedSample>,
}

impl FileCache {
    /// Opens `path`, creating it if missing or empty. An existing file must
    /// carry exactly `header`. A torn record at the end is cut off.
    pub fn open(path: &Path, header: CacheHeader) -> Result<Self, CacheError> {
        let io = |e| CacheError::Io(path.to_path_buf(), e);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io)?;
        let mut data = Vec::new();
        file.read_to_end(&mut data).map_err(io)?;
        let expected = header.bytes();
        let mut records = BTreeMap::new();
        if data.is_empty() {
            file.write_all(MAGIC).map_err(io)?;
            file.write_all(&(expected.len() as u32).to_le_bytes()).map_err(io)?;
            file.write_all(&expected).map_err(io)?;
            file.flush().map_err(io)?;
        } else {
            let mismatch = |m: String| CacheError::Mismatch(path.to_path_buf(), m);
            if data.len() < 12 || &data[..8] != MAGIC {
                return Err(mismatch("not a GMCACHE1 file".into()));
            }
            let len = u32::from_le_bytes(data[8..12].try_into().expect("4 bytes")) as usize;
            let stored = data.get(12..12 + len).ok_or_else(|| mismatch("truncated header".into()))?;
            if stored != expected.as_slice() {
                return Err(mismatch(format!(
                    "header mismatch: file has {}, this run needs {}",
                    String::from_utf8_lossy(stored),
                    String::from_utf8_lossy(&expected)
                )));
            }
            let width = header.record_width();
            let body = &data[12 + len..];
            let whole = body.len() / width * width;
            for chunk in body[..whole].chunks_exact(width) {
                let s = decode(chunk, &header);
                records.insert(s.counter, s);
            }
            if whole < body.len() {
                file.set_len((12 + len + whole) as u64).map_err(io)?;
                file.seek(SeekFrom::End(0)).map_err(io)?;
            }
        }
        Ok(Self { path: path.to_path_buf(), file, header, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn decode(chunk: &[u8], header: &CacheHeader) -> CachedSample {
    let n = header.channel.channel_modes();
    let d = header.labels.len();
    let counter = u64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
    let ok = chunk[8] == 0;
    let has_phases = chunk[9] == 1;
    let f: Vec<f64> = chunk[10..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    let split = ResourceSplit {
        w_sms: f[0],
        w_tms: f[1],
        w_disp: f[2],
        phases: if has_phases { f[3..3 + 2 * n].to_vec() } else { Vec::new() },
    };
    let qfi = ok.then(|| DMatrix::from_row_slice(d, d, &f[3 + 2 * n..]));
    CachedSample { counter, split, qfi }
}

fn encode(s: &CachedSample, header: &CacheHeader) -> Result<Vec<u8>, String> {
    let n = header.channel.channel_modes();
    let d = header.labels.len();
    if !(s.split.phases.is_empty() || s.split.phases.len() == 2 * n) {
        return Err(format!("sample {} has {} phases, expected {}", s.counter, s.split.phases.len(), 2 * n));
    }
    if let Some(j) = &s.qfi {
        if j.shape() != (d, d) {
            return Err(format!("sample {} has a {:?} QFI, expected {d}x{d}", s.counter, j.shape()));
        }
    }
    let mut out = Vec::with_capacity(header.record_width());
    out.extend_from_slice(&s.counter.to_le_bytes());
    out.push(if s.qfi.is_some() { 0 } else { 1 });
    out.push(if s.split.phases.is_empty() { 0 } else { 1 });
    let mut push = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    push(s.split.w_sms);
    push(s.split.w_tms);
    push(s.split.w_disp);
    for k in 0..2 * n {
        push(s.split.phases.get(k).copied().unwrap_or(0.0));
    }
    for r in 0..d {
        for c in 0..d {
            push(s.qfi.as_ref().map_or(f64::NAN, |j| j[(r, c)]));
        }
    }
    Ok(out)
}

impl SampleCache for FileCache {
    fn get(&self, counter: u64) -> Option<CachedSample> {
        self.records.get(&counter).cloned()
    }

    fn put(&mut self, sample: CachedSample) -> gaussmetric::Result<()> {
        if self.records.contains_key(&sample.counter) {
            return Ok(());
        }
        let bytes = encode(&sample, &self.header).map_err(Error::Cache)?;
        self.file
            .write_all(&bytes)
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::Cache(format!("{}: {e}", self.path.display())))?;
        self.records.insert(sample.counter, sample);
        Ok(())
    }
}

/// Records every sample the loop touches, passing through to an optional
/// file cache.
#[derive(Default)]
pub struct Recorder<'a> {
    pub inner: Option<&'a mut FileCache>,
    pub seen: std::cell::RefCell<BTreeMap<u64, CachedSample>>,
    pub reused: std::cell::Cell<usize>,
}

impl SampleCache for Recorder<'_> {
    fn get(&self, counter: u64) -> Option<CachedSample> {
        let s = self.inner.as_ref()?.get(counter)?;
        self.reused.set(self.reused.get() + 1);
        self.seen.borrow_mut().insert(counter, s.clone());
        Some(s)
    }

    fn put(&mut self, sample: CachedSample) -> gaussmetric::Result<()> {
        if let Some(c) = self.inner.as_mut() {
            c.put(sample.clone())?;
        }
        self.seen.borrow_mut().insert(sample.counter, sample);
        Ok(())
    }
}
