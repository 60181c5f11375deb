//! On-disk capture store: a directory holding
//!
//! * `fapi.jsonl`: header line `{"format":"sitefit-fapi","version":1,"meta":{..}}`,
//!   one [`FapiRecord`] per line, then `{"end":{"records":N,"crc32":"hhhhhhhh"}}`
//!   where the CRC-32 covers every byte before the trailer line.
//! * `truth.jsonl`: same framing with format `sitefit-truth` and
//!   [`GroundTruthRecord`] lines.
//! * `fh.bin`: little-endian binary
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NRXC"
//! 4       2     version (1)
//! 6       2     n_ant
//! 8       2     n_sym
//! 10      2     n_sc
//! 12      2     reserved (0)
//! 14      4     n_records
//! 18      ..    records: slot_id u64, oru_id u16,
//!               n_ant*n_sym*n_sc (re f32, im f32) pairs, antenna-major,
//!               then symbol, then subcarrier
//! end-4   4     CRC-32 of all preceding bytes
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use num_complex::Complex32;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::StoreError;
use crate::grid::ResourceGrid;
use crate::link::records::{CampaignMeta, FapiRecord, FhRecord, GroundTruthRecord};

pub const FH_MAGIC: &[u8; 4] = b"NRXC";
pub const FH_VERSION: u16 = 1;
pub const FH_HEADER_LEN: u64 = 18;
pub const FAPI_FORMAT: &str = "sitefit-fapi";
pub const TRUTH_FORMAT: &str = "sitefit-truth";
pub const JSONL_VERSION: u32 = 1;

pub const FAPI_FILE: &str = "fapi.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const FH_FILE: &str = "fh.bin";

/// Fully loaded capture store.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureStore {
    pub meta: CampaignMeta,
    pub fapi: Vec<FapiRecord>,
    pub fh: Vec<FhRecord>,
    pub truth: Vec<GroundTruthRecord>,
}

impl CaptureStore {
    /// Fraction of FAPI records with a failed CRC.
    pub fn bler(&self) -> f64 {
        bler(&self.fapi)
    }
}

pub fn bler(fapi: &[FapiRecord]) -> f64 {
    if fapi.is_empty() {
        return 0.0;
    }
    fapi.iter().filter(|r| !r.crc.is_pass()).count() as f64 / fapi.len() as f64
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader<M> {
    format: String,
    version: u32,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    meta: Option<M>,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    records: u64,
    crc32: String,
}

#[derive(Serialize, Deserialize)]
struct TrailerLine {
    end: Trailer,
}

/// Streams a framed JSONL table.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
    hasher: crc32fast::Hasher,
    count: u64,
}

impl JsonlWriter {
    pub fn create<M: Serialize>(path: &Path, format: &str, meta: Option<&M>) -> Result<Self, StoreError> {
        let file = File::create(path).map_err(|e| StoreError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            hasher: crc32fast::Hasher::new(),
            count: 0,
        };
        let header = serde_json::json!({
            "format": format,
            "version": JSONL_VERSION,
            "meta": meta,
        });
        let mut header = header;
        if meta.is_none() {
            header.as_object_mut().expect("object").remove("meta");
        }
        w.line(&serde_json::to_string(&header).expect("header serializes"))?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<(), StoreError> {
        self.hasher.update(s.as_bytes());
        self.hasher.update(b"\n");
        writeln!(self.out, "{s}").map_err(|e| StoreError::io(&self.path, e))
    }

    pub fn write<T: Serialize>(&mut self, rec: &T) -> Result<(), StoreError> {
        let s = serde_json::to_string(rec).expect("record serializes");
        self.count += 1;
        self.line(&s)
    }

    pub fn finish(mut self) -> Result<(), StoreError> {
        let t = TrailerLine {
            end: Trailer {
                records: self.count,
                crc32: format!("{:08x}", self.hasher.clone().finalize()),
            },
        };
        let s = serde_json::to_string(&t).expect("trailer serializes");
        writeln!(self.out, "{s}").map_err(|e| StoreError::io(&self.path, e))?;
        self.out.flush().map_err(|e| StoreError::io(&self.path, e))
    }
}

/// Reads a framed JSONL table written by [`JsonlWriter`].
pub fn read_jsonl<M: DeserializeOwned, T: DeserializeOwned>(
    path: &Path,
    format: &'static str,
) -> Result<(Option<M>, Vec<T>), StoreError> {
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut hasher = crc32fast::Hasher::new();
    let mut meta = None;
    let mut records = Vec::new();
    let mut trailer: Option<Trailer> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        let lineno = i + 1;
        if trailer.is_some() {
            return Err(StoreError::Malformed {
                path: path.into(),
                line: lineno,
                detail: "data after trailer".into(),
            });
        }
        let malformed = |e: serde_json::Error| StoreError::Malformed {
            path: path.into(),
            line: lineno,
            detail: e.to_string(),
        };
        if i == 0 {
            let h: JsonlHeader<M> = serde_json::from_str(&line).map_err(|_| StoreError::BadMagic {
                path: path.into(),
                expected: format,
            })?;
            if h.format != format {
                return Err(StoreError::BadMagic {
                    path: path.into(),
                    expected: format,
                });
            }
            if h.version != JSONL_VERSION {
                return Err(StoreError::VersionMismatch {
                    path: path.into(),
                    found: h.version,
                    expected: JSONL_VERSION,
                });
            }
            meta = h.meta;
        } else if line.starts_with("{\"end\":") {
            let t: TrailerLine = serde_json::from_str(&line).map_err(malformed)?;
            trailer = Some(t.end);
            continue;
        } else {
            records.push(serde_json::from_str(&line).map_err(malformed)?);
        }
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    let Some(t) = trailer else {
        return Err(StoreError::Truncated {
            path: path.into(),
            detail: "missing trailer line".into(),
        });
    };
    let computed = hasher.finalize();
    let stored = u32::from_str_radix(&t.crc32, 16).map_err(|e| StoreError::Malformed {
        path: path.into(),
        line: 0,
        detail: format!("bad trailer checksum: {e}"),
    })?;
    if stored != computed {
        return Err(StoreError::ChecksumMismatch {
            path: path.into(),
            stored,
            computed,
        });
    }
    if t.records != records.len() as u64 {
        return Err(StoreError::Truncated {
            path: path.into(),
            detail: format!("trailer announces {} records, found {}", t.records, records.len()),
        });
    }
    Ok((meta, records))
}

fn record_len(dims: (usize, usize, usize)) -> u64 {
    10 + 8 * (dims.0 * dims.1 * dims.2) as u64
}

/// Streams fronthaul grids to `fh.bin`.
pub struct FhWriter {
    path: PathBuf,
    out: BufWriter<File>,
    hasher: crc32fast::Hasher,
    dims: (usize, usize, usize),
    expected: u32,
    written: u32,
    buf: Vec<u8>,
}

impl FhWriter {
    pub fn create(path: &Path, dims: (usize, usize, usize), n_records: u32) -> Result<Self, StoreError> {
        let fits = |v: usize| u16::try_from(v).ok();
        let (Some(a), Some(t), Some(f)) = (fits(dims.0), fits(dims.1), fits(dims.2)) else {
            return Err(StoreError::Inconsistent {
                path: path.into(),
                detail: format!("grid dims {dims:?} exceed u16"),
            });
        };
        let file = File::create(path).map_err(|e| StoreError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            hasher: crc32fast::Hasher::new(),
            dims,
            expected: n_records,
            written: 0,
            buf: Vec::new(),
        };
        let mut h = Vec::with_capacity(FH_HEADER_LEN as usize);
        h.extend_from_slice(FH_MAGIC);
        h.extend_from_slice(&FH_VERSION.to_le_bytes());
        for v in [a, t, f, 0] {
            h.extend_from_slice(&v.to_le_bytes());
        }
        h.extend_from_slice(&n_records.to_le_bytes());
        w.emit(&h)?;
        Ok(w)
    }

    fn emit(&mut self, bytes: &[u8]) -> Result<(), StoreError> {
        self.hasher.update(bytes);
        self.out.write_all(bytes).map_err(|e| StoreError::io(&self.path, e))
    }

    pub fn write(&mut self, rec: &FhRecord) -> Result<(), StoreError> {
        if rec.rx_grid.dims() != self.dims || self.written >= self.expected {
            return Err(StoreError::Inconsistent {
                path: self.path.clone(),
                detail: format!(
                    "record {} of dims {:?} does not fit store of {} records with dims {:?}",
                    self.written,
                    rec.rx_grid.dims(),
                    self.expected,
                    self.dims
                ),
            });
        }
        let mut buf = std::mem::take(&mut self.buf);
        buf.clear();
        buf.extend_from_slice(&rec.slot_id.to_le_bytes());
        buf.extend_from_slice(&rec.oru_id.to_le_bytes());
        for v in rec.rx_grid.samples() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        let r = self.emit(&buf);
        self.buf = buf;
        r?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), StoreError> {
        if self.written != self.expected {
            return Err(StoreError::Inconsistent {
                path: self.path.clone(),
                detail: format!("wrote {} of {} announced records", self.written, self.expected),
            });
        }
        let crc = self.hasher.clone().finalize();
        self.out
            .write_all(&crc.to_le_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| StoreError::io(&self.path, e))
    }
}

/// Validated random-access reader for `fh.bin`.
pub struct FhReader {
    path: PathBuf,
    file: Mutex<File>,
    dims: (usize, usize, usize),
    slot_ids: Vec<u64>,
    oru_ids: Vec<u16>,
}

impl std::fmt::Debug for FhReader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FhReader")
            .field("path", &self.path)
            .field("dims", &self.dims)
            .field("n_records", &self.slot_ids.len())
            .finish()
    }
}

impl FhReader {
    /// Opens and fully validates the file (size, checksum, unique slots).
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut file = File::open(path).map_err(|e| StoreError::io(path, e))?;
        let size = file.metadata().map_err(|e| StoreError::io(path, e))?.len();
        let mut header = [0u8; FH_HEADER_LEN as usize];
        if size < 4 || file.read_exact(&mut header[..4]).is_err() {
            return Err(StoreError::Truncated {
                path: path.into(),
                detail: "shorter than the magic".into(),
            });
        }
        if &header[..4] != FH_MAGIC {
            return Err(StoreError::BadMagic {
                path: path.into(),
                expected: "NRXC fronthaul",
            });
        }
        if size < FH_HEADER_LEN || file.read_exact(&mut header[4..]).is_err() {
            return Err(StoreError::Truncated {
                path: path.into(),
                detail: "incomplete header".into(),
            });
        }
        let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]);
        let version = u16_at(4);
        if version != FH_VERSION {
            return Err(StoreError::VersionMismatch {
                path: path.into(),
                found: u32::from(version),
                expected: u32::from(FH_VERSION),
            });
        }
        let dims = (usize::from(u16_at(6)), usize::from(u16_at(8)), usize::from(u16_at(10)));
        let n = u32::from_le_bytes(header[14..18].try_into().expect("4 bytes"));
        let rec = record_len(dims);
        let expected = FH_HEADER_LEN + u64::from(n) * rec + 4;
        if size != expected {
            return Err(StoreError::Truncated {
                path: path.into(),
                detail: format!("{size} bytes on disk, layout needs {expected}"),
            });
        }
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&header);
        let mut slot_ids = Vec::with_capacity(n as usize);
        let mut oru_ids = Vec::with_capacity(n as usize);
        let mut reader = BufReader::with_capacity(1 << 20, &mut file);
        let mut buf = vec![0u8; rec as usize];
        for _ in 0..n {
            reader.read_exact(&mut buf).map_err(|e| StoreError::io(path, e))?;
            hasher.update(&buf);
            slot_ids.push(u64::from_le_bytes(buf[..8].try_into().expect("8 bytes")));
            oru_ids.push(u16::from_le_bytes([buf[8], buf[9]]));
        }
        let mut tail = [0u8; 4];
        reader.read_exact(&mut tail).map_err(|e| StoreError::io(path, e))?;
        drop(reader);
        let stored = u32::from_le_bytes(tail);
        let computed = hasher.finalize();
        if stored != computed {
            return Err(StoreError::ChecksumMismatch {
                path: path.into(),
                stored,
                computed,
            });
        }
        let mut seen = HashSet::with_capacity(slot_ids.len());
        for (s, o) in slot_ids.iter().zip(&oru_ids) {
            if !seen.insert((*s, *o)) {
                return Err(StoreError::Inconsistent {
                    path: path.into(),
                    detail: format!("slot {s} has more than one record for oru {o}"),
                });
            }
        }
        Ok(Self {
            path: path.into(),
            file: Mutex::new(file),
            dims,
            slot_ids,
            oru_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.slot_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_ids.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn slot_ids(&self) -> &[u64] {
        &self.slot_ids
    }

    /// Index of the record of `slot_id` (first ORU).
    pub fn position(&self, slot_id: u64) -> Option<usize> {
        match self.slot_ids.binary_search(&slot_id) {
            Ok(i) => Some(i),
            Err(_) => self.slot_ids.iter().position(|&s| s == slot_id),
        }
    }

    pub fn read(&self, index: usize) -> Result<FhRecord, StoreError> {
        if index >= self.len() {
            return Err(StoreError::Inconsistent {
                path: self.path.clone(),
                detail: format!("record {index} out of range ({} records)", self.len()),
            });
        }
        let rec = record_len(self.dims);
        let mut buf = vec![0u8; rec as usize];
        {
            let mut f = self.file.lock().expect("fh file lock");
            f.seek(SeekFrom::Start(FH_HEADER_LEN + index as u64 * rec))
                .and_then(|_| f.read_exact(&mut buf))
                .map_err(|e| StoreError::io(&self.path, e))?;
        }
        let samples = buf[10..]
            .chunks_exact(8)
            .map(|c| {
                Complex32::new(
                    f32::from_le_bytes(c[..4].try_into().expect("4 bytes")),
                    f32::from_le_bytes(c[4..].try_into().expect("4 bytes")),
                )
            })
            .collect();
        let (a, t, f) = self.dims;
        Ok(FhRecord {
            slot_id: self.slot_ids[index],
            oru_id: self.oru_ids[index],
            rx_grid: ResourceGrid::from_samples(a, t, f, samples).expect("dims match record length"),
        })
    }

    pub fn read_slot(&self, slot_id: u64) -> Result<FhRecord, StoreError> {
        let i = self.position(slot_id).ok_or_else(|| StoreError::Inconsistent {
            path: self.path.clone(),
            detail: format!("no fronthaul record for slot {slot_id}"),
        })?;
        self.read(i)
    }
}

/// Store with metadata and FAPI/truth tables in memory and lazily read grids.
#[derive(Debug)]
pub struct StoreReader {
    pub dir: PathBuf,
    pub meta: CampaignMeta,
    pub fapi: Vec<FapiRecord>,
    pub truth: Vec<GroundTruthRecord>,
    pub fh: FhReader,
}

impl StoreReader {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let fapi_path = dir.join(FAPI_FILE);
        let (meta, fapi) = read_jsonl::<CampaignMeta, FapiRecord>(&fapi_path, FAPI_FORMAT)?;
        let meta = meta.ok_or_else(|| StoreError::Malformed {
            path: fapi_path.clone(),
            line: 1,
            detail: "header lacks campaign metadata".into(),
        })?;
        let (_, truth) = read_jsonl::<serde_json::Value, GroundTruthRecord>(&dir.join(TRUTH_FILE), TRUTH_FORMAT)?;
        let fh = FhReader::open(&dir.join(FH_FILE))?;
        Ok(Self {
            dir: dir.into(),
            meta,
            fapi,
            truth,
            fh,
        })
    }

    pub fn bler(&self) -> f64 {
        bler(&self.fapi)
    }

    pub fn truth_for(&self, slot_id: u64) -> Option<&GroundTruthRecord> {
        self.truth
            .binary_search_by_key(&slot_id, |t| t.slot_id)
            .ok()
            .map(|i| &self.truth[i])
    }

    pub fn load_all(self) -> Result<CaptureStore, StoreError> {
        let fh = (0..self.fh.len()).map(|i| self.fh.read(i)).collect::<Result<_, _>>()?;
        Ok(CaptureStore {
            meta: self.meta,
            fapi: self.fapi,
            fh,
            truth: self.truth,
        })
    }
}

pub fn write_store(store: &CaptureStore, dir: &Path) -> Result<(), StoreError> {
    std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let mut w = JsonlWriter::create(&dir.join(FAPI_FILE), FAPI_FORMAT, Some(&store.meta))?;
    for r in &store.fapi {
        w.write(r)?;
    }
    w.finish()?;
    let mut w = JsonlWriter::create::<()>(&dir.join(TRUTH_FILE), TRUTH_FORMAT, None)?;
    for r in &store.truth {
        w.write(r)?;
    }
    w.finish()?;
    let dims = store.fh.first().map_or(
        (store.meta.grid.n_rx, crate::grid::SYMBOLS_PER_SLOT, store.meta.grid.n_subcarriers()),
        |r| r.rx_grid.dims(),
    );
    let n = u32::try_from(store.fh.len()).map_err(|_| StoreError::Inconsistent {
        path: dir.into(),
        detail: "too many fronthaul records".into(),
    })?;
    let mut w = FhWriter::create(&dir.join(FH_FILE), dims, n)?;
    for r in &store.fh {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_store(dir: &Path) -> Result<CaptureStore, StoreError> {
    StoreReader::open(dir)?.load_all()
}
