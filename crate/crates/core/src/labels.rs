//! Ground-truth coded-bit labels for captured slots.
//!
//! Slots that decoded are labelled from their own decoded payload. A failed
//! slot is followed along its HARQ process to the next successful
//! retransmission of the same transport block; that payload is re-encoded
//! with the failed slot's own redundancy version and scrambling.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PhyError, StoreError};
use crate::features::{n_feature_channels, slot_features};
use crate::grid::{block_data_indices, DmrsPattern, GridConfig, BLOCK_PRBS, SUBCARRIERS_PER_PRB, SYMBOLS_PER_SLOT};
use crate::link::{FapiRecord, FhReader, PackedBits, StoreReader, N_HARQ_PIDS};
use crate::phy::{
    crc_check, ldpc_encode, rate_match, scramble, CodecConfig, CrcStatus, RedundancyVersion,
    ScramblingConfig, BITS_PER_SYMBOL, RV_SEQUENCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Direct,
    HarqRecovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// The chain used every allowed attempt without a successful decode.
    NoSuccessfulRetransmission,
    /// New data was scheduled on the pid before any success.
    ChainPreempted,
    /// The capture ends before the chain resolved.
    CampaignEnded,
    /// The matched payload does not satisfy its own CRC.
    CrcMismatch,
    /// Missing payload on a pass record, or a gap in the RV sequence or in
    /// the pid's schedule.
    InconsistentRecord,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::NoSuccessfulRetransmission => "no successful retransmission",
            DropReason::ChainPreempted => "chain preempted",
            DropReason::CampaignEnded => "campaign ended",
            DropReason::CrcMismatch => "crc mismatch",
            DropReason::InconsistentRecord => "inconsistent record",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSlot {
    pub slot_id: u64,
    /// Scrambled, rate-matched coded bits of this slot (length E).
    pub coded_bit_labels: PackedBits,
    pub payload: PackedBits,
    pub source: LabelSource,
    /// Slot ids from this slot to the decoding slot, inclusive.
    pub harq_chain: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSlot {
    pub slot_id: u64,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelOutput {
    pub labeled: Vec<LabeledSlot>,
    pub dropped: Vec<DroppedSlot>,
}

/// Counts per label class and drop reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub direct: usize,
    pub harq_recovered: usize,
    pub dropped: BTreeMap<String, usize>,
    /// Histogram of chain lengths of recovered slots.
    pub chain_lengths: BTreeMap<usize, usize>,
}

impl LabelOutput {
    pub fn summary(&self) -> LabelSummary {
        let mut s = LabelSummary::default();
        for l in &self.labeled {
            match l.source {
                LabelSource::Direct => s.direct += 1,
                LabelSource::HarqRecovered => {
                    s.harq_recovered += 1;
                    *s.chain_lengths.entry(l.harq_chain.len()).or_default() += 1;
                }
            }
        }
        for d in &self.dropped {
            *s.dropped.entry(d.reason.to_string()).or_default() += 1;
        }
        s
    }
}

/// Coded bits of `info` (payload followed by its CRC) as transmitted with
/// the given redundancy version and scrambling.
pub fn reencode(
    info: &[u8],
    codec: &CodecConfig,
    rv: RedundancyVersion,
    scrambling: ScramblingConfig,
) -> Result<Vec<u8>, PhyError> {
    let cw = ldpc_encode(info, codec)?;
    Ok(scramble(&rate_match(&cw, rv, codec.rate_matched_len)?, scrambling))
}

fn attempt_of(rv: u8) -> Option<usize> {
    RV_SEQUENCE.iter().position(|&r| r == rv)
}

/// Payload ∥ CRC of a pass record, checked against its CRC.
fn decoded_info(r: &FapiRecord) -> Result<(Vec<u8>, Vec<u8>), DropReason> {
    let (Some(p), Some(c)) = (&r.decoded_payload, &r.decoded_crc) else {
        return Err(DropReason::InconsistentRecord);
    };
    if !r.crc.is_pass() || p.len() != r.codec.payload_len() {
        return Err(DropReason::InconsistentRecord);
    }
    let mut info = p.0.clone();
    info.extend_from_slice(&c.0);
    match crc_check(&info) {
        Ok(CrcStatus::Pass) => Ok((p.0.clone(), info)),
        _ => Err(DropReason::CrcMismatch),
    }
}

fn label_from(target: &FapiRecord, source: &FapiRecord) -> Result<(PackedBits, PackedBits), DropReason> {
    let (payload, info) = decoded_info(source)?;
    if source.codec != target.codec {
        return Err(DropReason::InconsistentRecord);
    }
    let rv = target.redundancy_version().map_err(|_| DropReason::InconsistentRecord)?;
    let coded = reencode(&info, &target.codec, rv, target.scrambling).map_err(|_| DropReason::InconsistentRecord)?;
    let pack = |b: &[u8]| PackedBits::from_bits(b).map_err(|_| DropReason::InconsistentRecord);
    Ok((pack(&coded)?, pack(&payload)?))
}

/// Scans the FAPI table. Matching is forward-only and keyed on
/// `(ue_id, harq_pid)`; attempts are identified by their redundancy version.
/// Successive attempts are one HARQ round trip apart, so a longer gap means
/// missing records and the chain is dropped.
pub fn extract_labels_from_records(fapi: &[FapiRecord], max_attempts: usize) -> LabelOutput {
    let max_attempts = max_attempts.clamp(1, RV_SEQUENCE.len());
    let mut order: Vec<usize> = (0..fapi.len()).collect();
    order.sort_by_key(|&i| fapi[i].slot_id);
    let mut chains: HashMap<(u16, u8), Vec<usize>> = HashMap::new();
    for &i in &order {
        chains.entry((fapi[i].ue_id, fapi[i].harq_pid)).or_default().push(i);
    }
    let mut out = LabelOutput::default();
    for list in chains.values() {
        for (k, &i) in list.iter().enumerate() {
            let r = &fapi[i];
            let result = if r.crc.is_pass() {
                label_from(r, r).map(|(c, p)| (c, p, LabelSource::Direct, vec![r.slot_id]))
            } else {
                follow_chain(fapi, &list[k..], max_attempts)
            };
            match result {
                Ok((coded_bit_labels, payload, source, harq_chain)) => out.labeled.push(LabeledSlot {
                    slot_id: r.slot_id,
                    coded_bit_labels,
                    payload,
                    source,
                    harq_chain,
                }),
                Err(reason) => out.dropped.push(DroppedSlot {
                    slot_id: r.slot_id,
                    reason,
                }),
            }
        }
    }
    out.labeled.sort_by_key(|l| l.slot_id);
    out.dropped.sort_by_key(|d| d.slot_id);
    out
}

type Found = (PackedBits, PackedBits, LabelSource, Vec<u64>);

/// `list[0]` is the failed record; the rest are later records of its pid.
fn follow_chain(fapi: &[FapiRecord], list: &[usize], max_attempts: usize) -> Result<Found, DropReason> {
    let first = &fapi[list[0]];
    let mut attempt = attempt_of(first.rv).ok_or(DropReason::InconsistentRecord)?;
    let mut chain = vec![first.slot_id];
    for &j in &list[1..] {
        if attempt + 1 >= max_attempts {
            return Err(DropReason::NoSuccessfulRetransmission);
        }
        let s = &fapi[j];
        if s.slot_id != chain[chain.len() - 1] + N_HARQ_PIDS as u64 {
            return Err(DropReason::InconsistentRecord);
        }
        if s.new_data_indicator {
            return Err(DropReason::ChainPreempted);
        }
        let a = attempt_of(s.rv).ok_or(DropReason::InconsistentRecord)?;
        if a != attempt + 1 {
            return Err(DropReason::InconsistentRecord);
        }
        chain.push(s.slot_id);
        if s.crc.is_pass() {
            let (c, p) = label_from(first, s)?;
            return Ok((c, p, LabelSource::HarqRecovered, chain));
        }
        attempt = a;
    }
    if attempt + 1 >= max_attempts {
        Err(DropReason::NoSuccessfulRetransmission)
    } else {
        Err(DropReason::CampaignEnded)
    }
}

pub fn extract_labels(store: &StoreReader) -> LabelOutput {
    extract_labels_from_records(&store.fapi, store.meta.max_attempts)
}

/// Coded-bit positions of each 4-PRB block, in slot bit order.
pub fn block_label_indices(cfg: &GridConfig) -> Vec<Vec<usize>> {
    block_data_indices(cfg)
        .into_iter()
        .map(|res| {
            res.into_iter()
                .flat_map(|i| (0..BITS_PER_SYMBOL).map(move |b| BITS_PER_SYMBOL * i + b))
                .collect()
        })
        .collect()
}

/// Data-RE mask `[T][F]` of one block (1 = data).
pub fn block_mask(cfg: &GridConfig) -> Vec<u8> {
    let b = cfg.block_config();
    let n_sc = b.n_subcarriers();
    let mut m = vec![0u8; SYMBOLS_PER_SLOT * n_sc];
    for (t, f) in b.data_positions() {
        m[t * n_sc + f] = 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSlot {
    pub slot_id: u64,
    pub fail: bool,
    pub labels: PackedBits,
}

/// Selected slots; each expands into one sample per 4-PRB block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingDataset {
    pub grid: GridConfig,
    pub slots: Vec<DatasetSlot>,
}

impl TrainingDataset {
    pub fn blocks_per_slot(&self) -> usize {
        self.grid.n_blocks()
    }

    pub fn n_samples(&self) -> usize {
        self.slots.len() * self.blocks_per_slot()
    }

    pub fn n_fail_slots(&self) -> usize {
        self.slots.iter().filter(|s| s.fail).count()
    }

    pub fn slot_ids(&self) -> Vec<u64> {
        self.slots.iter().map(|s| s.slot_id).collect()
    }

    /// `(slot index, block)` of sample `i`.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        (i / self.blocks_per_slot(), i % self.blocks_per_slot())
    }
}

/// Draws `n_slots` labelled slots, `round(n_slots * fail_fraction)` of them
/// recovered through HARQ, without replacement.
pub fn build_dataset<R: Rng>(
    labeled: &[LabeledSlot],
    grid: &GridConfig,
    n_slots: usize,
    target_fail_fraction: f64,
    rng: &mut R,
) -> Result<TrainingDataset, PhyError> {
    if !(0.0..=1.0).contains(&target_fail_fraction) {
        return Err(PhyError::InvalidParameter(format!(
            "fail fraction {target_fail_fraction} outside [0, 1]"
        )));
    }
    if grid.n_blocks() == 0 {
        return Err(PhyError::InvalidParameter(format!(
            "grid of {} PRBs holds no {BLOCK_PRBS}-PRB block",
            grid.n_prb
        )));
    }
    let e = grid.coded_bits();
    if let Some(bad) = labeled.iter().find(|l| l.coded_bit_labels.len() != e) {
        return Err(PhyError::LengthMismatch {
            what: "slot labels",
            expected: e,
            got: bad.coded_bit_labels.len(),
        });
    }
    let n_fail = (n_slots as f64 * target_fail_fraction).round() as usize;
    let n_pass = n_slots - n_fail;
    let pass: Vec<&LabeledSlot> = labeled.iter().filter(|l| l.source == LabelSource::Direct).collect();
    let fail: Vec<&LabeledSlot> = labeled.iter().filter(|l| l.source == LabelSource::HarqRecovered).collect();
    if pass.len() < n_pass || fail.len() < n_fail {
        return Err(PhyError::InvalidParameter(format!(
            "need {n_pass} pass and {n_fail} recovered slots, have {} and {}",
            pass.len(),
            fail.len()
        )));
    }
    let mut chosen: Vec<&LabeledSlot> = sample(rng, pass.len(), n_pass).into_iter().map(|i| pass[i]).collect();
    chosen.extend(sample(rng, fail.len(), n_fail).into_iter().map(|i| fail[i]));
    chosen.sort_by_key(|l| l.slot_id);
    Ok(TrainingDataset {
        grid: *grid,
        slots: chosen
            .into_iter()
            .map(|l| DatasetSlot {
                slot_id: l.slot_id,
                fail: l.source == LabelSource::HarqRecovered,
                labels: l.coded_bit_labels.clone(),
            })
            .collect(),
    })
}

/// One 4-PRB block with its features `[C][T][48]` and coded-bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub slot_id: u64,
    pub block: usize,
    pub fail: bool,
    pub features: Vec<f32>,
    pub labels: Vec<u8>,
}

/// Materializes every sample of one dataset slot from its fronthaul grid.
pub fn slot_samples(
    ds: &TrainingDataset,
    slot: &DatasetSlot,
    fh: &FhReader,
    label_idx: &[Vec<usize>],
) -> Result<Vec<TrainingSample>, StoreError> {
    let rec = fh.read_slot(slot.slot_id)?;
    let dmrs = DmrsPattern::for_slot(&ds.grid, slot.slot_id);
    let inconsistent = |e: PhyError| StoreError::Inconsistent {
        path: PathBuf::from(format!("slot {}", slot.slot_id)),
        detail: e.to_string(),
    };
    let feats = slot_features(&rec.rx_grid, &ds.grid, &dmrs).map_err(inconsistent)?;
    let blocks = feats.blocks(&ds.grid).map_err(inconsistent)?;
    Ok(blocks
        .into_iter()
        .enumerate()
        .map(|(b, features)| TrainingSample {
            slot_id: slot.slot_id,
            block: b,
            fail: slot.fail,
            features,
            labels: slot.labels.gather(label_idx[b].iter().copied()),
        })
        .collect())
}

/// Dataset file `dataset.bin`, little-endian:
///
/// ```text
/// offset  size  field
/// 0       4     magic "NRXD"
/// 4       2     version (1)
/// 6       2     n_channels
/// 8       2     n_sym
/// 10      2     n_sc (block width)
/// 12      4     label_len (bits per sample)
/// 16      4     n_samples
/// 20      ..    records: slot_id u64, block u16, fail u8,
///               n_channels*n_sym*n_sc f32 features (channel, symbol, subcarrier),
///               ceil(label_len/8) label bytes (bit i in byte i/8 at position i%8)
/// end-4   4     CRC-32 of all preceding bytes
/// ```
pub const DATASET_MAGIC: &[u8; 4] = b"NRXD";
pub const DATASET_VERSION: u16 = 1;
const DATASET_HEADER_LEN: usize = 20;

/// Shape of every sample in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleShape {
    pub n_channels: usize,
    pub n_sym: usize,
    pub n_sc: usize,
    pub label_len: usize,
}

impl SampleShape {
    pub fn for_grid(cfg: &GridConfig) -> Self {
        let b = cfg.block_config();
        Self {
            n_channels: n_feature_channels(cfg.n_rx),
            n_sym: SYMBOLS_PER_SLOT,
            n_sc: BLOCK_PRBS * SUBCARRIERS_PER_PRB,
            label_len: b.coded_bits(),
        }
    }

    pub fn feature_len(&self) -> usize {
        self.n_channels * self.n_sym * self.n_sc
    }

    fn record_len(&self) -> usize {
        11 + 4 * self.feature_len() + self.label_len.div_ceil(8)
    }
}

/// Human-readable companion of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source_store: String,
    pub grid: GridConfig,
    pub shape: SampleShape,
    pub n_slots: usize,
    pub n_fail_slots: usize,
    pub n_samples: usize,
    pub target_fail_fraction: f64,
    pub seed: u64,
    pub labels: LabelSummary,
    pub slot_ids: Vec<u64>,
}

/// Writes every sample of `ds` to `path`.
pub fn write_dataset(ds: &TrainingDataset, fh: &FhReader, path: &Path) -> Result<(), StoreError> {
    let shape = SampleShape::for_grid(&ds.grid);
    let label_idx = block_label_indices(&ds.grid);
    let io = |e| StoreError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut hasher = crc32fast::Hasher::new();
    let mut emit = |bytes: &[u8], out: &mut BufWriter<File>| -> Result<(), StoreError> {
        hasher.update(bytes);
        out.write_all(bytes).map_err(|e| StoreError::io(path, e))
    };
    let too_big = |what: &str| StoreError::Inconsistent {
        path: path.into(),
        detail: format!("{what} does not fit the header field"),
    };
    let mut h = Vec::with_capacity(DATASET_HEADER_LEN);
    h.extend_from_slice(DATASET_MAGIC);
    h.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    for v in [shape.n_channels, shape.n_sym, shape.n_sc] {
        h.extend_from_slice(&u16::try_from(v).map_err(|_| too_big("dimension"))?.to_le_bytes());
    }
    h.extend_from_slice(&u32::try_from(shape.label_len).map_err(|_| too_big("label length"))?.to_le_bytes());
    h.extend_from_slice(&u32::try_from(ds.n_samples()).map_err(|_| too_big("sample count"))?.to_le_bytes());
    emit(&h, &mut out)?;
    let mut buf = Vec::with_capacity(shape.record_len());
    for slot in &ds.slots {
        for s in slot_samples(ds, slot, fh, &label_idx)? {
            buf.clear();
            buf.extend_from_slice(&s.slot_id.to_le_bytes());
            buf.extend_from_slice(&(s.block as u16).to_le_bytes());
            buf.push(u8::from(s.fail));
            for v in &s.features {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            let packed = PackedBits::from_bits(&s.labels).expect("labels are bits");
            buf.extend_from_slice(&packed.to_bytes());
            emit(&buf, &mut out)?;
        }
    }
    let crc = hasher.finalize();
    out.write_all(&crc.to_le_bytes()).map_err(io)?;
    out.flush().map_err(io)
}

/// A dataset file loaded into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub shape: SampleShape,
    pub samples: Vec<TrainingSample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn slot_ids(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.samples.iter().map(|s| s.slot_id).collect();
        v.dedup();
        v
    }
}

pub fn read_dataset(path: &Path) -> Result<SampleSet, StoreError> {
    let mut f = BufReader::new(File::open(path).map_err(|e| StoreError::io(path, e))?);
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| StoreError::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != DATASET_MAGIC {
        return Err(StoreError::BadMagic {
            path: path.into(),
            expected: "NRXD dataset",
        });
    }
    if bytes.len() < DATASET_HEADER_LEN + 4 {
        return Err(StoreError::Truncated {
            path: path.into(),
            detail: "incomplete header".into(),
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u16_at(4);
    if version != DATASET_VERSION {
        return Err(StoreError::VersionMismatch {
            path: path.into(),
            found: u32::from(version),
            expected: u32::from(DATASET_VERSION),
        });
    }
    let shape = SampleShape {
        n_channels: usize::from(u16_at(6)),
        n_sym: usize::from(u16_at(8)),
        n_sc: usize::from(u16_at(10)),
        label_len: u32_at(12) as usize,
    };
    let n = u32_at(16) as usize;
    let rec = shape.record_len();
    let expected = DATASET_HEADER_LEN + n * rec + 4;
    if bytes.len() != expected {
        return Err(StoreError::Truncated {
            path: path.into(),
            detail: format!("{} bytes on disk, layout needs {expected}", bytes.len()),
        });
    }
    let body = bytes.len() - 4;
    let stored = u32_at(body);
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(StoreError::ChecksumMismatch {
            path: path.into(),
            stored,
            computed,
        });
    }
    let fl = shape.feature_len();
    let samples = bytes[DATASET_HEADER_LEN..body]
        .chunks_exact(rec)
        .map(|r| {
            let features = r[11..11 + 4 * fl]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let labels = PackedBits::from_bytes(&r[11 + 4 * fl..], shape.label_len)
                .map_err(|e| StoreError::Inconsistent {
                    path: path.into(),
                    detail: e.to_string(),
                })?
                .to_bits();
            Ok(TrainingSample {
                slot_id: u64::from_le_bytes(r[..8].try_into().expect("8 bytes")),
                block: usize::from(u16::from_le_bytes([r[8], r[9]])),
                fail: r[10] != 0,
                features,
                labels,
            })
        })
        .collect::<Result<_, StoreError>>()?;
    Ok(SampleSet { shape, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::BitVec;
    use crate::phy::crc_attach;

    fn codec() -> CodecConfig {
        CodecConfig::new(6, 240).unwrap()
    }

    fn rec(slot: u64, pid: u8, rv: u8, ndi: bool, payload: Option<&[u8]>) -> FapiRecord {
        let c = codec();
        let info = payload.map(|p| crc_attach(p).unwrap());
        FapiRecord {
            slot_id: slot,
            ue_id: 0,
            harq_pid: pid,
            rv,
            new_data_indicator: ndi,
            scrambling: ScramblingConfig::for_pusch(9, slot),
            codec: c,
            n_prb: 1,
            crc: if payload.is_some() { CrcStatus::Pass } else { CrcStatus::Fail },
            decoded_payload: payload.map(|p| BitVec(p.to_vec())),
            decoded_crc: info.map(|i| BitVec(i[c.payload_len()..].to_vec())),
        }
    }

    fn payload(seed: u8) -> Vec<u8> {
        (0..codec().payload_len()).map(|i| ((i as u8).wrapping_mul(seed) >> 3) & 1).collect()
    }

    fn expected(slot: u64, rv: u8, p: &[u8]) -> Vec<u8> {
        let c = codec();
        reencode(
            &crc_attach(p).unwrap(),
            &c,
            RedundancyVersion::new(rv, &c).unwrap(),
            ScramblingConfig::for_pusch(9, slot),
        )
        .unwrap()
    }

    #[test]
    fn recovered_label_uses_failed_slot_encoding() {
        let p = payload(7);
        let fapi = vec![rec(10, 3, 0, true, None), rec(11, 5, 0, true, Some(&payload(3))), rec(26, 3, 2, false, Some(&p))];
        let out = extract_labels_from_records(&fapi, 4);
        assert!(out.dropped.is_empty());
        assert_eq!(out.labeled.len(), 3);
        let l = &out.labeled[0];
        assert_eq!(l.slot_id, 10);
        assert_eq!(l.source, LabelSource::HarqRecovered);
        assert_eq!(l.harq_chain, vec![10, 26]);
        assert_eq!(l.coded_bit_labels.to_bits(), expected(10, 0, &p));
        assert_ne!(l.coded_bit_labels.to_bits(), expected(26, 2, &p));
        assert_eq!(out.labeled[2].coded_bit_labels.to_bits(), expected(26, 2, &p));
        assert_eq!(out.labeled[2].source, LabelSource::Direct);
    }

    #[test]
    fn drop_reasons() {
        let p = payload(5);
        let mut bad = rec(18, 2, 2, false, Some(&p));
        bad.decoded_crc.as_mut().unwrap().0[0] ^= 1;
        let mut missing = rec(6, 6, 0, true, Some(&p));
        missing.decoded_payload = None;
        let mut fapi = vec![
            // pid 0: exhausted after four failures
            rec(0, 0, 0, true, None),
            rec(16, 0, 2, false, None),
            rec(32, 0, 3, false, None),
            rec(48, 0, 1, false, None),
            rec(64, 0, 0, true, Some(&p)),
            // pid 1: new data before success
            rec(1, 1, 0, true, None),
            rec(17, 1, 0, true, Some(&p)),
            // pid 2: retransmission decodes to a payload failing its CRC
            rec(2, 2, 0, true, None),
            bad,
            // pid 4: capture ends
            rec(4, 4, 0, true, None),
            // pid 5: gap in the RV sequence
            rec(5, 5, 0, true, None),
            rec(21, 5, 3, false, Some(&p)),
            missing,
            // pid 7: a round trip is missing
            rec(7, 7, 0, true, None),
            rec(39, 7, 2, false, Some(&p)),
        ];
        fapi.sort_by_key(|r| r.slot_id);
        let out = extract_labels_from_records(&fapi, 4);
        let reason = |s: u64| out.dropped.iter().find(|d| d.slot_id == s).map(|d| d.reason);
        for s in [0, 16, 32, 48] {
            assert_eq!(reason(s), Some(DropReason::NoSuccessfulRetransmission));
        }
        assert_eq!(reason(1), Some(DropReason::ChainPreempted));
        assert_eq!(reason(2), Some(DropReason::CrcMismatch));
        assert_eq!(reason(18), Some(DropReason::CrcMismatch));
        assert_eq!(reason(4), Some(DropReason::CampaignEnded));
        assert_eq!(reason(5), Some(DropReason::InconsistentRecord));
        assert_eq!(reason(6), Some(DropReason::InconsistentRecord));
        assert_eq!(reason(7), Some(DropReason::InconsistentRecord));
        assert_eq!(DropReason::NoSuccessfulRetransmission.to_string(), "no successful retransmission");
        let s = out.summary();
        assert_eq!(s.dropped["no successful retransmission"], 4);
        assert_eq!(out.labeled.len() + out.dropped.len(), fapi.len());
    }

    #[test]
    fn fewer_allowed_attempts_end_chains_early() {
        let p = payload(1);
        let fapi = vec![rec(0, 0, 0, true, None), rec(16, 0, 2, false, None), rec(32, 0, 3, false, Some(&p))];
        let out = extract_labels_from_records(&fapi, 2);
        assert_eq!(out.dropped[0].reason, DropReason::NoSuccessfulRetransmission);
        let out = extract_labels_from_records(&fapi, 4);
        assert_eq!(out.labeled.len(), 3);
        assert_eq!(out.labeled[0].harq_chain, vec![0, 16, 32]);
    }

    #[test]
    fn block_mask_counts_data_res() {
        let cfg = GridConfig::new(8, 1).unwrap();
        let m = block_mask(&cfg);
        assert_eq!(m.iter().filter(|&&v| v == 1).count(), cfg.block_config().n_data_re());
        let idx = block_label_indices(&cfg);
        assert_eq!(idx.len(), 2);
        assert!(idx.iter().all(|v| v.len() == cfg.block_config().coded_bits()));
    }

    #[test]
    fn dataset_selection_respects_fraction() {
        let cfg = GridConfig::new(4, 1).unwrap();
        let e = cfg.coded_bits();
        let mk = |i: u64, src| LabeledSlot {
            slot_id: i,
            coded_bit_labels: PackedBits::zeros(e),
            payload: PackedBits::zeros(4),
            source: src,
            harq_chain: vec![i],
        };
        let labeled: Vec<LabeledSlot> = (0..100)
            .map(|i| mk(i, if i % 4 == 0 { LabelSource::HarqRecovered } else { LabelSource::Direct }))
            .collect();
        let mut rng = crate::seed::rng_for(&[1]);
        let ds = build_dataset(&labeled, &cfg, 40, 0.25, &mut rng).unwrap();
        assert_eq!(ds.slots.len(), 40);
        assert_eq!(ds.n_fail_slots(), 10);
        assert!(ds.slots.windows(2).all(|w| w[0].slot_id < w[1].slot_id));
        let ds0 = build_dataset(&labeled, &cfg, 40, 0.0, &mut rng).unwrap();
        assert_eq!(ds0.n_fail_slots(), 0);
        assert!(build_dataset(&labeled, &cfg, 40, 0.9, &mut rng).is_err());
        assert!(build_dataset(&labeled, &cfg, 10, 1.5, &mut rng).is_err());
    }
}
